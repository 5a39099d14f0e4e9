"""Closed-form latent attention: training and masked inference.

Training fits, for every ordered patch pair (m, n), a linear value map that
predicts patch m's latent code from patch n's, plus an affine confidence
model that predicts the negative log of that pair's error from the source
latent.  Both are plain ridge regressions with closed-form solutions, so
training is deterministic and has no learning rate or initialization.

Inference blends the pair-wise predictions of each target patch with softmax
weights over the confidence logits; masked sources get a -inf logit and hence
exactly zero weight.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
from scipy.linalg import cho_factor, cho_solve

from .errors import NumericalError, ValidationError
from .patches import (
    NormStats,
    PatchedSeries,
    PatchGrid,
    SnapshotSet,
    patchify,
    unpatchify,
)
from .pod import LatentSeries, PatchPodModel, decode, encode, fit_patch_pod

#: Relative scale of the automatic ridge: lambda = RIDGE_SCALE * tr(G) / N_e,
#: where G is the source patch's latent Gram matrix.
RIDGE_SCALE = 1e-8

#: Default floor inside log(pair error); exact pairs would otherwise produce
#: infinite regression targets.
DEFAULT_ERROR_FLOOR = 1e-12

_PREDICT_CHUNK = 128  # snapshots per inference block, bounds peak memory


@dataclass(frozen=True)
class MaskSpec:
    """Set of unmasked (observed) patch indices for one scenario."""

    unmasked: tuple[int, ...]
    n_patches: int
    seed: int | None = None

    def __post_init__(self):
        idx = tuple(int(i) for i in self.unmasked)
        if len(set(idx)) != len(idx):
            raise ValidationError(f"duplicate unmasked indices: {idx}")
        if any(i < 0 or i >= self.n_patches for i in idx):
            raise ValidationError(
                f"unmasked indices out of range [0, {self.n_patches}): {idx}"
            )
        object.__setattr__(self, "unmasked", tuple(sorted(idx)))
        object.__setattr__(self, "n_patches", int(self.n_patches))

    @classmethod
    def random(cls, n_patches: int, coverage: float, seed: int) -> "MaskSpec":
        """Draw round(coverage * N) unmasked patches (at least one)."""
        if not 0.0 < coverage <= 1.0:
            raise ValidationError(f"coverage must be in (0, 1], got {coverage}")
        k = max(1, int(round(coverage * n_patches)))
        rng = np.random.default_rng(seed)
        idx = rng.choice(n_patches, size=k, replace=False)
        return cls(tuple(int(i) for i in idx), n_patches, seed=seed)

    @property
    def coverage(self) -> float:
        return len(self.unmasked) / self.n_patches

    @property
    def masked(self) -> tuple[int, ...]:
        observed = set(self.unmasked)
        return tuple(i for i in range(self.n_patches) if i not in observed)


def pixel_mask(grid: PatchGrid, mask: MaskSpec) -> np.ndarray:
    """Boolean (H, W) map of pixels covered by unmasked patches."""
    if mask.n_patches != grid.n_patches:
        raise ValidationError(
            f"mask over {mask.n_patches} patches does not fit grid with "
            f"{grid.n_patches}"
        )
    obs = np.zeros((grid.rows, grid.cols), dtype=bool)
    for i in mask.unmasked:
        obs[i // grid.cols, i % grid.cols] = True
    return np.repeat(np.repeat(obs, grid.patch_size, axis=0), grid.patch_size, axis=1)


@dataclass(frozen=True, eq=False)
class MaskedLatentSnapshot:
    """One latent snapshot with rows at masked indices set exactly to zero."""

    values: np.ndarray  # (N, N_e)
    mask: MaskSpec

    def __post_init__(self):
        arr = np.ascontiguousarray(np.asarray(self.values, dtype=np.float64))
        if arr.ndim != 2 or arr.shape[0] != self.mask.n_patches:
            raise ValidationError(
                f"latent snapshot shape {arr.shape} inconsistent with mask over "
                f"{self.mask.n_patches} patches"
            )
        if not np.isfinite(arr).all():
            raise ValidationError("latent snapshot contains NaN or Inf")
        masked = list(self.mask.masked)
        if masked and np.any(arr[masked] != 0.0):
            raise ValidationError("rows at masked indices must be exactly zero")
        arr.setflags(write=False)
        object.__setattr__(self, "values", arr)

    @classmethod
    def from_latents(cls, values: np.ndarray, mask: MaskSpec) -> "MaskedLatentSnapshot":
        """Zero the masked rows of a full latent snapshot."""
        arr = np.array(values, dtype=np.float64, copy=True)
        arr[list(mask.masked)] = 0.0
        return cls(arr, mask)


@dataclass(frozen=True, eq=False)
class AttentionModel:
    """Fitted value and attention tensors plus the compression they act on.

    value_maps[m, n] is the N_e x N_e map predicting patch m from patch n;
    attn_vectors[m, n] / attn_intercepts[m, n] give that pair's confidence
    logit as an affine function of the source latent.  pair_losses[m, n] is
    the training-mean squared pair error (diagnostics, drives the
    predictive-power map).  ridge_lambda None means the scale-aware default.
    """

    pod: PatchPodModel
    norm_stats: NormStats
    value_maps: np.ndarray       # (N, N, N_e, N_e)
    attn_vectors: np.ndarray     # (N, N, N_e)
    attn_intercepts: np.ndarray  # (N, N)
    pair_losses: np.ndarray      # (N, N)
    ridge_lambda: float | None
    error_floor: float
    use_intercept: bool

    def __post_init__(self):
        n, e = self.pod.grid.n_patches, self.pod.latent_dim
        shapes = {
            "value_maps": (n, n, e, e),
            "attn_vectors": (n, n, e),
            "attn_intercepts": (n, n),
            "pair_losses": (n, n),
        }
        for name, want in shapes.items():
            arr = np.ascontiguousarray(np.asarray(getattr(self, name), dtype=np.float64))
            if arr.shape != want:
                raise ValidationError(f"{name} shape {arr.shape} != {want}")
            if not np.isfinite(arr).all():
                raise ValidationError(f"{name} contains NaN or Inf")
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        if self.error_floor <= 0.0:
            raise ValidationError(f"error_floor must be positive, got {self.error_floor}")
        diag = np.arange(n)
        if not np.array_equal(self.value_maps[diag, diag], np.tile(np.eye(e), (n, 1, 1))):
            raise ValidationError("diagonal value maps must be the identity")
        if np.any(self.pair_losses < 0.0) or np.any(self.pair_losses[diag, diag] != 0.0):
            raise ValidationError("pair losses must be nonnegative with a zero diagonal")

    @property
    def grid(self) -> PatchGrid:
        return self.pod.grid

    @property
    def n_patches(self) -> int:
        return self.pod.grid.n_patches

    @property
    def latent_dim(self) -> int:
        return self.pod.latent_dim


def _resolve_ridge(
    gram: np.ndarray,
    latent_dim: int,
    ridge_lambda: float | None,
    energy_floor: float = 0.0,
) -> float:
    """Per-source ridge: scale-aware default, or the explicit value.

    The default follows the source's own latent energy but never drops below
    the global mean energy (``energy_floor``): a near-constant source patch
    would otherwise get a vanishing ridge and an unboundedly amplifying value
    map, which turns input noise into huge predictions.
    """
    if ridge_lambda is None:
        return RIDGE_SCALE * max(float(np.trace(gram)), energy_floor) / latent_dim
    if ridge_lambda < 0.0:
        raise ValidationError(f"ridge_lambda must be nonnegative, got {ridge_lambda}")
    return float(ridge_lambda)


def _cross_grams(values: np.ndarray) -> np.ndarray:
    """All pairwise latent Gram blocks: G[m, n] = sum_t z_m(t) z_n(t)^T."""
    t, n, e = values.shape
    flat = values.reshape(t, n * e)
    full = flat.T @ flat
    return full.reshape(n, e, n, e).transpose(0, 2, 1, 3)


def fit_value_tensor(
    latent: LatentSeries, ridge_lambda: float | None = None
) -> tuple[np.ndarray, np.ndarray]:
    """Fit all pair-wise value maps by ridge-regularized least squares.

    Solves W_mn = argmin_W  sum_t ||z_m(t) - W z_n(t)||^2 + lambda ||W||_F^2
    through the normal equations W = (Z_m Z_n^T)(Z_n Z_n^T + lambda I)^-1.
    Diagonal pairs are the identity with zero error by construction.

    Returns (value_maps, pair_errors) where pair_errors[m, n, t] is the
    per-snapshot squared error, the regression target of the attention fit.
    """
    t, n, e = latent.values.shape
    if t < e:
        warnings.warn(
            f"{t} training snapshots for latent dimension {e}: pair regressions "
            "are underdetermined and rely on the ridge term",
            stacklevel=2,
        )
    grams = _cross_grams(latent.values)
    mean_energy = float(np.sum(latent.values**2)) / n  # mean per-patch gram trace
    value_maps = np.empty((n, n, e, e))
    pair_errors = np.empty((n, n, t))
    eye = np.eye(e)
    for src in range(n):
        lam = _resolve_ridge(grams[src, src], e, ridge_lambda, mean_energy)
        system = grams[src, src] + lam * eye
        try:
            factor = cho_factor(system)
        except np.linalg.LinAlgError as exc:
            raise NumericalError(
                f"normal matrix of source patch {src} is singular; "
                "pass a positive ridge_lambda"
            ) from exc
        rhs = grams[:, src].transpose(2, 0, 1).reshape(e, n * e)  # G_mn^T stacked
        sol = cho_solve(factor, rhs)                               # (e, n*e)
        value_maps[:, src] = sol.reshape(e, n, e).transpose(1, 2, 0)
        value_maps[src, src] = eye
        preds = np.einsum("mef,tf->tme", value_maps[:, src], latent.values[:, src, :])
        diff = preds - latent.values
        pair_errors[:, src, :] = np.sum(diff * diff, axis=2).T
        pair_errors[src, src, :] = 0.0
    return value_maps, pair_errors


def fit_attention_tensor(
    latent: LatentSeries,
    pair_errors: np.ndarray,
    ridge_lambda: float | None = None,
    error_floor: float = DEFAULT_ERROR_FLOOR,
    use_intercept: bool = True,
) -> tuple[np.ndarray, np.ndarray]:
    """Fit the per-pair confidence model on negative log pair errors.

    For each pair (m, n) regresses -log(max(err_mn(t), floor)) on the source
    latent z_n(t), by ridge least squares with an unpenalized intercept (or
    through the origin when ``use_intercept`` is off).  Diagonal pairs get a
    zero vector and the confidence ceiling -log(floor) as intercept; they are
    excluded at inference anyway.
    """
    if error_floor <= 0.0:
        raise ValidationError(f"error_floor must be positive, got {error_floor}")
    t, n, e = latent.values.shape
    if pair_errors.shape != (n, n, t):
        raise ValidationError(
            f"pair_errors shape {pair_errors.shape} != {(n, n, t)}"
        )
    targets = -np.log(np.maximum(pair_errors, error_floor))  # (N, N, T)
    mean_energy = float(np.sum(latent.values**2)) / n
    attn_vectors = np.empty((n, n, e))
    attn_intercepts = np.zeros((n, n))
    eye = np.eye(e)
    for src in range(n):
        z = latent.values[:, src, :]          # (T, e)
        gram = z.T @ z
        lam = _resolve_ridge(gram, e, ridge_lambda, mean_energy)
        y = targets[:, src, :].T              # (T, N) one column per target m
        if use_intercept:
            zsum = z.sum(axis=0)
            system = np.empty((e + 1, e + 1))
            system[:e, :e] = gram + lam * eye
            system[:e, e] = zsum
            system[e, :e] = zsum
            system[e, e] = t
            rhs = np.vstack([z.T @ y, y.sum(axis=0)])
            try:
                sol = np.linalg.solve(system, rhs)
            except np.linalg.LinAlgError as exc:
                raise NumericalError(
                    f"attention system of source patch {src} is singular; "
                    "pass a positive ridge_lambda"
                ) from exc
            attn_vectors[:, src, :] = sol[:e].T
            attn_intercepts[:, src] = sol[e]
        else:
            try:
                factor = cho_factor(gram + lam * eye)
            except np.linalg.LinAlgError as exc:
                raise NumericalError(
                    f"attention system of source patch {src} is singular; "
                    "pass a positive ridge_lambda"
                ) from exc
            attn_vectors[:, src, :] = cho_solve(factor, z.T @ y).T
        attn_vectors[src, src, :] = 0.0
        attn_intercepts[src, src] = -np.log(error_floor)
    return attn_vectors, attn_intercepts


def train_attention_model(
    train_fields: SnapshotSet,
    patch_size: int,
    latent_dim: int,
    *,
    ridge_lambda: float | None = None,
    error_floor: float = DEFAULT_ERROR_FLOOR,
    use_intercept: bool = True,
) -> AttentionModel:
    """Full training pipeline on standardized training snapshots.

    ``train_fields`` must carry normalization stats (see
    :func:`lamp.patches.normalize`); the stats are recorded in the model so
    raw inference inputs can be standardized consistently.
    """
    if train_fields.norm_stats is None:
        raise ValidationError(
            "training snapshots must be normalized (norm_stats missing)"
        )
    series = patchify(train_fields, patch_size)
    pod = fit_patch_pod(series, latent_dim)
    latent = encode(pod, series)
    value_maps, pair_errors = fit_value_tensor(latent, ridge_lambda)
    attn_vectors, attn_intercepts = fit_attention_tensor(
        latent, pair_errors, ridge_lambda, error_floor, use_intercept
    )
    return AttentionModel(
        pod=pod,
        norm_stats=train_fields.norm_stats,
        value_maps=value_maps,
        attn_vectors=attn_vectors,
        attn_intercepts=attn_intercepts,
        pair_losses=pair_errors.mean(axis=2),
        ridge_lambda=ridge_lambda,
        error_floor=error_floor,
        use_intercept=use_intercept,
    )


def softmax_row(logits: np.ndarray) -> np.ndarray:
    """Numerically stable softmax over a vector that may contain -inf.

    -inf entries map to exactly zero weight; the finite entries are shifted
    by their maximum before exponentiation.  All--inf input is rejected.
    """
    a = np.asarray(logits, dtype=np.float64)
    if a.ndim != 1:
        raise ValidationError(f"softmax_row expects a vector, got shape {a.shape}")
    if np.any(np.isnan(a)) or np.any(a == np.inf):
        raise ValidationError("softmax logits must be finite or -inf")
    finite = np.isfinite(a)
    if not finite.any():
        raise ValidationError("softmax over a row with no finite entries")
    w = np.exp(a - a[finite].max())
    return w / w.sum()


def _predict_block(
    model: AttentionModel,
    z: np.ndarray,
    sources: np.ndarray,
    targets: np.ndarray,
) -> np.ndarray:
    """Softmax-blended pair predictions for target rows of a latent block.

    z is (T, N, N_e) with masked rows already zero; output is (T, R, N_e)
    for the requested target rows.
    """
    z_src = z[:, sources, :]                                       # (T, k, e)
    logits = (
        np.einsum("mke,tke->tmk", model.attn_vectors[:, sources, :], z_src)
        + model.attn_intercepts[None, :, sources]
    )
    if not np.isfinite(logits).all():
        raise NumericalError("non-finite attention logit encountered")
    logits[:, sources, np.arange(len(sources))] = -np.inf  # self-pairs excluded
    sub = logits[:, targets, :]                                    # (T, R, k)
    rowmax = sub.max(axis=2)
    if np.any(np.isneginf(rowmax)):
        bad = targets[np.isneginf(rowmax).any(axis=0)]
        raise ValidationError(
            f"patches {bad.tolist()} have no unmasked prediction sources; "
            "enable copy_through or unmask more patches"
        )
    weights = np.exp(sub - rowmax[:, :, None])
    weights /= weights.sum(axis=2, keepdims=True)
    pair_preds = np.einsum(
        "rkef,tkf->trke", model.value_maps[targets][:, sources], z_src
    )
    return np.einsum("trk,trke->tre", weights, pair_preds)


def _predict_batch(
    model: AttentionModel, z: np.ndarray, mask: MaskSpec, copy_through: bool
) -> np.ndarray:
    n = model.n_patches
    if mask.n_patches != n:
        raise ValidationError(
            f"mask over {mask.n_patches} patches does not match model with {n}"
        )
    sources = np.asarray(mask.unmasked, dtype=np.intp)
    if sources.size == 0:
        raise ValidationError("all patches are masked; nothing to attend to")
    targets = np.asarray(mask.masked if copy_through else range(n), dtype=np.intp)
    out = np.zeros_like(z)
    if copy_through:
        out[:, sources, :] = z[:, sources, :]
    if targets.size:
        for lo in range(0, z.shape[0], _PREDICT_CHUNK):
            block = slice(lo, min(lo + _PREDICT_CHUNK, z.shape[0]))
            out[block][:, targets, :] = _predict_block(model, z[block], sources, targets)
    return out


def predict_masked(
    model: AttentionModel, snapshot: MaskedLatentSnapshot, copy_through: bool = True
) -> np.ndarray:
    """Predict the full (N, N_e) latent snapshot from a masked one.

    Each target row is the softmax-weighted blend of the pair predictions
    from all unmasked sources (self excluded).  With ``copy_through`` the
    rows of unmasked patches are the observed latents instead of predictions.
    """
    if snapshot.values.shape != (model.n_patches, model.latent_dim):
        raise ValidationError(
            f"latent snapshot shape {snapshot.values.shape} does not match model "
            f"({model.n_patches}, {model.latent_dim})"
        )
    return _predict_batch(model, snapshot.values[None], snapshot.mask, copy_through)[0]


def reconstruct(
    model: AttentionModel,
    fields: SnapshotSet,
    mask: MaskSpec,
    copy_through: bool = True,
) -> SnapshotSet:
    """Reconstruct full standardized fields from masked standardized input.

    Pipeline: patchify, zero masked patch rows (their content is ignored
    regardless), encode, predict the masked latents, decode, reassemble.
    Input and output are in normalized units; use the model's norm_stats to
    standardize raw data first.
    """
    if not model.grid.matches(fields):
        raise ValidationError(
            f"field geometry {(fields.height, fields.width, fields.components)} "
            f"does not match model grid {model.grid}"
        )
    series = patchify(fields, model.grid.patch_size)
    vals = np.array(series.values, copy=True)
    masked = list(mask.masked)
    if masked:
        vals[:, masked, :] = 0.0
    latent = encode(model.pod, PatchedSeries(model.grid, vals))
    full = _predict_batch(model, latent.values, mask, copy_through)
    recon = decode(model.pod, LatentSeries(full))
    return unpatchify(recon, norm_stats=fields.norm_stats)
