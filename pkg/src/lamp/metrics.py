"""Losses, parameter sweeps, predictive-power maps, sensor placement.

All losses are reported in normalized (standardized) units and always against
the noise-free target, so noise-variance comparisons stay consistent across
configurations.
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass, field

import numpy as np

from .attention import AttentionModel, MaskSpec, reconstruct, train_attention_model
from .errors import ValidationError
from .patches import (
    NormStats,
    PatchGrid,
    SnapshotSet,
    SplitSpec,
    apply_stats,
    normalize,
    patchify,
    split,
)
from .pod import ae_loss
from .synthetic import NoiseSpec, add_noise_fixed, noise_sigma2


def pred_loss(recon: SnapshotSet, truth: SnapshotSet) -> float:
    """Mean squared error per element between two geometrically equal sets."""
    if recon.data.shape != truth.data.shape:
        raise ValidationError(
            f"geometry mismatch: {recon.data.shape} vs {truth.data.shape}"
        )
    diff = recon.data - truth.data
    return float(np.mean(diff * diff))


def noise_variance_normalized(sigma2: float, stats: NormStats) -> float:
    """Noise variance expressed in normalized units.

    Isotropic noise of variance sigma^2 in raw units becomes sigma^2/std_c^2
    per component after standardization; the per-element mean over components
    is the value masked reconstructions are compared against.
    """
    return sigma2 * float(np.mean(1.0 / stats.std**2))


@dataclass(frozen=True, eq=False)
class PowerMap:
    """Predictive power per source patch, reshapeable to the patch grid."""

    grid: PatchGrid
    values: np.ndarray  # (N,)

    def __post_init__(self):
        arr = np.ascontiguousarray(np.asarray(self.values, dtype=np.float64))
        if arr.shape != (self.grid.n_patches,):
            raise ValidationError(
                f"power map length {arr.shape} != patch count {self.grid.n_patches}"
            )
        if not np.isfinite(arr).all():
            raise ValidationError("power map contains NaN or Inf")
        arr.setflags(write=False)
        object.__setattr__(self, "values", arr)

    def as_grid(self) -> np.ndarray:
        return self.values.reshape(self.grid.rows, self.grid.cols)


def predictive_power(model: AttentionModel) -> PowerMap:
    """Mean confidence of each source patch predicting all other patches.

    value(n) = mean over m != n of -log(max(pair_loss[m, n], floor)).  The
    diagonal is excluded: self-loss is zero by construction and would
    dominate the log.  Uses training pair losses, so sensor placement never
    peeks at test data.
    """
    n = model.n_patches
    if n < 2:
        raise ValidationError("predictive power needs at least two patches")
    neg_log = -np.log(np.maximum(model.pair_losses, model.error_floor))
    col_mean = (neg_log.sum(axis=0) - np.diag(neg_log)) / (n - 1)
    return PowerMap(model.grid, col_mean)


def place_sensors(power: PowerMap, count: int) -> MaskSpec:
    """Unmask the ``count`` patches of highest predictive power.

    Ties are broken toward the lower patch index, so placement is
    deterministic.
    """
    n = power.grid.n_patches
    if not 1 <= count <= n:
        raise ValidationError(f"sensor count must be in [1, {n}], got {count}")
    order = np.lexsort((np.arange(n), -power.values))
    return MaskSpec(tuple(int(i) for i in order[:count]), n)


@dataclass(frozen=True)
class SweepAxes:
    """Cartesian axes of a sweep over (P, N_e, SNR, coverage)."""

    patch_sizes: tuple[int, ...]
    latent_dims: tuple[int, ...]
    snr_dbs: tuple[float, ...] = (math.inf,)
    coverages: tuple[float, ...] = (0.1,)

    def __post_init__(self):
        for name in ("patch_sizes", "latent_dims", "snr_dbs", "coverages"):
            vals = tuple(getattr(self, name))
            if not vals:
                raise ValidationError(f"{name} axis is empty")
            object.__setattr__(self, name, vals)


@dataclass(frozen=True)
class SweepCell:
    """One (P, N_e, SNR, coverage) combination of a sweep."""

    patch_size: int
    latent_dim: int
    snr_db: float
    coverage: float
    median_pred_loss: float | None
    ae_loss: float | None
    noise_variance: float | None
    n_arrangements: int
    seed: int
    skip_reason: str | None = None


@dataclass(frozen=True)
class SweepResult:
    axes: SweepAxes
    n_arrangements: int
    seed: int
    cells: tuple[SweepCell, ...] = field(default_factory=tuple)

    def cell(self, patch_size: int, latent_dim: int, snr_db: float, coverage: float) -> SweepCell:
        for c in self.cells:
            if (
                c.patch_size == patch_size
                and c.latent_dim == latent_dim
                and c.snr_db == snr_db
                and c.coverage == coverage
            ):
                return c
        raise KeyError((patch_size, latent_dim, snr_db, coverage))


def derive_seed(*keys: int) -> int:
    """Stable child seed from integer keys (order-sensitive, reproducible)."""
    return int(np.random.SeedSequence(list(keys)).generate_state(1, np.uint64)[0])


def _float_key(x: float) -> int:
    """Bit pattern of a float as a seedable integer (handles inf)."""
    return struct.unpack("<q", struct.pack("<d", float(x)))[0] & 0x7FFFFFFFFFFFFFFF


def run_sweep(
    dataset: SnapshotSet,
    axes: SweepAxes,
    *,
    n_arrangements: int = 25,
    seed: int = 0,
    split_spec: SplitSpec = SplitSpec(),
    ridge_lambda: float | None = None,
    error_floor: float = 1e-12,
    use_intercept: bool = True,
    copy_through: bool = True,
) -> SweepResult:
    """Train/evaluate every axis combination and aggregate the median loss.

    For each (P, N_e): train on the (noise-free) train split, then for each
    (SNR, coverage) evaluate the masked-reconstruction loss on the test split
    over ``n_arrangements`` random mask draws and keep the median.  Each cell
    also records the test autoencoding floor and the normalized noise
    variance (zero when noise-free).  Invalid combinations become skipped
    cells with a reason instead of failing the sweep.

    ``dataset`` is expected in unnormalized units; it is standardized here
    with statistics frozen on the train block.  Mask and noise seeds are
    derived deterministically from ``seed`` and the cell coordinates.
    """
    if dataset.norm_stats is not None:
        raise ValidationError("run_sweep expects an unnormalized dataset")
    t = dataset.snapshots
    normalized = normalize(dataset, split_spec.train_range(t))
    stats = normalized.norm_stats
    train_norm, test_norm = split(normalized, split_spec)
    _, test_raw = split(dataset, split_spec)

    cells: list[SweepCell] = []
    for p in axes.patch_sizes:
        try:
            grid = PatchGrid(dataset.height, dataset.width, dataset.components, p)
        except ValidationError as exc:
            for ne in axes.latent_dims:
                cells.extend(_skipped(axes, p, ne, str(exc), n_arrangements, seed))
            continue
        test_series = patchify(test_norm, p)
        for ne in axes.latent_dims:
            try:
                model = train_attention_model(
                    train_norm,
                    p,
                    ne,
                    ridge_lambda=ridge_lambda,
                    error_floor=error_floor,
                    use_intercept=use_intercept,
                )
            except ValidationError as exc:
                cells.extend(_skipped(axes, p, ne, str(exc), n_arrangements, seed))
                continue
            floor = ae_loss(model.pod, test_series)
            for snr in axes.snr_dbs:
                if math.isinf(snr):
                    sigma2, noise_var = 0.0, 0.0
                else:
                    # Fixed per-cell variance from the full test-split power,
                    # so the recorded value is exactly what every arrangement
                    # injects (and zero-content masks stay well-defined).
                    sigma2 = noise_sigma2(test_raw, None, NoiseSpec(snr))
                    noise_var = noise_variance_normalized(sigma2, stats)
                for cov in axes.coverages:
                    losses = []
                    for arr_idx in range(n_arrangements):
                        mask_seed = derive_seed(seed, 0, p, int(round(cov * 1e9)), arr_idx)
                        mask = MaskSpec.random(grid.n_patches, cov, mask_seed)
                        if math.isinf(snr):
                            test_in = test_norm
                        else:
                            noise_seed = derive_seed(
                                seed, 1, p, int(round(cov * 1e9)), arr_idx, _float_key(snr)
                            )
                            noisy = add_noise_fixed(test_raw, mask, sigma2, noise_seed, grid)
                            test_in = apply_stats(noisy, stats)
                        recon = reconstruct(model, test_in, mask, copy_through)
                        losses.append(pred_loss(recon, test_norm))
                    cells.append(
                        SweepCell(
                            patch_size=p,
                            latent_dim=ne,
                            snr_db=snr,
                            coverage=cov,
                            median_pred_loss=float(np.median(losses)),
                            ae_loss=floor,
                            noise_variance=noise_var,
                            n_arrangements=n_arrangements,
                            seed=seed,
                        )
                    )
    return SweepResult(axes=axes, n_arrangements=n_arrangements, seed=seed, cells=tuple(cells))


def _skipped(
    axes: SweepAxes, p: int, ne: int, reason: str, n_arrangements: int, seed: int
):
    for snr in axes.snr_dbs:
        for cov in axes.coverages:
            yield SweepCell(
                patch_size=p,
                latent_dim=ne,
                snr_db=snr,
                coverage=cov,
                median_pred_loss=None,
                ae_loss=None,
                noise_variance=None,
                n_arrangements=n_arrangements,
                seed=seed,
                skip_reason=reason,
            )
