"""Patch-wise truncated-SVD compression.

Each patch gets its own orthonormal basis U_n (D x N_e), the leading left
singular vectors of that patch's training series.  The collection of bases
acts as a block-diagonal linear encoder/decoder: z_n = U_n^T x_n and
x~_n = U_n z_n, so decode(encode(x)) is the orthogonal projection onto each
patch's retained subspace.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import NumericalError, ValidationError
from .patches import PatchedSeries, PatchGrid


@dataclass(frozen=True, eq=False)
class PatchPodModel:
    """Per-patch orthonormal bases and their singular values.

    bases has shape (N, D, N_e) with orthonormal columns per patch;
    singular_values has shape (N, N_e), nonincreasing along the last axis.
    """

    grid: PatchGrid
    latent_dim: int
    bases: np.ndarray
    singular_values: np.ndarray

    def __post_init__(self):
        n, d = self.grid.n_patches, self.grid.patch_dim
        bases = np.ascontiguousarray(np.asarray(self.bases, dtype=np.float64))
        svals = np.ascontiguousarray(np.asarray(self.singular_values, dtype=np.float64))
        if bases.shape != (n, d, self.latent_dim):
            raise ValidationError(
                f"bases shape {bases.shape} != {(n, d, self.latent_dim)}"
            )
        if svals.shape != (n, self.latent_dim):
            raise ValidationError(
                f"singular values shape {svals.shape} != {(n, self.latent_dim)}"
            )
        bases.setflags(write=False)
        svals.setflags(write=False)
        object.__setattr__(self, "bases", bases)
        object.__setattr__(self, "singular_values", svals)


@dataclass(frozen=True, eq=False)
class LatentSeries:
    """Latent codes of a patched series, shape (T, N, N_e)."""

    values: np.ndarray

    def __post_init__(self):
        arr = np.ascontiguousarray(np.asarray(self.values, dtype=np.float64))
        if arr.ndim != 3:
            raise ValidationError(f"latent values must be (T, N, N_e), got {arr.shape}")
        if not np.isfinite(arr).all():
            raise ValidationError("latent values contain NaN or Inf")
        arr.setflags(write=False)
        object.__setattr__(self, "values", arr)

    @property
    def snapshots(self) -> int:
        return self.values.shape[0]

    @property
    def n_patches(self) -> int:
        return self.values.shape[1]

    @property
    def latent_dim(self) -> int:
        return self.values.shape[2]


def _fix_signs(u: np.ndarray) -> np.ndarray:
    """Flip singular-vector signs so each column's largest-|entry| is >= 0.

    Makes the basis a deterministic function of the data (LAPACK sign choice
    is otherwise arbitrary).
    """
    # u: (N, D, K); argmax picks the first maximal index, which pins ties.
    idx = np.argmax(np.abs(u), axis=1)                       # (N, K)
    lead = np.take_along_axis(u, idx[:, None, :], axis=1)    # (N, 1, K)
    signs = np.where(lead < 0.0, -1.0, 1.0)
    return u * signs


def fit_patch_pod(train: PatchedSeries, latent_dim: int) -> PatchPodModel:
    """Fit per-patch truncated SVD bases from a training series.

    For each patch n the basis holds the ``latent_dim`` leading left singular
    vectors of the D x T matrix whose columns are that patch's training
    vectors.  Requesting more modes than min(D, T) is rejected rather than
    zero-padded: silent rank deficiency would corrupt the downstream
    regressions.
    """
    t, _, d = train.values.shape
    if not 1 <= latent_dim <= min(d, t):
        raise ValidationError(
            f"latent_dim must be in [1, min(D={d}, T={t})], got {latent_dim}"
        )
    mats = train.values.transpose(1, 2, 0)  # (N, D, T)
    try:
        u, s, _ = np.linalg.svd(mats, full_matrices=False)
    except np.linalg.LinAlgError:
        # Redo patch by patch to name the culprit.
        for n in range(mats.shape[0]):
            try:
                np.linalg.svd(mats[n], full_matrices=False)
            except np.linalg.LinAlgError as exc:
                raise NumericalError(f"SVD did not converge for patch {n}") from exc
        raise NumericalError("SVD did not converge")
    u = _fix_signs(u[:, :, :latent_dim])
    return PatchPodModel(train.grid, int(latent_dim), u, s[:, :latent_dim])


def encode(model: PatchPodModel, series: PatchedSeries) -> LatentSeries:
    """Project patch vectors onto the per-patch bases: z_n = U_n^T x_n."""
    if series.grid != model.grid:
        raise ValidationError(
            f"series grid {series.grid} does not match model grid {model.grid}"
        )
    z = np.einsum("nde,tnd->tne", model.bases, series.values)
    return LatentSeries(z)


def decode(model: PatchPodModel, latent: LatentSeries) -> PatchedSeries:
    """Lift latent codes back to patch vectors: x~_n = U_n z_n."""
    if latent.n_patches != model.grid.n_patches or latent.latent_dim != model.latent_dim:
        raise ValidationError(
            f"latent shape {latent.values.shape[1:]} does not match model "
            f"(N={model.grid.n_patches}, N_e={model.latent_dim})"
        )
    x = np.einsum("nde,tne->tnd", model.bases, latent.values)
    return PatchedSeries(model.grid, x)


def ae_loss(model: PatchPodModel, series: PatchedSeries, *, per_element: bool = True) -> float:
    """Autoencoding reconstruction error of the projection decode(encode(.)).

    With ``per_element`` (default) the squared error is divided by T*N*D so
    values are comparable across patch sizes and latent dimensions; otherwise
    the raw sum of squared residuals is returned for exactness checks.
    """
    recon = decode(model, encode(model, series))
    err = recon.values - series.values
    total = float(np.sum(err * err))
    if per_element:
        return total / series.values.size
    return total
