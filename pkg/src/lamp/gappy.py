"""Gappy POD baseline: global modes fitted to the observed pixels.

Reference reconstruction method for head-to-head comparison.  A global
truncated SVD of the (unpatched) training snapshots gives r orthonormal
modes; reconstruction solves a least-squares fit of the mode coefficients
restricted to the pixels of unmasked patches, then evaluates the modes
everywhere.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import cho_factor, cho_solve

from .attention import MaskSpec, pixel_mask
from .errors import NumericalError, ValidationError
from .patches import NormStats, PatchGrid, SnapshotSet

#: Relative ridge scale for the observed-pixel normal equations.  Smaller
#: than the attention module's scale so that full observation reproduces the
#: plain POD projection to much better than 1e-10.
GAPPY_RIDGE_SCALE = 1e-12


@dataclass(frozen=True, eq=False)
class GappyPodModel:
    """Global POD modes (H*W*C x r, orthonormal columns) and their scales."""

    modes: np.ndarray
    singular_values: np.ndarray
    norm_stats: NormStats | None

    def __post_init__(self):
        modes = np.ascontiguousarray(np.asarray(self.modes, dtype=np.float64))
        svals = np.ascontiguousarray(np.asarray(self.singular_values, dtype=np.float64))
        if modes.ndim != 2 or svals.shape != (modes.shape[1],):
            raise ValidationError(
                f"inconsistent gappy model shapes: modes {modes.shape}, "
                f"singular values {svals.shape}"
            )
        modes.setflags(write=False)
        svals.setflags(write=False)
        object.__setattr__(self, "modes", modes)
        object.__setattr__(self, "singular_values", svals)

    @property
    def rank(self) -> int:
        return self.modes.shape[1]


def fit_gappy(train: SnapshotSet, rank: int) -> GappyPodModel:
    """Global truncated SVD of the training snapshot matrix.

    Uses the same deterministic sign convention as the patch-wise bases
    (largest-magnitude entry of each mode nonnegative).
    """
    t = train.snapshots
    dim = train.height * train.width * train.components
    if not 1 <= rank <= min(dim, t):
        raise ValidationError(
            f"rank must be in [1, min(H*W*C={dim}, T={t})], got {rank}"
        )
    snapshots = train.data.reshape(t, dim).T  # (dim, T), columns are snapshots
    try:
        u, s, _ = np.linalg.svd(snapshots, full_matrices=False)
    except np.linalg.LinAlgError as exc:
        raise NumericalError("SVD of the global snapshot matrix failed") from exc
    u = u[:, :rank]
    idx = np.argmax(np.abs(u), axis=0)
    signs = np.where(u[idx, np.arange(rank)] < 0.0, -1.0, 1.0)
    return GappyPodModel(u * signs, s[:rank], train.norm_stats)


def reconstruct_gappy(
    model: GappyPodModel,
    fields: SnapshotSet,
    mask: MaskSpec,
    grid: PatchGrid,
    ridge_lambda: float | None = None,
) -> SnapshotSet:
    """Least-squares mode fit on observed pixels, evaluated at all pixels.

    The pixel-level mask is induced by the same patch-level mask the
    attention model consumes: every pixel of an unmasked patch is observed,
    everything else is missing.
    """
    dim = grid.height * grid.width * grid.components
    if model.modes.shape[0] != dim:
        raise ValidationError(
            f"gappy model over {model.modes.shape[0]} values does not match grid "
            f"with H*W*C={dim}"
        )
    if not grid.matches(fields):
        raise ValidationError(
            f"field geometry {(fields.height, fields.width, fields.components)} "
            f"does not match grid {grid}"
        )
    observed = pixel_mask(grid, mask).reshape(-1)
    obs_flat = np.flatnonzero(np.repeat(observed, grid.components))
    if obs_flat.size < model.rank:
        raise ValidationError(
            f"{obs_flat.size} observed values cannot determine {model.rank} "
            "mode coefficients; use a smaller rank or more coverage"
        )
    phi = model.modes[obs_flat]                       # (n_obs, r)
    gram = phi.T @ phi
    if ridge_lambda is None:
        lam = GAPPY_RIDGE_SCALE * float(np.trace(gram)) / model.rank
    elif ridge_lambda < 0.0:
        raise ValidationError(f"ridge_lambda must be nonnegative, got {ridge_lambda}")
    else:
        lam = float(ridge_lambda)
    try:
        factor = cho_factor(gram + lam * np.eye(model.rank))
    except np.linalg.LinAlgError as exc:
        raise NumericalError(
            "observed-pixel normal matrix is singular; pass a positive ridge_lambda"
        ) from exc
    x_obs = fields.data.reshape(fields.snapshots, dim)[:, obs_flat]
    coeffs = cho_solve(factor, phi.T @ x_obs.T)       # (r, T)
    recon = (model.modes @ coeffs).T.reshape(fields.data.shape)
    return SnapshotSet(recon, norm_stats=fields.norm_stats)
