"""Field geometry: normalization, patch extraction/reassembly, dataset splits.

A snapshot set is a time series of 2D multi-component fields stored as a
(T, H, W, C) float64 array.  Patching cuts each snapshot into non-overlapping
P x P tiles and flattens them into vectors of dimension D = C * P**2.

Patch ordering convention (fixed so model files are portable and tests are
bit-exact): patches are enumerated row-major over the patch grid, and within
a patch the pixels are flattened row-major with the component index varying
fastest.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ValidationError


@dataclass(frozen=True, eq=False)
class NormStats:
    """Per-component mean and standard deviation of a training block."""

    mean: np.ndarray  # (C,)
    std: np.ndarray   # (C,)

    def __post_init__(self):
        mean = np.asarray(self.mean, dtype=np.float64).reshape(-1)
        std = np.asarray(self.std, dtype=np.float64).reshape(-1)
        if mean.shape != std.shape:
            raise ValidationError("norm stats mean/std length mismatch")
        if not (np.isfinite(mean).all() and np.isfinite(std).all()):
            raise ValidationError("norm stats must be finite")
        if np.any(std <= 0.0):
            raise ValidationError("norm stats std must be positive")
        mean.setflags(write=False)
        std.setflags(write=False)
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "std", std)


@dataclass(frozen=True, eq=False)
class SnapshotSet:
    """Time series of 2D fields, shape (T, H, W, C), all values finite.

    The data array is converted to contiguous float64 and frozen
    (``writeable=False``); instances are safe to share across threads.
    ``norm_stats`` is None until :func:`normalize` has been applied (or the
    data came standardized from disk).
    """

    data: np.ndarray
    norm_stats: NormStats | None = None

    def __post_init__(self):
        arr = np.ascontiguousarray(np.asarray(self.data, dtype=np.float64))
        if arr.ndim != 4:
            raise ValidationError(
                f"snapshot data must have shape (T, H, W, C), got {arr.shape}"
            )
        if min(arr.shape) < 1:
            raise ValidationError(f"empty snapshot dimensions: {arr.shape}")
        if not np.isfinite(arr).all():
            raise ValidationError("snapshot data contains NaN or Inf")
        if self.norm_stats is not None and len(self.norm_stats.mean) != arr.shape[3]:
            raise ValidationError("norm stats do not match component count")
        arr.setflags(write=False)
        object.__setattr__(self, "data", arr)

    @property
    def snapshots(self) -> int:
        return self.data.shape[0]

    @property
    def height(self) -> int:
        return self.data.shape[1]

    @property
    def width(self) -> int:
        return self.data.shape[2]

    @property
    def components(self) -> int:
        return self.data.shape[3]


@dataclass(frozen=True)
class PatchGrid:
    """Geometry mapping between field pixels and flattened patch vectors."""

    height: int
    width: int
    components: int
    patch_size: int

    def __post_init__(self):
        for name in ("height", "width", "components", "patch_size"):
            v = getattr(self, name)
            if not isinstance(v, (int, np.integer)) or v < 1:
                raise ValidationError(f"{name} must be a positive integer, got {v!r}")
            object.__setattr__(self, name, int(v))
        if self.height % self.patch_size or self.width % self.patch_size:
            raise ValidationError(
                f"patch size {self.patch_size} does not divide field "
                f"{self.height}x{self.width}"
            )

    @property
    def rows(self) -> int:
        return self.height // self.patch_size

    @property
    def cols(self) -> int:
        return self.width // self.patch_size

    @property
    def n_patches(self) -> int:
        return self.rows * self.cols

    @property
    def patch_dim(self) -> int:
        return self.components * self.patch_size**2

    def matches(self, fields: SnapshotSet) -> bool:
        return (
            fields.height == self.height
            and fields.width == self.width
            and fields.components == self.components
        )


@dataclass(frozen=True, eq=False)
class PatchedSeries:
    """Flattened patches of a snapshot series, shape (T, N, D)."""

    grid: PatchGrid
    values: np.ndarray

    def __post_init__(self):
        arr = np.ascontiguousarray(np.asarray(self.values, dtype=np.float64))
        if arr.ndim != 3 or arr.shape[1] != self.grid.n_patches or arr.shape[2] != self.grid.patch_dim:
            raise ValidationError(
                f"patched values shape {arr.shape} inconsistent with grid "
                f"(N={self.grid.n_patches}, D={self.grid.patch_dim})"
            )
        arr.setflags(write=False)
        object.__setattr__(self, "values", arr)

    @property
    def snapshots(self) -> int:
        return self.values.shape[0]


@dataclass(frozen=True)
class SplitSpec:
    """Contiguous train / gap / test split of a snapshot series.

    The gap block between train and test is discarded to reduce temporal
    leakage between the two.
    """

    train_fraction: float = 0.75
    test_fraction: float = 0.20
    gap_fraction: float = 0.05

    def __post_init__(self):
        fracs = (self.train_fraction, self.test_fraction, self.gap_fraction)
        if any(f < 0 for f in fracs):
            raise ValidationError(f"split fractions must be nonnegative: {fracs}")
        if sum(fracs) > 1.0 + 1e-12:
            raise ValidationError(f"split fractions sum to more than 1: {fracs}")

    def train_range(self, snapshots: int) -> range:
        return range(0, int(self.train_fraction * snapshots))

    def test_range(self, snapshots: int) -> range:
        start = int(self.train_fraction * snapshots) + int(self.gap_fraction * snapshots)
        return range(start, start + int(self.test_fraction * snapshots))


def normalize(fields: SnapshotSet, train_range: range) -> SnapshotSet:
    """Standardize each component to zero mean, unit variance.

    Statistics are computed over ``train_range`` only (population std, so the
    training block has variance exactly 1) and applied to all snapshots.  The
    returned set carries the statistics so inference inputs can reuse them.
    """
    if len(train_range) == 0:
        raise ValidationError("train range is empty")
    if train_range.start < 0 or train_range.stop > fields.snapshots or train_range.step != 1:
        raise ValidationError(
            f"train range {train_range} outside [0, {fields.snapshots}) or non-contiguous"
        )
    block = fields.data[train_range.start : train_range.stop]
    mean = block.mean(axis=(0, 1, 2))
    std = block.std(axis=(0, 1, 2))  # population (1/T) convention
    for c in range(fields.components):
        if std[c] == 0.0:
            raise ValidationError(
                f"component {c} has zero variance over the training block; "
                "cannot standardize"
            )
    stats = NormStats(mean, std)
    return apply_stats(fields, stats)


def apply_stats(fields: SnapshotSet, stats: NormStats) -> SnapshotSet:
    """Standardize with previously fitted statistics (frozen, no refit)."""
    if len(stats.mean) != fields.components:
        raise ValidationError("norm stats do not match component count")
    return SnapshotSet((fields.data - stats.mean) / stats.std, norm_stats=stats)


def denormalize(fields: SnapshotSet) -> SnapshotSet:
    """Invert :func:`normalize`, returning data in original units."""
    if fields.norm_stats is None:
        raise ValidationError("snapshot set carries no normalization stats")
    stats = fields.norm_stats
    return SnapshotSet(fields.data * stats.std + stats.mean, norm_stats=None)


def patchify(fields: SnapshotSet, patch_size: int) -> PatchedSeries:
    """Cut every snapshot into flattened non-overlapping patches.

    Output shape is (T, N, D) under the documented ordering; the operation is
    a pure reindexing, so :func:`unpatchify` inverts it bit-exactly.
    """
    grid = PatchGrid(fields.height, fields.width, fields.components, patch_size)
    t, p, c = fields.snapshots, grid.patch_size, grid.components
    blocks = fields.data.reshape(t, grid.rows, p, grid.cols, p, c)
    values = blocks.transpose(0, 1, 3, 2, 4, 5).reshape(t, grid.n_patches, grid.patch_dim)
    return PatchedSeries(grid, values)


def unpatchify(series: PatchedSeries, norm_stats: NormStats | None = None) -> SnapshotSet:
    """Reassemble a patched series into full snapshots (inverse of patchify)."""
    g = series.grid
    t, p, c = series.snapshots, g.patch_size, g.components
    blocks = series.values.reshape(t, g.rows, g.cols, p, p, c)
    data = blocks.transpose(0, 1, 3, 2, 4, 5).reshape(t, g.height, g.width, c)
    return SnapshotSet(data, norm_stats=norm_stats)


def split(fields: SnapshotSet, spec: SplitSpec = SplitSpec()) -> tuple[SnapshotSet, SnapshotSet]:
    """Split into (train, test) blocks, discarding the gap block between them."""
    t = fields.snapshots
    train_idx = spec.train_range(t)
    test_idx = spec.test_range(t)
    if len(train_idx) == 0:
        raise ValidationError(f"split of {t} snapshots leaves an empty train block")
    if len(test_idx) == 0:
        raise ValidationError(f"split of {t} snapshots leaves an empty test block")
    train = SnapshotSet(fields.data[train_idx.start : train_idx.stop], fields.norm_stats)
    test = SnapshotSet(fields.data[test_idx.start : test_idx.stop], fields.norm_stats)
    return train, test
