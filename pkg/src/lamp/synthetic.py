"""Synthetic 2D wake surrogates and SNR-parameterized noise injection.

Two generators stand in for unpublished CFD datasets:

* laminar surrogate: a downstream-convecting vortex-street pattern built
  from a handful of spatial harmonics that share one base frequency.  It is
  exactly periodic in time and low-rank per patch (each harmonic contributes
  a cos/sin pair, so the per-patch rank is at most twice the harmonic count).
* chaotic surrogate: a sum of many random-wavenumber traveling wave packets
  with mutually incommensurate frequencies and random phases; broadband,
  high effective rank, non-repeating over the series.

Both are pure functions of their spec: the same spec reproduces the dataset
bit for bit.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .attention import MaskSpec, pixel_mask
from .errors import ValidationError
from .patches import PatchGrid, SnapshotSet

LAMINAR = "laminar-surrogate"
CHAOTIC = "chaotic-surrogate"


@dataclass(frozen=True)
class LaminarParams:
    """Traveling vortex-street parameters.

    The temporal period is ``wavelength / speed`` snapshots; pick divisible
    values to make the series exactly periodic.  ``envelope_width`` is the
    half-width of the wake band (defaults to H/4); the envelope has compact
    support, so patches entirely outside the band are identically zero.
    """

    speed: float = 1.0
    wavelength: float = 32.0
    envelope_width: float | None = None
    harmonics: int = 6
    amplitude: float = 1.0
    decay: float = 3.5

    def __post_init__(self):
        if self.speed <= 0 or self.wavelength <= 0:
            raise ValidationError("speed and wavelength must be positive")
        if not 1 <= self.harmonics <= 6:
            raise ValidationError(
                f"harmonics must be in [1, 6], got {self.harmonics}"
            )


@dataclass(frozen=True)
class ChaoticParams:
    """Broadband wave-packet parameters.

    ``wavenumber_range`` is in cycles across the shorter field side and
    ``frequency_range`` in cycles per snapshot.  Frequencies are drawn from a
    continuous distribution, so they are incommensurate with probability one.
    ``packet_radius`` localizes each mode with a Gaussian envelope (defaults
    to a quarter of the shorter side), giving the field the spatially local
    correlation structure of a turbulent wake.
    """

    modes: int = 40
    wavenumber_range: tuple[float, float] = (1.0, 8.0)
    frequency_range: tuple[float, float] = (0.02, 0.35)
    decay: float = 0.5
    packet_radius: float | None = None

    def __post_init__(self):
        if self.modes < 1:
            raise ValidationError(f"mode count must be positive, got {self.modes}")
        for name in ("wavenumber_range", "frequency_range"):
            lo, hi = getattr(self, name)
            if not 0 < lo <= hi:
                raise ValidationError(f"invalid {name}: {(lo, hi)}")


@dataclass(frozen=True)
class FlowSpec:
    """Deterministic recipe for one synthetic dataset (always C=2)."""

    kind: str
    height: int
    width: int
    snapshots: int
    seed: int
    params: LaminarParams | ChaoticParams | None = None

    def __post_init__(self):
        if self.kind not in (LAMINAR, CHAOTIC):
            raise ValidationError(f"unknown flow kind: {self.kind!r}")
        if min(self.height, self.width, self.snapshots) < 1:
            raise ValidationError("height, width and snapshots must be positive")
        if self.params is None:
            default = LaminarParams() if self.kind == LAMINAR else ChaoticParams()
            object.__setattr__(self, "params", default)
        want = LaminarParams if self.kind == LAMINAR else ChaoticParams
        if not isinstance(self.params, want):
            raise ValidationError(
                f"{self.kind} expects {want.__name__}, got {type(self.params).__name__}"
            )


@dataclass(frozen=True)
class NoiseSpec:
    """Additive Gaussian noise at a given signal-to-noise ratio.

    The noise variance is sigma^2 = P_sig * 10**(-snr_db / 10), with P_sig
    the mean squared value of the unnormalized input over the pixels of
    unmasked patches.  snr_db may be math.inf, meaning noise-free.
    """

    snr_db: float
    seed: int = 0

    def __post_init__(self):
        if math.isnan(self.snr_db):
            raise ValidationError("snr_db must be a number or +inf")


def _mode_synthesis(time_mat: np.ndarray, space_mat: np.ndarray, h: int, w: int) -> np.ndarray:
    """(T, 2K) @ (2K, H*W) -> (T, H, W); the separable core of both generators."""
    return (time_mat @ space_mat).reshape(time_mat.shape[0], h, w)


def _laminar(spec: FlowSpec) -> np.ndarray:
    p: LaminarParams = spec.params  # type: ignore[assignment]
    h, w, t = spec.height, spec.width, spec.snapshots
    half_width = p.envelope_width if p.envelope_width is not None else h / 4.0
    rng = np.random.default_rng(spec.seed)
    phases_u = rng.uniform(0.0, 2.0 * np.pi, size=p.harmonics)
    phases_v = rng.uniform(0.0, 2.0 * np.pi, size=p.harmonics)

    y = np.arange(h, dtype=np.float64)
    x = np.arange(w, dtype=np.float64)
    steps = np.arange(t, dtype=np.float64)
    rel = (y - (h - 1) / 2.0) / half_width
    env = np.where(np.abs(rel) < 1.0, np.cos(0.5 * np.pi * rel) ** 2, 0.0)
    odd = env * np.sin(np.pi * rel)  # antisymmetric profile for the v component

    kappa = 2.0 * np.pi / p.wavelength
    omega = kappa * p.speed
    time_mat = np.empty((t, 2 * p.harmonics))
    space_u = np.empty((2 * p.harmonics, h * w))
    space_v = np.empty((2 * p.harmonics, h * w))
    for k in range(1, p.harmonics + 1):
        amp = p.amplitude * k**-p.decay
        time_mat[:, 2 * k - 2] = np.cos(k * omega * steps)
        time_mat[:, 2 * k - 1] = np.sin(k * omega * steps)
        # cos(k kappa x - k omega t + phi) expanded over the time pair
        carrier_u = k * kappa * x + phases_u[k - 1]
        space_u[2 * k - 2] = (amp * np.outer(env, np.cos(carrier_u))).reshape(-1)
        space_u[2 * k - 1] = (amp * np.outer(env, np.sin(carrier_u))).reshape(-1)
        carrier_v = k * kappa * x + phases_v[k - 1]
        space_v[2 * k - 2] = (amp * np.outer(odd, np.sin(carrier_v))).reshape(-1)
        space_v[2 * k - 1] = (-amp * np.outer(odd, np.cos(carrier_v))).reshape(-1)
    u = _mode_synthesis(time_mat, space_u, h, w)
    v = _mode_synthesis(time_mat, space_v, h, w)
    return np.stack([u, v], axis=-1)


def _chaotic(spec: FlowSpec) -> np.ndarray:
    p: ChaoticParams = spec.params  # type: ignore[assignment]
    h, w, t = spec.height, spec.width, spec.snapshots
    side = min(h, w)
    radius = p.packet_radius if p.packet_radius is not None else side / 4.0
    rng = np.random.default_rng(spec.seed)

    yy, xx = np.meshgrid(np.arange(h, dtype=np.float64), np.arange(w, dtype=np.float64), indexing="ij")
    steps = np.arange(t, dtype=np.float64)
    components = []
    for _ in range(2):  # u then v, independent draws from the same stream
        time_mat = np.empty((t, 2 * p.modes))
        space_mat = np.empty((2 * p.modes, h * w))
        for k in range(p.modes):
            angle = rng.uniform(0.0, 2.0 * np.pi)
            cycles = rng.uniform(*p.wavenumber_range)
            kx = 2.0 * np.pi * cycles * np.cos(angle) / side
            ky = 2.0 * np.pi * cycles * np.sin(angle) / side
            phase = rng.uniform(0.0, 2.0 * np.pi)
            freq = 2.0 * np.pi * rng.uniform(*p.frequency_range)
            cx = rng.uniform(0.0, w)
            cy = rng.uniform(0.0, h)
            amp = (1.0 + k) ** -p.decay
            envelope = np.exp(-((xx - cx) ** 2 + (yy - cy) ** 2) / (2.0 * radius**2))
            psi = kx * xx + ky * yy + phase
            space_mat[2 * k] = (amp * envelope * np.cos(psi)).reshape(-1)
            space_mat[2 * k + 1] = (amp * envelope * np.sin(psi)).reshape(-1)
            time_mat[:, 2 * k] = np.cos(freq * steps)
            time_mat[:, 2 * k + 1] = np.sin(freq * steps)
        components.append(_mode_synthesis(time_mat, space_mat, h, w))
    return np.stack(components, axis=-1)


def generate(spec: FlowSpec) -> SnapshotSet:
    """Generate the unnormalized (T, H, W, 2) dataset described by the spec."""
    data = _laminar(spec) if spec.kind == LAMINAR else _chaotic(spec)
    return SnapshotSet(data)


def signal_power(fields: SnapshotSet, mask: MaskSpec | None = None, grid: PatchGrid | None = None) -> float:
    """Mean squared value across snapshots and components.

    With a mask, only pixels of unmasked patches count, which is the support
    the noise is injected on.
    """
    if mask is None:
        return float(np.mean(fields.data**2))
    if grid is None:
        raise ValidationError("signal_power with a mask needs the patch grid")
    observed = pixel_mask(grid, mask)
    return float(np.mean(fields.data[:, observed, :] ** 2))


def noise_sigma2(fields: SnapshotSet, mask: MaskSpec | None, noise: NoiseSpec, grid: PatchGrid | None = None) -> float:
    """Noise variance implied by the SNR law for this (unnormalized) input."""
    if math.isinf(noise.snr_db):
        return 0.0
    power = signal_power(fields, mask, grid)
    if power == 0.0:
        raise ValidationError("signal power is zero; SNR-scaled noise is undefined")
    return power * 10.0 ** (-noise.snr_db / 10.0)


def add_noise_fixed(
    fields: SnapshotSet, mask: MaskSpec, sigma2: float, seed: int, grid: PatchGrid
) -> SnapshotSet:
    """Add i.i.d. N(0, sigma2) noise to the pixels of unmasked patches.

    Masked patch content is left untouched (it is discarded downstream
    anyway).  Deterministic given the seed.
    """
    if sigma2 < 0.0:
        raise ValidationError(f"noise variance must be nonnegative, got {sigma2}")
    if sigma2 == 0.0:
        return fields
    rng = np.random.default_rng(seed)
    eps = rng.normal(0.0, math.sqrt(sigma2), size=fields.data.shape)
    observed = pixel_mask(grid, mask)
    data = fields.data + np.where(observed[None, :, :, None], eps, 0.0)
    return SnapshotSet(data, norm_stats=fields.norm_stats)


def add_noise(fields: SnapshotSet, mask: MaskSpec, noise: NoiseSpec, grid: PatchGrid) -> SnapshotSet:
    """Add SNR-scaled Gaussian noise to the pixels of unmasked patches.

    The variance follows the law in :class:`NoiseSpec`, with the signal power
    taken over the observed support, so the per-pixel SNR at the sensors does
    not depend on coverage.  The input is expected in unnormalized units;
    standardization with the frozen training stats comes after.  snr_db = inf
    returns the input unchanged.
    """
    if math.isinf(noise.snr_db):
        return fields
    sigma2 = noise_sigma2(fields, mask, noise, grid)
    return add_noise_fixed(fields, mask, sigma2, noise.seed, grid)
