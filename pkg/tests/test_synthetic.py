import math

import numpy as np
import pytest

from lamp import (
    ChaoticParams,
    FlowSpec,
    LaminarParams,
    MaskSpec,
    NoiseSpec,
    SnapshotSet,
    ValidationError,
    add_noise,
    generate,
    noise_sigma2,
    patchify,
    signal_power,
)
from lamp.patches import PatchGrid
from lamp.synthetic import add_noise_fixed


def effective_rank(mat, energy=0.99):
    s = np.linalg.svd(mat, compute_uv=False)
    cum = np.cumsum(s**2) / np.sum(s**2)
    return int(np.searchsorted(cum, energy) + 1)


class TestLaminar:
    def test_period_expressed_in_snapshots(self):
        # wavelength 32 at unit speed: snapshot t equals snapshot t + 32
        spec = FlowSpec("laminar-surrogate", 64, 64, 64, seed=0)
        fields = generate(spec)
        assert np.max(np.abs(fields.data[:32] - fields.data[32:])) < 1e-10

    def test_deterministic(self):
        spec = FlowSpec("laminar-surrogate", 32, 32, 20, seed=42)
        a, b = generate(spec), generate(spec)
        np.testing.assert_array_equal(a.data, b.data)

    def test_per_patch_rank_bounded_by_twice_harmonics(self):
        params = LaminarParams(harmonics=3)
        spec = FlowSpec("laminar-surrogate", 64, 64, 80, seed=1, params=params)
        series = patchify(generate(spec), 8)
        for n in range(series.grid.n_patches):
            mat = series.values[:, n, :]
            s = np.linalg.svd(mat, compute_uv=False)
            if s[0] == 0.0:
                continue  # identically zero border patch
            assert np.all(s[2 * 3 :] < 1e-10 * s[0])

    def test_envelope_has_compact_support(self):
        params = LaminarParams(envelope_width=16.0)
        spec = FlowSpec("laminar-surrogate", 64, 64, 10, seed=2, params=params)
        fields = generate(spec)
        assert np.all(fields.data[:, :15, :, :] == 0.0)
        assert np.all(fields.data[:, 49:, :, :] == 0.0)
        assert np.any(fields.data[:, 28:36, :, :] != 0.0)

    def test_two_components(self):
        fields = generate(FlowSpec("laminar-surrogate", 32, 32, 8, seed=3))
        assert fields.components == 2


class TestChaotic:
    def test_high_effective_rank(self):
        spec = FlowSpec("chaotic-surrogate", 48, 48, 300, seed=4)
        fields = generate(spec)
        mat = fields.data.reshape(300, -1)
        assert effective_rank(mat) > 30

    def test_deterministic(self):
        spec = FlowSpec("chaotic-surrogate", 32, 32, 40, seed=5)
        a, b = generate(spec), generate(spec)
        np.testing.assert_array_equal(a.data, b.data)

    def test_non_repeating(self):
        spec = FlowSpec("chaotic-surrogate", 32, 32, 200, seed=6)
        fields = generate(spec)
        first = fields.data[0]
        gaps = [np.max(np.abs(fields.data[t] - first)) for t in range(1, 200)]
        assert min(gaps) > 1e-3

    def test_mode_count_validated(self):
        with pytest.raises(ValidationError, match="mode count"):
            ChaoticParams(modes=0)


class TestFlowSpec:
    def test_unknown_kind_rejected(self):
        with pytest.raises(ValidationError, match="unknown flow kind"):
            FlowSpec("dns", 32, 32, 10, seed=0)

    def test_params_type_checked(self):
        with pytest.raises(ValidationError, match="expects"):
            FlowSpec("laminar-surrogate", 32, 32, 10, seed=0, params=ChaoticParams())


class TestNoise:
    def grid(self):
        return PatchGrid(64, 64, 2, 16)

    def unit_power_fields(self, t=30):
        # alternating +/-1 values: mean-square exactly 1 everywhere
        data = np.ones((t, 64, 64, 2))
        data[:, ::2] = -1.0
        return SnapshotSet(data)

    def full_mask(self):
        grid = self.grid()
        return MaskSpec(tuple(range(grid.n_patches)), grid.n_patches)

    def test_infinite_snr_returns_input_unchanged(self):
        fields = self.unit_power_fields(4)
        out = add_noise(fields, self.full_mask(), NoiseSpec(math.inf, seed=0), self.grid())
        np.testing.assert_array_equal(out.data, fields.data)

    def test_variance_law_at_20db_unit_power(self):
        sigma2 = noise_sigma2(
            self.unit_power_fields(2), self.full_mask(), NoiseSpec(20.0), self.grid()
        )
        assert sigma2 == pytest.approx(0.01, rel=1e-12)

    def test_empirical_variance_within_5_percent(self):
        fields = self.unit_power_fields(30)  # 245760 noised values
        mask = self.full_mask()
        noisy = add_noise(fields, mask, NoiseSpec(10.0, seed=7), self.grid())
        eps = noisy.data - fields.data
        sigma2 = noise_sigma2(fields, mask, NoiseSpec(10.0), self.grid())
        assert eps.size >= 1e5
        assert abs(eps.var() / sigma2 - 1.0) < 0.05

    def test_masked_pixels_untouched(self):
        rng = np.random.default_rng(8)
        fields = SnapshotSet(rng.standard_normal((5, 64, 64, 2)))
        grid = self.grid()
        mask = MaskSpec((0, 5), grid.n_patches)
        noisy = add_noise(fields, mask, NoiseSpec(10.0, seed=9), grid)
        from lamp import pixel_mask

        obs = pixel_mask(grid, mask)
        np.testing.assert_array_equal(noisy.data[:, ~obs, :], fields.data[:, ~obs, :])
        assert np.all(noisy.data[:, obs, :] != fields.data[:, obs, :])

    def test_deterministic_given_seed(self):
        fields = self.unit_power_fields(3)
        mask = self.full_mask()
        a = add_noise(fields, mask, NoiseSpec(20.0, seed=3), self.grid())
        b = add_noise(fields, mask, NoiseSpec(20.0, seed=3), self.grid())
        np.testing.assert_array_equal(a.data, b.data)

    def test_zero_signal_power_rejected(self):
        fields = SnapshotSet(np.zeros((2, 64, 64, 2)))
        with pytest.raises(ValidationError, match="zero"):
            noise_sigma2(fields, self.full_mask(), NoiseSpec(10.0), self.grid())

    def test_fixed_variance_injection(self):
        fields = self.unit_power_fields(30)
        mask = self.full_mask()
        noisy = add_noise_fixed(fields, mask, 0.04, seed=11, grid=self.grid())
        eps = noisy.data - fields.data
        assert abs(eps.var() / 0.04 - 1.0) < 0.05

    def test_nan_snr_rejected(self):
        with pytest.raises(ValidationError):
            NoiseSpec(float("nan"))

    def test_signal_power_full_field(self):
        fields = self.unit_power_fields(2)
        assert signal_power(fields) == pytest.approx(1.0)
