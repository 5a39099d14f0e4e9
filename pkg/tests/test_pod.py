import numpy as np
import pytest

from lamp import (
    LatentSeries,
    SnapshotSet,
    ValidationError,
    ae_loss,
    decode,
    encode,
    fit_patch_pod,
    patchify,
)
from lamp.patches import PatchedSeries, PatchGrid


from oracles import singular_values_by_eigh


def series_from_matrix(mat):
    """Wrap a (D, T) matrix as a single-patch series (H = W = sqrt(D))."""
    d, t = mat.shape
    side = int(round(d**0.5))
    grid = PatchGrid(side, side, 1, side)
    return PatchedSeries(grid, mat.T.reshape(t, 1, d))


def rand_series(rng, t=12, h=4, w=4, c=2, p=2):
    fields = SnapshotSet(rng.standard_normal((t, h, w, c)))
    return patchify(fields, p)


class TestFit:
    def test_rank_one_patch_is_exact_at_one_mode(self):
        rng = np.random.default_rng(0)
        shape = rng.standard_normal(16)
        amps = rng.standard_normal(10)
        series = series_from_matrix(np.outer(shape, amps))
        model = fit_patch_pod(series, 1)
        assert ae_loss(model, series, per_element=False) < 1e-20

    def test_full_basis_is_identity(self):
        rng = np.random.default_rng(1)
        series = series_from_matrix(rng.standard_normal((4, 9)))
        model = fit_patch_pod(series, 4)
        recon = decode(model, encode(model, series))
        np.testing.assert_allclose(recon.values, series.values, rtol=0, atol=1e-10)

    def test_truncation_error_is_discarded_singular_value(self):
        # rank-3 4x4 series compressed to 2 modes loses exactly sigma_3^2
        rng = np.random.default_rng(2)
        mat = rng.standard_normal((4, 3)) @ rng.standard_normal((3, 4))
        series = series_from_matrix(mat)
        model = fit_patch_pod(series, 2)
        sigma = singular_values_by_eigh(mat)
        loss = ae_loss(model, series, per_element=False)
        np.testing.assert_allclose(loss, sigma[2] ** 2, rtol=1e-8)

    def test_latent_dim_bounds(self):
        series = rand_series(np.random.default_rng(3), t=5)
        with pytest.raises(ValidationError, match="latent_dim"):
            fit_patch_pod(series, 0)
        with pytest.raises(ValidationError, match="latent_dim"):
            fit_patch_pod(series, 6)  # T=5 < 6 even though D=8

    def test_sign_convention(self):
        rng = np.random.default_rng(4)
        series = rand_series(rng)
        model = fit_patch_pod(series, 3)
        for n in range(model.grid.n_patches):
            for j in range(3):
                col = model.bases[n, :, j]
                assert col[np.argmax(np.abs(col))] >= 0.0

    def test_singular_values_nonincreasing(self):
        series = rand_series(np.random.default_rng(5))
        model = fit_patch_pod(series, 4)
        assert np.all(np.diff(model.singular_values, axis=1) <= 0.0)

    def test_refit_is_bit_identical(self):
        series = rand_series(np.random.default_rng(6))
        a = fit_patch_pod(series, 3)
        b = fit_patch_pod(series, 3)
        np.testing.assert_array_equal(a.bases, b.bases)
        np.testing.assert_array_equal(a.singular_values, b.singular_values)


class TestEncodeDecode:
    def test_basis_column_maps_to_unit_vector(self):
        rng = np.random.default_rng(7)
        train = rand_series(rng, t=10)
        model = fit_patch_pod(train, 3)
        grid = model.grid
        vals = np.zeros((1, grid.n_patches, grid.patch_dim))
        for n in range(grid.n_patches):
            vals[0, n] = model.bases[n, :, 1]
        z = encode(model, PatchedSeries(grid, vals))
        expect = np.zeros(3)
        expect[1] = 1.0
        np.testing.assert_allclose(z.values[0], np.tile(expect, (grid.n_patches, 1)), atol=1e-12)

    def test_zero_maps_to_zero(self):
        model = fit_patch_pod(rand_series(np.random.default_rng(8)), 2)
        grid = model.grid
        z = encode(model, PatchedSeries(grid, np.zeros((2, grid.n_patches, grid.patch_dim))))
        np.testing.assert_array_equal(z.values, 0.0)

    def test_encode_matches_triple_loop_oracle(self):
        rng = np.random.default_rng(9)
        series = rand_series(rng, t=6)
        model = fit_patch_pod(series, 3)
        z = encode(model, series)
        t, n, d = series.values.shape
        oracle = np.zeros((t, n, 3))
        for ti in range(t):
            for ni in range(n):
                for e in range(3):
                    acc = 0.0
                    for di in range(d):
                        acc += model.bases[ni, di, e] * series.values[ti, ni, di]
                    oracle[ti, ni, e] = acc
        np.testing.assert_allclose(z.values, oracle, rtol=0, atol=1e-12)

    def test_decode_unit_vector_gives_basis_column(self):
        model = fit_patch_pod(rand_series(np.random.default_rng(10)), 3)
        grid = model.grid
        z = np.zeros((1, grid.n_patches, 3))
        z[0, :, 2] = 1.0
        x = decode(model, LatentSeries(z))
        np.testing.assert_allclose(x.values[0], model.bases[:, :, 2], atol=1e-14)

    def test_projection_idempotent(self):
        rng = np.random.default_rng(11)
        series = rand_series(rng)
        model = fit_patch_pod(series, 3)
        once = decode(model, encode(model, series))
        twice = decode(model, encode(model, once))
        np.testing.assert_allclose(twice.values, once.values, rtol=0, atol=1e-10)

    def test_projection_contracts_norm(self):
        rng = np.random.default_rng(12)
        series = rand_series(rng, t=20)
        model = fit_patch_pod(series, 3)
        proj = decode(model, encode(model, series))
        norm_in = np.linalg.norm(series.values, axis=2)
        norm_out = np.linalg.norm(proj.values, axis=2)
        assert np.all(norm_out <= norm_in + 1e-12)

    def test_grid_mismatch_rejected(self):
        model = fit_patch_pod(rand_series(np.random.default_rng(13), h=4, w=4, p=2), 2)
        other = rand_series(np.random.default_rng(14), h=8, w=8, p=4)
        with pytest.raises(ValidationError, match="grid"):
            encode(model, other)

    def test_decode_dim_mismatch_rejected(self):
        model = fit_patch_pod(rand_series(np.random.default_rng(15)), 2)
        with pytest.raises(ValidationError, match="match"):
            decode(model, LatentSeries(np.zeros((1, model.grid.n_patches, 5))))


class TestAeLoss:
    def test_zero_at_full_rank(self):
        rng = np.random.default_rng(16)
        series = series_from_matrix(rng.standard_normal((4, 8)))
        model = fit_patch_pod(series, 4)
        assert ae_loss(model, series) < 1e-12

    def test_exact_capture_of_low_rank_data(self):
        rng = np.random.default_rng(17)
        mat = rng.standard_normal((16, 3)) @ rng.standard_normal((3, 12))
        series = series_from_matrix(mat)
        model = fit_patch_pod(series, 5)
        assert ae_loss(model, series) < 1e-16

    def test_nonincreasing_in_latent_dim(self):
        rng = np.random.default_rng(18)
        series = rand_series(rng, t=15)
        losses = [ae_loss(fit_patch_pod(series, ne), series) for ne in range(1, 8)]
        assert all(b <= a + 1e-12 for a, b in zip(losses, losses[1:]))

    def test_per_element_scaling(self):
        rng = np.random.default_rng(19)
        series = rand_series(rng, t=9)
        model = fit_patch_pod(series, 2)
        raw = ae_loss(model, series, per_element=False)
        per = ae_loss(model, series)
        np.testing.assert_allclose(per, raw / series.values.size, rtol=1e-15)


class TestInvariants:
    def test_orthonormal_bases(self):
        rng = np.random.default_rng(20)
        model = fit_patch_pod(rand_series(rng, t=20), 4)
        for n in range(model.grid.n_patches):
            u = model.bases[n]
            err = np.max(np.abs(u.T @ u - np.eye(4)))
            assert err < 1e-10

    def test_beats_random_orthonormal_bases(self):
        rng = np.random.default_rng(21)
        series = rand_series(rng, t=20)
        model = fit_patch_pod(series, 3)
        best = ae_loss(model, series, per_element=False)
        d = series.grid.patch_dim
        for trial in range(20):
            q, _ = np.linalg.qr(rng.standard_normal((d, 3)))
            recon = np.einsum("de,tne->tnd", q, np.einsum("de,tnd->tne", q, series.values))
            rand_loss = float(np.sum((recon - series.values) ** 2))
            assert best <= rand_loss + 1e-12

    def test_eckart_young_residual(self):
        rng = np.random.default_rng(22)
        series = rand_series(rng, t=18, h=4, w=4, c=1, p=2)
        ne = 2
        model = fit_patch_pod(series, ne)
        recon = decode(model, encode(model, series))
        for n in range(series.grid.n_patches):
            resid = float(np.sum((recon.values[:, n] - series.values[:, n]) ** 2))
            sigma = singular_values_by_eigh(series.values[:, n, :].T)
            expect = float(np.sum(sigma[ne:] ** 2))
            np.testing.assert_allclose(resid, expect, rtol=1e-8)
