import math

import numpy as np
import pytest

from turbqkd import optics as op
from turbqkd import screens as sc
from turbqkd import turbmath as tm

P_STRONG = tm.TurbulenceParams(D=0.2, r0=0.01, wavelength=532e-9)
P_NONE = tm.TurbulenceParams(D=0.2, r0=math.inf, wavelength=532e-9)


class TestSampling:
    def test_deterministic_for_fixed_seed(self):
        a = sc.sample_coeffs(P_STRONG, 1234)
        b = sc.sample_coeffs(P_STRONG, 1234)
        np.testing.assert_array_equal(a.c, b.c)

    def test_different_seeds_differ(self):
        a = sc.sample_coeffs(P_STRONG, 1)
        b = sc.sample_coeffs(P_STRONG, 2)
        assert not np.array_equal(a.c, b.c)

    def test_no_turbulence_all_zero(self):
        s = sc.sample_coeffs(P_NONE, 99)
        np.testing.assert_array_equal(s.c, np.zeros(44))

    def test_piston_always_zero(self):
        for seed in range(20):
            assert sc.sample_coeffs(P_STRONG, seed).c[0] == 0.0

    def test_empirical_variance_matches_model(self):
        # Monte Carlo against the analytic coefficient variance.
        pool = sc.sample_pool(P_STRONG, 271828, 100_000)
        c2 = np.array([s.c[1] for s in pool])
        target = tm.coeff_variance(tm.noll_to_nm(2), P_STRONG)
        assert 0.97 < c2.var() / target < 1.03

    def test_pool_seeds_are_distinct(self):
        pool = sc.sample_pool(P_STRONG, 7, 500)
        assert len({s.seed for s in pool}) == 500


class TestRender:
    def test_zero_coeffs_flat(self):
        screen = sc.render(sc.sample_coeffs(P_NONE, 0), 128)
        np.testing.assert_array_equal(screen.grid, np.zeros((128, 128)))

    def test_tip_span(self):
        c = np.zeros(44)
        c[1] = 1.7
        screen = sc.render(sc.ZernikeCoeffs(c=c, seed=0, params=P_STRONG), 256)
        inside = screen.weights > 0.5
        span = screen.grid[inside].max() - screen.grid[inside].min()
        assert span == pytest.approx(4 * 1.7, rel=0.02)

    def test_refit_recovers_coefficients(self):
        coeffs = sc.sample_coeffs(P_STRONG, 5)
        screen = sc.render(coeffs, 512)
        basis = sc._basis(512).reshape(44, -1)
        w = screen.weights.ravel()
        g = (basis * w) @ basis.T
        rhs = (basis * w) @ screen.grid.ravel()
        fitted = np.linalg.solve(g, rhs)
        np.testing.assert_allclose(fitted, coeffs.c, atol=1e-3)

    def test_resolution_floor(self):
        with pytest.raises(ValueError, match="resolution"):
            sc.render(sc.sample_coeffs(P_STRONG, 0), 32)

    def test_orthonormality_at_512(self):
        basis = sc._basis(512).reshape(44, -1)
        w = sc.aperture_weights(512).ravel()
        gram = (basis * w) @ basis.T / w.sum()
        assert np.abs(gram - np.eye(44)).max() < 1e-3


class TestTipTiltCorrection:
    def test_tip_only_becomes_flat(self):
        c = np.zeros(44)
        c[1] = 2.0
        c[2] = -1.0
        out = sc.correct_tip_tilt(sc.ZernikeCoeffs(c=c, seed=0, params=P_STRONG))
        np.testing.assert_array_equal(out.c, np.zeros(44))

    def test_defocus_untouched(self):
        c = np.zeros(44)
        c[3] = 0.8
        out = sc.correct_tip_tilt(sc.ZernikeCoeffs(c=c, seed=0, params=P_STRONG))
        np.testing.assert_array_equal(out.c, c)

    def test_idempotent(self):
        s = sc.sample_coeffs(P_STRONG, 17)
        once = sc.correct_tip_tilt(s)
        twice = sc.correct_tip_tilt(once)
        np.testing.assert_array_equal(once.c, twice.c)

    def test_mean_centroid_shrinks(self):
        pool = sc.sample_pool(P_STRONG, 31, 40)
        prop = op.make_centroid_propagator(P_STRONG, resolution=128, oversample=4)
        raw = np.mean([math.hypot(*prop(s)) for s in pool])
        corrected = np.mean(
            [math.hypot(*prop(sc.correct_tip_tilt(s))) for s in pool]
        )
        assert corrected < raw


class TestAnnulusWeights:
    def test_default_boundaries_match_rayleigh_integrals(self):
        w = sc.annulus_weights()
        np.testing.assert_allclose(
            w, [0.1175, 0.2760, 0.4712, 0.1242, 0.0111], atol=1e-4
        )

    def test_sum_to_one(self):
        assert sc.annulus_weights((0.3, 0.9, 1.4)).sum() == pytest.approx(1.0)

    def test_monte_carlo_agreement(self):
        rng = np.random.default_rng(6)
        n = 2_000_000
        r = np.hypot(rng.standard_normal(n), rng.standard_normal(n))
        counts = np.histogram(r, bins=[0.0, 0.5, 1.0, 2.0, 3.0, np.inf])[0] / n
        w = sc.annulus_weights()
        se = np.sqrt(w * (1 - w) / n)
        assert np.all(np.abs(counts - w) < 3 * se)

    def test_invalid_boundaries(self):
        with pytest.raises(ValueError):
            sc.annulus_weights((1.0, 0.5))
        with pytest.raises(ValueError):
            sc.annulus_weights((-1.0, 2.0))


class TestEnsemble:
    def _propagator(self):
        return op.make_centroid_propagator(P_STRONG, resolution=128, oversample=4)

    def test_no_turbulence_degenerates_flat(self):
        pool = sc.sample_pool(P_NONE, 3, 60)
        ens = sc.build_ensemble(pool, P_NONE, propagator=lambda s: (0.0, 0.0))
        assert len(ens.members) == 29
        for member in ens.members:
            np.testing.assert_array_equal(member.c, np.zeros(44))

    def test_bin_counts_and_radii(self):
        pool = sc.sample_pool(P_STRONG, 11, 500)
        prop = self._propagator()
        ens = sc.build_ensemble(pool, P_STRONG, prop)
        counts = [ens.member_bins.count(i) for i in range(5)]
        assert counts == [1, 8, 8, 8, 4]
        sigma = ens.sigma_ref
        assert sigma == pytest.approx(tm.tilt_std_per_axis(P_STRONG))
        targets = {1: 0.5, 2: 1.0, 3: 2.0, 4: 3.0}
        for member, b in zip(ens.members, ens.member_bins):
            radius = math.hypot(*prop(member))
            if b == 0:
                assert radius < 0.1 * sigma
            else:
                target = targets[b] * sigma
                assert abs(radius - target) <= 0.10 * target + 1e-12

    def test_flat_member_is_exactly_flat(self):
        pool = sc.sample_pool(P_STRONG, 11, 500)
        ens = sc.build_ensemble(pool, P_STRONG, self._propagator())
        np.testing.assert_array_equal(ens.members[0].c, np.zeros(44))

    def test_weights_independent_of_r0(self):
        pool = sc.sample_pool(P_STRONG, 11, 500)
        ens = sc.build_ensemble(pool, P_STRONG, self._propagator())
        np.testing.assert_allclose(ens.weights, sc.annulus_weights())

    def test_small_pool_rejected(self):
        pool = sc.sample_pool(P_STRONG, 1, 20)
        with pytest.raises(ValueError, match="pool too small"):
            sc.build_ensemble(pool, P_STRONG, self._propagator())

    def test_degenerate_pool_rejected(self):
        flat = [sc.sample_coeffs(P_NONE, i) for i in range(40)]
        recast = [
            sc.ZernikeCoeffs(c=s.c, seed=s.seed, params=P_STRONG) for s in flat
        ]
        with pytest.raises(ValueError, match="degenerate"):
            sc.build_ensemble(recast, P_STRONG, propagator=lambda s: (0.0, 0.0))


class TestPoolPersistence:
    def test_round_trip(self, tmp_path):
        pool = sc.sample_pool(P_STRONG, 42, 25)
        path = tmp_path / "pool.csv"
        sc.save_pool(path, pool)
        params, loaded = sc.load_pool(path)
        assert params.D == P_STRONG.D and params.r0 == P_STRONG.r0
        for a, b in zip(pool, loaded):
            assert a.seed == b.seed
            np.testing.assert_array_equal(a.c, b.c)

    def test_header_required(self, tmp_path):
        path = tmp_path / "bad.csv"
        path.write_text("not,a,pool\n")
        with pytest.raises(ValueError, match="not a turbqkd-pool"):
            sc.load_pool(path)

    def test_corrupt_row_named(self, tmp_path):
        pool = sc.sample_pool(P_STRONG, 42, 3)
        path = tmp_path / "pool.csv"
        sc.save_pool(path, pool)
        lines = path.read_text().splitlines()
        lines[3] = lines[3].replace(",", ";", 1)
        path.write_text("\n".join(lines) + "\n")
        with pytest.raises(ValueError, match="line 4"):
            sc.load_pool(path)
