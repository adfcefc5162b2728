import math

import numpy as np
import pytest

from turbqkd import optics as op
from turbqkd import receiver as rc
from turbqkd import scan as sn
from turbqkd import screens as sc
from turbqkd import turbmath as tm

P_NONE = tm.TurbulenceParams(D=0.2, r0=math.inf, wavelength=532e-9)


def make_ensemble(r0, pool_seed=11, pool_size=500, resolution=128):
    if math.isinf(r0):
        params = P_NONE
        pool = sc.sample_pool(params, pool_seed, 40)
        return params, sc.build_ensemble(pool, params, lambda s: (0.0, 0.0))
    params = tm.TurbulenceParams(D=0.2, r0=r0, wavelength=532e-9)
    pool = sc.sample_pool(params, pool_seed, pool_size)
    prop = op.make_centroid_propagator(params, resolution=resolution, oversample=4)
    return params, sc.build_ensemble(pool, params, prop)


@pytest.fixture(scope="module")
def no_turb_scan():
    model = rc.ReceiverModel(resolution=128)
    _, ens = make_ensemble(math.inf)
    return model, ens, sn.run_scan(model, ens, sn.ScanSpec())


class TestScanSpec:
    def test_default_grid_positions(self):
        spec = sn.ScanSpec()
        assert spec.positions == 1681
        angles = spec.angles()
        assert len(angles) % 2 == 1
        assert angles[len(angles) // 2] == 0.0
        assert angles.max() == pytest.approx(2.7e-3)

    def test_non_integer_range_rejected(self):
        with pytest.raises(ValueError, match="integer multiple"):
            sn.ScanSpec(angle_range=2.75e-3, step=135e-6)


class TestRunScan:
    def test_no_turbulence_maps_identical(self, no_turb_scan):
        _, _, result = no_turb_scan
        first = result.maps[0]
        for emap in result.maps[1:]:
            for k in rc.STATES:
                np.testing.assert_array_equal(emap.tau[k], first.tau[k])

    def test_flat_member_equals_no_turbulence_map(self):
        params = tm.TurbulenceParams(D=0.2, r0=0.01, wavelength=532e-9)
        pool = sc.sample_pool(params, 11, 500)
        prop = op.make_centroid_propagator(params, resolution=128, oversample=4)
        ens = sc.build_ensemble(pool, params, prop)
        model = rc.ReceiverModel(resolution=128)
        result = sn.run_scan(model, ens, sn.ScanSpec())
        _, flat_ens = make_ensemble(math.inf)
        flat = sn.run_scan(model, flat_ens, sn.ScanSpec())
        for k in rc.STATES:
            np.testing.assert_allclose(
                result.maps[0].tau[k], flat.maps[0].tau[k], rtol=1e-12
            )

    def test_center_normalized(self, no_turb_scan):
        _, _, result = no_turb_scan
        center = len(result.weighted.thetas) // 2
        for k in rc.STATES:
            assert 0.9 < result.weighted.tau[k][center, center] < 1.1

    def test_thread_count_does_not_change_result(self, no_turb_scan):
        model, ens, result = no_turb_scan
        threaded = sn.run_scan(model, ens, sn.ScanSpec(), threads=3)
        for k in rc.STATES:
            np.testing.assert_array_equal(
                threaded.weighted.tau[k], result.weighted.tau[k]
            )

    def test_map_continuity_without_turbulence(self, no_turb_scan):
        _, _, result = no_turb_scan
        for k in rc.STATES:
            t = result.weighted.tau[k]
            dmax = max(
                np.abs(np.diff(t, axis=0)).max(), np.abs(np.diff(t, axis=1)).max()
            )
            assert dmax < 0.5 * t.max()

    def test_mismatch_mechanism_present(self, no_turb_scan):
        # The synthetic receiver must expose a usable mismatch off-axis.
        _, _, result = no_turb_scan
        aset = sn.find_attack_angles(result.weighted)
        assert aset.max_delta() >= 5.0
        for k in aset.states:
            entry = aset.best(k)
            assert entry.theta != 0.0 or entry.phi != 0.0


class TestWeightedMap:
    def _uniform_map(self, value):
        angles = np.linspace(-1e-3, 1e-3, 5)
        tau = {k: np.full((5, 5), value) for k in rc.STATES}
        return rc.EfficiencyMap(thetas=angles, phis=angles, tau=tau)

    def test_identical_maps_pass_through(self):
        maps = [self._uniform_map(0.7) for _ in range(29)]
        bins = [0] + [1] * 8 + [2] * 8 + [3] * 8 + [4] * 4
        out = sn.weighted_map(maps, bins, sc.annulus_weights())
        np.testing.assert_allclose(out.tau["H"], 0.7)

    def test_two_bin_hand_example(self):
        maps = [self._uniform_map(1.0), self._uniform_map(0.0)]
        out = sn.weighted_map(maps, [0, 1], [0.1175, 0.8825])
        np.testing.assert_allclose(out.tau["D"], 0.1175)

    def test_bin_means_before_weights(self):
        maps = [self._uniform_map(v) for v in (1.0, 0.4, 0.8)]
        out = sn.weighted_map(maps, [0, 1, 1], [0.25, 0.75])
        np.testing.assert_allclose(out.tau["V"], 0.25 * 1.0 + 0.75 * 0.6)

    def test_permutation_within_bin_invariant(self):
        rng = np.random.default_rng(1)
        angles = np.linspace(-1e-3, 1e-3, 5)
        maps = []
        for _ in range(4):
            tau = {k: rng.random((5, 5)) for k in rc.STATES}
            maps.append(rc.EfficiencyMap(thetas=angles, phis=angles, tau=tau))
        a = sn.weighted_map(maps, [0, 0, 1, 1], [0.5, 0.5])
        b = sn.weighted_map([maps[1], maps[0], maps[3], maps[2]], [0, 0, 1, 1], [0.5, 0.5])
        for k in rc.STATES:
            np.testing.assert_allclose(a.tau[k], b.tau[k])

    def test_weight_count_mismatch(self):
        maps = [self._uniform_map(1.0)]
        with pytest.raises(ValueError):
            sn.weighted_map(maps, [0], [0.5, 0.4])


class TestFindAttackAngles:
    def _map_with_peak(self):
        angles = np.linspace(-2.7e-3, 2.7e-3, 41)
        tau = {k: np.full((41, 41), 0.004) for k in rc.STATES}
        tau["H"] = tau["H"].copy()
        tau["H"][30, 20] = 0.1  # isolated H-only peak
        return rc.EfficiencyMap(thetas=angles, phis=angles, tau=tau)

    def test_uniform_map_gives_delta_one(self):
        angles = np.linspace(-1e-3, 1e-3, 9)
        tau = {k: np.full((9, 9), 0.5) for k in rc.STATES}
        emap = rc.EfficiencyMap(thetas=angles, phis=angles, tau=tau)
        aset = sn.find_attack_angles(emap)
        for k in rc.STATES:
            assert aset.best(k).delta == pytest.approx(1.0)
        thresholded = sn.find_attack_angles(emap, mode="threshold", delta=1.5)
        assert thresholded.states == ()

    def test_synthetic_peak_found_exhaustively(self):
        emap = self._map_with_peak()
        aset = sn.find_attack_angles(emap)
        entry = aset.best("H")
        assert entry.delta == pytest.approx(25.0)
        assert entry.tau == pytest.approx(0.1)
        # brute-force oracle over the whole grid
        best = 0.0
        for i in range(41):
            for j in range(41):
                th = emap.tau["H"][i, j]
                if th < 0.01:
                    continue
                ratio = min(th / emap.tau["D"][i, j], th / emap.tau["A"][i, j])
                best = max(best, ratio)
        assert entry.delta == pytest.approx(best)

    def test_threshold_mode_lists_all(self):
        emap = self._map_with_peak()
        aset = sn.find_attack_angles(emap, mode="threshold", delta=20.0)
        assert len(aset.channels["H"]) == 1
        assert "V" not in aset.channels

    def test_dim_channels_excluded(self):
        angles = np.linspace(-1e-3, 1e-3, 5)
        tau = {k: np.full((5, 5), 1e-4) for k in rc.STATES}
        emap = rc.EfficiencyMap(thetas=angles, phis=angles, tau=tau)
        aset = sn.find_attack_angles(emap)
        assert aset.states == ()

    def test_table_style_fixture_recovered_from_map(self):
        # Build a synthetic map realizing the no-turbulence summary row
        # and check the ingestion+search path reproduces it.
        delta = {"H": 22.0, "V": 30.0, "D": 5.0, "A": 1.2}
        tau_at = {"H": 0.1, "V": 0.03, "D": 0.3, "A": 0.001}
        spots = {"H": (5, 5), "V": (5, 35), "D": (35, 5), "A": (35, 35)}
        angles = np.linspace(-2.7e-3, 2.7e-3, 41)
        tau = {k: np.full((41, 41), 1e-9) for k in rc.STATES}
        for k in rc.STATES:
            i, j = spots[k]
            tau[k][i, j] = tau_at[k]
            for c in rc.CONJUGATE[k]:
                tau[c][i, j] = tau_at[k] / delta[k]
        emap = rc.EfficiencyMap(thetas=angles, phis=angles, tau=tau)
        aset = sn.find_attack_angles(emap, tau_floor=1e-4)
        for k in rc.STATES:
            assert aset.best(k).delta == pytest.approx(delta[k], rel=1e-9)
            assert aset.best(k).tau == pytest.approx(tau_at[k], rel=1e-9)


@pytest.mark.slow
class TestTurbulenceTrend:
    def test_max_delta_degrades_monotonically(self):
        model = rc.ReceiverModel(resolution=128)
        deltas = []
        for r0 in (math.inf, 0.035, 0.0153, 0.01):
            _, ens = make_ensemble(r0)
            result = sn.run_scan(model, ens, sn.ScanSpec())
            deltas.append(sn.find_attack_angles(result.weighted).max_delta())
        assert all(a >= b - 1e-9 for a, b in zip(deltas, deltas[1:]))
        assert deltas[0] > 5 * deltas[-1]  # strong turbulence flattens it


class TestOutputs:
    def test_attack_angle_csv(self, tmp_path, no_turb_scan):
        _, _, result = no_turb_scan
        aset = sn.find_attack_angles(result.weighted)
        path = tmp_path / "angles.csv"
        sn.write_attack_angles(aset, path)
        lines = path.read_text().splitlines()
        assert lines[0] == "channel,theta_rad,phi_rad,delta,tau"
        assert len(lines) == 1 + len(aset.states)
