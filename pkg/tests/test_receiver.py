import math

import numpy as np
import pytest

from turbqkd import receiver as rc
from turbqkd import screens as sc
from turbqkd import turbmath as tm

P_NONE = tm.TurbulenceParams(D=0.2, r0=math.inf, wavelength=532e-9)


def small_model(**kw):
    return rc.ReceiverModel(resolution=128, **kw)


class TestPolarization:
    def test_projectors_idempotent_hermitian(self):
        model = small_model()
        for k in rc.STATES:
            proj = model.projector(k)
            np.testing.assert_allclose(proj @ proj, proj, atol=1e-12)
            np.testing.assert_allclose(proj, proj.conj().T, atol=1e-12)

    def test_orthogonal_input_bounded_by_extinction(self):
        model = small_model()
        t = model.polarization_transmission("V", "H")
        assert t == pytest.approx(1.0 / model.extinction["V"])

    def test_matched_input_full(self):
        model = small_model()
        for k in rc.STATES:
            assert model.polarization_transmission(k, k) == pytest.approx(1.0)

    def test_circular_splits_evenly(self):
        model = rc.ReceiverModel.balanced(resolution=128)
        vals = [model.polarization_transmission(k, "circular") for k in rc.STATES]
        assert max(vals) - min(vals) < 1e-9

    def test_unknown_polarization(self):
        with pytest.raises(ValueError, match="unknown polarization"):
            rc.jones_vector("elliptical?")


class TestChannelEfficiency:
    def test_balanced_model_symmetric(self):
        model = rc.ReceiverModel.balanced(resolution=128)
        for angle in [(0.0, 0.0), (7e-4, -4e-4)]:
            effs = [
                rc.channel_efficiency(model, k, angle, None, "circular")
                for k in rc.STATES
            ]
            assert max(effs) - min(effs) < 1e-6 * max(effs)

    def test_crossed_polarizer_dark(self):
        model = small_model()
        h = rc.channel_efficiency(model, "H", (0.0, 0.0), None, "H")
        v = rc.channel_efficiency(model, "V", (0.0, 0.0), None, "H")
        assert v <= h / model.extinction["V"] * 1.5

    def test_peak_tracks_coupler_offset(self):
        model = small_model()
        ox = model.offsets["H"][0]
        angles = np.linspace(-2.7e-3, 2.7e-3, 81)
        effs = [
            rc.channel_efficiency(model, "H", (a, 0.0), None, "circular")
            for a in angles
        ]
        peak_angle = angles[int(np.argmax(effs))]
        assert peak_angle == pytest.approx(ox / model.f_eff, abs=1.5 * (angles[1] - angles[0]))

    def test_angle_out_of_range(self):
        model = small_model()
        with pytest.raises(ValueError, match="field of view"):
            rc.channel_efficiency(model, "H", (0.02, 0.0))

    def test_screen_resolution_must_match(self):
        model = small_model()
        screen = sc.render(sc.sample_coeffs(P_NONE, 0), 256)
        with pytest.raises(ValueError, match="resolution"):
            rc.channel_efficiency(model, "H", (0.0, 0.0), screen)


class TestEfficiencyMapIO:
    def _demo_map(self, n=41):
        angles = (np.arange(n) - n // 2) * 135e-6
        rng = np.random.default_rng(0)
        tau = {k: np.abs(rng.random((n, n))) for k in rc.STATES}
        return rc.EfficiencyMap(thetas=angles, phis=angles, tau=tau)

    def test_round_trip_identity(self, tmp_path):
        emap = self._demo_map()
        path = tmp_path / "map.csv"
        rc.save_map(emap, path)
        back = rc.load_measured_map(path)
        np.testing.assert_allclose(back.thetas, emap.thetas, atol=1e-15)
        for k in rc.STATES:
            np.testing.assert_allclose(back.tau[k], emap.tau[k], rtol=1e-11)

    def test_golden_grid_accepted(self, tmp_path):
        emap = self._demo_map(41)
        path = tmp_path / "map.csv"
        rc.save_map(emap, path)
        assert sum(1 for _ in open(path)) == 1682  # header + 41*41 rows
        back = rc.load_measured_map(path)
        assert back.tau["H"].shape == (41, 41)
        assert back.reference is not None

    def test_duplicate_row_rejected(self, tmp_path):
        emap = self._demo_map(5)
        path = tmp_path / "map.csv"
        rc.save_map(emap, path)
        lines = path.read_text().splitlines()
        lines.append(lines[1])
        path.write_text("\n".join(lines) + "\n")
        with pytest.raises(ValueError, match="duplicate"):
            rc.load_measured_map(path)

    def test_incomplete_grid_rejected(self, tmp_path):
        emap = self._demo_map(5)
        path = tmp_path / "map.csv"
        rc.save_map(emap, path)
        lines = path.read_text().splitlines()
        del lines[7]
        path.write_text("\n".join(lines) + "\n")
        with pytest.raises(ValueError, match="incomplete grid"):
            rc.load_measured_map(path)

    def test_negative_efficiency_rejected(self, tmp_path):
        path = tmp_path / "map.csv"
        emap = self._demo_map(3)
        rc.save_map(emap, path)
        lines = path.read_text().splitlines()
        parts = lines[1].split(",")
        parts[2] = "-0.5"
        lines[1] = ",".join(parts)
        path.write_text("\n".join(lines) + "\n")
        with pytest.raises(ValueError, match="line 2.*negative"):
            rc.load_measured_map(path)

    def test_malformed_row_named(self, tmp_path):
        path = tmp_path / "map.csv"
        path.write_text(
            "theta_rad,phi_rad,tau_H,tau_V,tau_D,tau_A\n0,0,1,1,1\n"
        )
        with pytest.raises(ValueError, match="line 2"):
            rc.load_measured_map(path)


class TestModelValidation:
    def test_eta_bounds(self):
        with pytest.raises(ValueError, match="eta_det"):
            rc.ReceiverModel(eta_det={k: 1.5 for k in rc.STATES})

    def test_extinction_bounds(self):
        with pytest.raises(ValueError, match="extinction"):
            rc.ReceiverModel(extinction={k: 0.5 for k in rc.STATES})

    def test_missing_channel(self):
        with pytest.raises(ValueError, match="missing channel"):
            rc.ReceiverModel(offsets={"H": (0.0, 0.0)})
