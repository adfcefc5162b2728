import numpy as np
import pytest

from turbqkd import cli


SMALL_CFG = """\
turbulence.r0_cm=3.50
screens.pool_size=300
screens.resolution_px=128
receiver.resolution_px=128
run.seed=5
"""


def write_cfg(tmp_path, text, name="run.cfg"):
    path = tmp_path / name
    path.write_text(text)
    return str(path)


class TestConfig:
    def test_defaults_without_file(self):
        cfg, raw = cli.load_config(None)
        assert cfg["scan.step_urad"] == "135.0"
        assert raw == ""

    def test_unknown_key_rejected(self, tmp_path):
        path = write_cfg(tmp_path, "nonsense.key=1\n")
        with pytest.raises(cli.ConfigError, match="unknown key"):
            cli.load_config(path)

    def test_comments_and_blanks_ignored(self, tmp_path):
        path = write_cfg(tmp_path, "# comment\n\nrun.seed=9\n")
        cfg, _ = cli.load_config(path)
        assert cfg["run.seed"] == "9"

    def test_malformed_line_rejected(self, tmp_path):
        path = write_cfg(tmp_path, "run.seed 9\n")
        with pytest.raises(cli.ConfigError, match="key=value"):
            cli.load_config(path)


class TestWitnessCommand:
    def test_ideal_fixture_exit_zero(self, tmp_path, capsys):
        out = tmp_path / "out"
        code = cli.main(["--out", str(out), "witness"])
        assert code == 0
        assert "entanglement-verified" in capsys.readouterr().out
        assert (out / "verdict.txt").exists()
        assert (out / "distribution.csv").exists()
        assert (out / "version.txt").read_text().startswith("turbqkd ")

    def test_mismatch_fixture(self, tmp_path, capsys):
        cfg = write_cfg(tmp_path, "witness.fixture=mismatch:inf\n")
        code = cli.main(["--config", cfg, "--out", str(tmp_path / "o"), "witness"])
        assert code == 0
        assert "compatible-with-ir" in capsys.readouterr().out

    def test_config_echoed_verbatim(self, tmp_path):
        text = "witness.fixture=ir\n# note\n"
        cfg = write_cfg(tmp_path, text)
        out = tmp_path / "o"
        assert cli.main(["--config", cfg, "--out", str(out), "witness"]) == 0
        assert (out / "config.echo.txt").read_text() == text


class TestAttackCommand:
    def test_infeasible_row_exits_two(self, tmp_path, capsys):
        cfg = write_cfg(
            tmp_path, "attack.fixture_r0_cm=1.00\nattack.loss_max_db=10\n"
            "attack.loss_step_db=1.0\n"
        )
        code = cli.main(["--config", cfg, "--out", str(tmp_path / "o"), "attack"])
        assert code == 2
        assert "no feasible attack" in capsys.readouterr().out

    def test_feasible_row_summary(self, tmp_path, capsys):
        cfg = write_cfg(
            tmp_path,
            "attack.fixture_r0_cm=1.53\nattack.loss_min_db=6.0\n"
            "attack.loss_max_db=10.0\nattack.loss_step_db=0.5\n",
        )
        out = tmp_path / "o"
        code = cli.main(["--config", cfg, "--out", str(out), "attack"])
        assert code == 0
        text = capsys.readouterr().out
        assert "max_feasible_loss_db=" in text
        assert "unsafe_radius_m=" in text
        radius = float(text.split("unsafe_radius_m=")[1].split()[0])
        assert radius == pytest.approx(1000.0, rel=0.05)
        lines = (out / "qber_curve.csv").read_text().splitlines()
        assert lines[0] == "loss_db,qber,feasible,mu_H,mu_V,mu_D,mu_A"

    def test_error_exit_one(self, tmp_path):
        cfg = write_cfg(tmp_path, "attack.fixture_r0_cm=9.99\n")
        assert cli.main(["--config", cfg, "--out", str(tmp_path / "o"), "attack"]) == 1


@pytest.mark.slow
class TestScanAndScreens:
    def test_scan_outputs_and_determinism(self, tmp_path, capsys):
        cfg = write_cfg(tmp_path, SMALL_CFG)
        out1, out2 = tmp_path / "a", tmp_path / "b"
        assert cli.main(["--config", cfg, "--out", str(out1), "scan"]) == 0
        assert cli.main(["--config", cfg, "--out", str(out2), "scan"]) == 0
        maps = sorted(p.name for p in out1.glob("map_*.csv"))
        assert len(maps) == 30  # 29 per-hologram + weighted
        weighted = (out1 / "map_weighted.csv").read_text()
        assert len(weighted.splitlines()) == 1682
        assert weighted == (out2 / "map_weighted.csv").read_text()
        assert (out1 / "map_weighted_H.pgm").exists()
        assert (out1 / "attack_angles.csv").exists()

    def test_screens_generate_and_verify(self, tmp_path, capsys):
        cfg = write_cfg(tmp_path, SMALL_CFG)
        out = tmp_path / "g"
        assert cli.main(["--config", cfg, "--seed", "7", "--out", str(out),
                         "screens", "generate"]) == 0
        text = capsys.readouterr().out
        assert "PASS" in text
        pool_a = (out / "pool.csv").read_bytes()
        out2 = tmp_path / "g2"
        assert cli.main(["--config", cfg, "--seed", "7", "--out", str(out2),
                         "screens", "generate"]) == 0
        assert pool_a == (out2 / "pool.csv").read_bytes()
        code = cli.main(["--config", cfg, "--out", str(tmp_path / "v"),
                         "screens", "verify", "--pool", str(out / "pool.csv")])
        assert code == 0

    def test_verify_no_turbulence_pool(self, tmp_path, capsys):
        cfg = write_cfg(tmp_path, SMALL_CFG + "turbulence.r0_cm=inf\n")
        out = tmp_path / "g"
        assert cli.main(["--config", cfg, "--out", str(out),
                         "screens", "generate"]) == 0
        assert "sigma = 0" in capsys.readouterr().out
