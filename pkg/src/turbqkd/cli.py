"""Command-line front end.

Subcommands `screens`, `scan`, `attack` and `witness` wire pools,
ensembles, scans, attack optimization and feasibility checks into
reproducible pipelines.  Configuration is a flat key=value file with
section prefixes and explicit units in key names; every run echoes its
configuration and the tool version into the output directory, and
identical inputs produce byte-identical outputs.

Exit codes: 0 success, 1 error, 2 infeasible or indeterminate domain
verdicts.
"""

from __future__ import annotations

import argparse
import math
import sys
from pathlib import Path

import numpy as np

from . import __version__
from . import attack as at
from . import optics as op
from . import receiver as rc
from . import scan as sn
from . import screens as sc
from . import turbmath as tm
from . import witness as wt

DEFAULTS = {
    "run.seed": "1",
    "run.threads": "1",
    "turbulence.beam_d_cm": "20.0",
    "turbulence.r0_cm": "1.00",
    "turbulence.wavelength_nm": "532.0",
    "turbulence.cn2": "1.8e-14",
    "screens.pool_size": "500",
    "screens.resolution_px": "512",
    "screens.oversample": "4",
    "receiver.preset": "demo",
    "receiver.resolution_px": "256",
    "scan.range_mrad": "2.7",
    "scan.step_urad": "135.0",
    "scan.pol": "circular",
    "scan.correct_tip_tilt": "true",
    "attack.fixture_r0_cm": "inf",
    "attack.map_csv": "",
    "attack.mu_alice": str(at.FIXTURE_MU_ALICE),
    "attack.eta_bob": str(at.FIXTURE_ETA_BOB),
    "attack.eta_eve": "0.85",
    "attack.qber_threshold": "0.08",
    "attack.loss_min_db": "0.0",
    "attack.loss_max_db": "30.0",
    "attack.loss_step_db": "0.25",
    "witness.fixture": "ideal",
    "witness.tol": "1e-7",
}


class ConfigError(ValueError):
    pass


def load_config(path: str | None) -> tuple[dict, str]:
    """Parse a flat key=value config; unknown keys are rejected."""
    values = dict(DEFAULTS)
    raw = ""
    if path:
        raw = Path(path).read_text(encoding="utf-8")
        for lineno, line in enumerate(raw.splitlines(), start=1):
            stripped = line.strip()
            if not stripped or stripped.startswith("#"):
                continue
            if "=" not in stripped:
                raise ConfigError(f"{path}: line {lineno}: expected key=value")
            key, value = (part.strip() for part in stripped.split("=", 1))
            if key not in DEFAULTS:
                raise ConfigError(f"{path}: line {lineno}: unknown key {key!r}")
            values[key] = value
    return values, raw


def _bool(value: str) -> bool:
    if value.lower() in ("true", "1", "yes"):
        return True
    if value.lower() in ("false", "0", "no"):
        return False
    raise ConfigError(f"expected boolean, got {value!r}")


def turbulence_params(cfg: dict) -> tm.TurbulenceParams:
    r0_cm = cfg["turbulence.r0_cm"]
    r0 = math.inf if r0_cm.lower() in ("inf", "infinity") else float(r0_cm) / 100.0
    return tm.TurbulenceParams(
        D=float(cfg["turbulence.beam_d_cm"]) / 100.0,
        r0=r0,
        wavelength=float(cfg["turbulence.wavelength_nm"]) * 1e-9,
    )


def receiver_model(cfg: dict) -> rc.ReceiverModel:
    preset = cfg["receiver.preset"]
    res = int(cfg["receiver.resolution_px"])
    if preset == "demo":
        return rc.ReceiverModel(resolution=res)
    if preset == "balanced":
        return rc.ReceiverModel.balanced(resolution=res)
    raise ConfigError(f"unknown receiver.preset {preset!r}")


def scan_spec(cfg: dict) -> sn.ScanSpec:
    return sn.ScanSpec(
        angle_range=float(cfg["scan.range_mrad"]) * 1e-3,
        step=float(cfg["scan.step_urad"]) * 1e-6,
        input_pol=cfg["scan.pol"],
        remove_tip_tilt=_bool(cfg["scan.correct_tip_tilt"]),
    )


def prepare_outdir(out: str, cfg_raw: str) -> Path:
    outdir = Path(out)
    outdir.mkdir(parents=True, exist_ok=True)
    (outdir / "config.echo.txt").write_text(cfg_raw, encoding="utf-8")
    (outdir / "version.txt").write_text(f"turbqkd {__version__}\n", encoding="ascii")
    return outdir


def _build_pool_and_ensemble(cfg: dict, seed: int):
    params = turbulence_params(cfg)
    pool = sc.sample_pool(params, seed, int(cfg["screens.pool_size"]))
    if math.isinf(params.r0):
        propagator = lambda coeffs: (0.0, 0.0)  # noqa: E731
    else:
        propagator = op.make_centroid_propagator(
            params,
            resolution=int(cfg["screens.resolution_px"]),
            oversample=int(cfg["screens.oversample"]),
        )
    ensemble = sc.build_ensemble(pool, params, propagator)
    return params, pool, ensemble, propagator


def _centroid_report(params, pool, propagator) -> tuple[str, bool]:
    sigma_pred = tm.tilt_std_per_axis(params)
    if math.isinf(params.r0):
        return "predicted sigma = 0 (no turbulence); measured sigma = 0\nPASS\n", True
    cents = np.array([propagator(s) for s in pool])
    meas = cents.std(axis=0, ddof=1)
    ok = bool(np.all(np.abs(meas / sigma_pred - 1.0) < 0.10))
    lines = [
        f"per-axis centroid std, predicted: {sigma_pred:.6e} rad",
        f"per-axis centroid std, measured x: {meas[0]:.6e} rad "
        f"({meas[0] / sigma_pred - 1.0:+.2%})",
        f"per-axis centroid std, measured y: {meas[1]:.6e} rad "
        f"({meas[1] / sigma_pred - 1.0:+.2%})",
        "PASS" if ok else "FAIL",
        "",
    ]
    return "\n".join(lines), ok


def cmd_screens(args, cfg, outdir) -> int:
    seed = args.seed if args.seed is not None else int(cfg["run.seed"])
    if args.action == "generate":
        params, pool, ensemble, propagator = _build_pool_and_ensemble(cfg, seed)
        sc.save_pool(outdir / "pool.csv", pool)
        sc.save_pool(outdir / "ensemble.csv", list(ensemble.members))
        report, _ = _centroid_report(params, pool, propagator)
        (outdir / "centroid_report.txt").write_text(report, encoding="ascii")
        print(report, end="")
        return 0
    # verify
    params, pool = sc.load_pool(args.pool)
    propagator = op.make_centroid_propagator(
        params,
        resolution=int(cfg["screens.resolution_px"]),
        oversample=int(cfg["screens.oversample"]),
    ) if not math.isinf(params.r0) else (lambda c: (0.0, 0.0))
    report, ok = _centroid_report(params, pool, propagator)
    print(report, end="")
    return 0 if ok else 2


def cmd_scan(args, cfg, outdir) -> int:
    seed = args.seed if args.seed is not None else int(cfg["run.seed"])
    threads = args.threads if args.threads is not None else int(cfg["run.threads"])
    _, _, ensemble, _ = _build_pool_and_ensemble(cfg, seed)
    model = receiver_model(cfg)
    spec = scan_spec(cfg)
    result = sn.run_scan(model, ensemble, spec, threads=threads)
    for i, emap in enumerate(result.maps):
        rc.save_map(emap, outdir / f"map_{i:02d}.csv")
    rc.save_map(result.weighted, outdir / "map_weighted.csv")
    for k in rc.STATES:
        op.save_pgm(result.weighted.tau[k], outdir / f"map_weighted_{k}.pgm")
    angles = sn.find_attack_angles(result.weighted)
    sn.write_attack_angles(angles, outdir / "attack_angles.csv")
    print(f"scan complete: {result.spec.positions} positions, "
          f"{len(result.maps)} holograms, reference {result.reference:.6e}")
    for k in angles.states:
        e = angles.best(k)
        print(f"  {k}: delta={e.delta:.3g} tau={e.tau:.3g} "
              f"at ({e.theta * 1e3:.3f}, {e.phi * 1e3:.3f}) mrad")
    return 0


def cmd_attack(args, cfg, outdir) -> int:
    map_csv = cfg["attack.map_csv"]
    fixture_key = cfg["attack.fixture_r0_cm"]
    if map_csv:
        emap = rc.load_measured_map(map_csv)
        attack_set = sn.find_attack_angles(emap)
        extra = {}
        r0_m = None
    else:
        attack_set = at.table_fixture(fixture_key)
        extra = dict(mu_cap=at.FIXTURE_MU_CAP, p_dark=at.FIXTURE_P_DARK)
        r0_m = None if fixture_key == "inf" else at.ROW_R0_M[at._row_key(fixture_key)]
    if not attack_set.states:
        print("no attack angles: every channel is below the usability floor")
        return 2
    loss_grid = tuple(
        np.round(
            np.arange(
                float(cfg["attack.loss_min_db"]),
                float(cfg["attack.loss_max_db"]) + 1e-9,
                float(cfg["attack.loss_step_db"]),
            ),
            6,
        )
    )
    params = at.AttackParams(
        attack_set=attack_set,
        mu_alice=float(cfg["attack.mu_alice"]),
        eta_bob=float(cfg["attack.eta_bob"]),
        eta_eve=float(cfg["attack.eta_eve"]),
        qber_threshold=float(cfg["attack.qber_threshold"]),
        loss_grid_db=loss_grid,
        **extra,
    )
    solutions = at.qber_curve(params)
    at.write_curve(solutions, outdir / "qber_curve.csv")
    window = at.feasible_window(solutions)
    if window is None:
        print("no feasible attack: QBER threshold or rate matching "
              "unattainable at every loss")
        return 2
    summary = f"max_feasible_loss_db={window[1]:.2f} min_feasible_loss_db={window[0]:.2f}"
    if r0_m is not None:
        radius = at.unsafe_radius(r0_m, float(cfg["turbulence.cn2"]),
                                  float(cfg["turbulence.wavelength_nm"]) * 1e-9)
        summary += f" unsafe_radius_m={radius:.1f}"
    (outdir / "summary.txt").write_text(summary + "\n", encoding="ascii")
    print(summary)
    return 0


def cmd_witness(args, cfg, outdir) -> int:
    p, model = wt.fixture_problem(cfg["witness.fixture"])
    wt.save_distribution(p, outdir / "distribution.csv")
    verdict = wt.check_feasibility(p, model, tol=float(cfg["witness.tol"]))
    (outdir / "verdict.txt").write_text(verdict.record() + "\n", encoding="ascii")
    print(verdict.record())
    return 2 if verdict.outcome == "indeterminate" else 0


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="turbqkd",
        description="Spatial-mode mismatch attack analysis for a free-space "
        "polarization receiver under emulated turbulence",
    )
    parser.add_argument("--config", help="flat key=value configuration file")
    parser.add_argument("--seed", type=int, help="override run.seed")
    parser.add_argument("--out", default="turbqkd-out", help="output directory")
    parser.add_argument("--threads", type=int, help="override run.threads")
    sub = parser.add_subparsers(dest="command", required=True)

    p_screens = sub.add_parser("screens", help="generate or verify screen pools")
    p_screens.add_argument("action", choices=("generate", "verify"))
    p_screens.add_argument("--pool", help="pool CSV to verify")

    sub.add_parser("scan", help="run the angle scan under the hologram ensemble")
    sub.add_parser("attack", help="optimize the faked-state attack over loss")
    sub.add_parser("witness", help="run an intercept-resend compatibility check")

    args = parser.parse_args(argv)
    try:
        cfg, raw = load_config(args.config)
        outdir = prepare_outdir(args.out, raw)
        if args.command == "screens":
            if args.action == "verify" and not args.pool:
                parser.error("screens verify requires --pool")
            return cmd_screens(args, cfg, outdir)
        if args.command == "scan":
            return cmd_scan(args, cfg, outdir)
        if args.command == "attack":
            return cmd_attack(args, cfg, outdir)
        if args.command == "witness":
            return cmd_witness(args, cfg, outdir)
        parser.error(f"unknown command {args.command}")
    except (ConfigError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
