"""Angle scans of the receiver under a hologram ensemble.

Executes the 41x41 scan for each of the 29 ensemble screens, forms the
occurrence-weighted efficiency map, and locates valid attack angles
(angles where one channel's efficiency exceeds both conjugate-basis
channels by a threshold ratio).
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from .receiver import (
    CONJUGATE,
    STATES,
    EfficiencyMap,
    ReceiverModel,
    encircled_power_map,
    focal_intensity,
)
from .screens import BIN_LABELS, HologramEnsemble, correct_tip_tilt, render

__all__ = [
    "ScanSpec",
    "AttackAngle",
    "AttackAngleSet",
    "run_scan",
    "ScanResult",
    "weighted_map",
    "find_attack_angles",
    "write_attack_angles",
]

RATIO_FLOOR = 1e-6  # denominator floor for efficiency ratios
TAU_FLOOR = 0.01  # below this the targeted channel is unusably dark


@dataclass(frozen=True)
class ScanSpec:
    """Symmetric square angle scan: +-angle_range in steps of `step`.

    The default +-2.7 mrad in 135 urad steps gives 41 positions per
    axis (1681 total), center included.  remove_tip_tilt applies the
    beam-wander correction to every screen before scanning.
    """

    angle_range: float = 2.7e-3
    step: float = 135e-6
    input_pol: str = "circular"
    remove_tip_tilt: bool = True

    def __post_init__(self):
        if self.angle_range <= 0 or self.step <= 0:
            raise ValueError("angle_range and step must be positive")
        half = self.angle_range / self.step
        if abs(half - round(half)) > 1e-9:
            raise ValueError("angle_range must be an integer multiple of step")

    def angles(self) -> np.ndarray:
        half = int(round(self.angle_range / self.step))
        return np.arange(-half, half + 1) * self.step

    @property
    def positions(self) -> int:
        n = len(self.angles())
        return n * n


@dataclass(frozen=True)
class AttackAngle:
    """A candidate attack angle for one channel.

    delta is the achieved min ratio against the two conjugate-basis
    channels; tau the channel's own normalized efficiency there;
    tau_cross holds all four channels' efficiencies at the angle in
    H, V, D, A order.
    """

    state: str
    theta: float
    phi: float
    delta: float
    tau: float
    tau_cross: np.ndarray

    def __post_init__(self):
        if self.tau <= 0:
            raise ValueError("attack angle with nonpositive target efficiency")
        object.__setattr__(self, "tau_cross", np.asarray(self.tau_cross, dtype=float))


@dataclass(frozen=True)
class AttackAngleSet:
    """Per-channel attack angles; channels with no valid angle are absent."""

    channels: Mapping[str, tuple]

    def best(self, state: str) -> AttackAngle:
        return self.channels[state][0]

    @property
    def states(self) -> tuple:
        return tuple(k for k in STATES if k in self.channels)

    def max_delta(self) -> float:
        return max(e[0].delta for e in self.channels.values())


@dataclass(frozen=True)
class ScanResult:
    maps: tuple
    spec: ScanSpec
    ensemble: HologramEnsemble
    reference: float
    weighted: EfficiencyMap


def _channel_factors(model: ReceiverModel, pol) -> dict:
    return {
        k: model.basis_split
        * model.polarization_transmission(k, pol)
        * model.eta_det[k]
        for k in STATES
    }


def _sample_grid(grid: np.ndarray, pitch: float, xs: np.ndarray, ys: np.ndarray):
    """Bilinear samples at the outer product of physical xs (columns) and
    ys (rows); returns shape (len(xs), len(ys)) indexed [ix, iy]."""
    n = grid.shape[0]
    fx = xs / pitch + n // 2
    fy = ys / pitch + n // 2
    if fx.min() < 0 or fx.max() > n - 1 or fy.min() < 0 or fy.max() > n - 1:
        raise ValueError("scan positions fall outside the computed focal window")
    ix = np.clip(fx.astype(int), 0, n - 2)
    iy = np.clip(fy.astype(int), 0, n - 2)
    tx = fx - ix
    ty = fy - iy
    g00 = grid[np.ix_(iy, ix)]  # [iy, ix]
    g01 = grid[np.ix_(iy, ix + 1)]
    g10 = grid[np.ix_(iy + 1, ix)]
    g11 = grid[np.ix_(iy + 1, ix + 1)]
    out = (
        g00 * (1 - tx)[None, :] * (1 - ty)[:, None]
        + g01 * tx[None, :] * (1 - ty)[:, None]
        + g10 * (1 - tx)[None, :] * ty[:, None]
        + g11 * tx[None, :] * ty[:, None]
    )
    return out.T  # -> [ix, iy]


def _member_map(model, spec, factors, reference, coeffs) -> EfficiencyMap:
    screen = render(coeffs, model.resolution)
    inten, pitch = focal_intensity(model, screen)
    ep = encircled_power_map(inten, pitch, model.core_radius)
    angles = spec.angles()
    tau = {}
    for k in STATES:
        ox, oy = model.offsets[k]
        xs = ox - model.f_eff * angles  # outer: theta -> x
        ys = oy - model.f_eff * angles  # inner: phi -> y
        tau[k] = factors[k] * _sample_grid(ep, pitch, xs, ys) / reference
    return EfficiencyMap(thetas=angles, phis=angles, tau=tau, reference=1.0)


def run_scan(
    model: ReceiverModel,
    ensemble: HologramEnsemble,
    spec: ScanSpec = ScanSpec(),
    threads: int = 1,
) -> ScanResult:
    """Scan all ensemble screens over the angle grid.

    Every map is normalized to the aligned no-turbulence reference (the
    mean over channels of the flat-screen center efficiency), so the
    flat member reproduces the no-turbulence map exactly.
    """
    factors = _channel_factors(model, spec.input_pol)
    flat_inten, pitch = focal_intensity(model, None)
    flat_ep = encircled_power_map(flat_inten, pitch, model.core_radius)
    from .receiver import sample_map

    reference = float(
        np.mean([factors[k] * sample_map(flat_ep, pitch, *model.offsets[k]) for k in STATES])
    )
    if reference <= 0:
        raise ValueError("degenerate receiver: zero efficiency at center")

    members = [
        correct_tip_tilt(m) if spec.remove_tip_tilt else m for m in ensemble.members
    ]
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            maps = list(
                pool.map(lambda m: _member_map(model, spec, factors, reference, m), members)
            )
    else:
        maps = [_member_map(model, spec, factors, reference, m) for m in members]
    weighted = weighted_map(maps, ensemble.member_bins, ensemble.weights)
    return ScanResult(
        maps=tuple(maps),
        spec=spec,
        ensemble=ensemble,
        reference=reference,
        weighted=weighted,
    )


def weighted_map(
    maps: Sequence[EfficiencyMap],
    member_bins: Sequence[int],
    weights: Sequence[float],
) -> EfficiencyMap:
    """Occurrence-weighted average: per-bin mean, then weighted sum.

    tau_k = sum_i Phi_i * mean over bin-i members of tau_{k,i}.
    """
    weights = np.asarray(weights, dtype=float)
    if len(maps) != len(member_bins):
        raise ValueError("one bin index required per map")
    n_bins = len(weights)
    if max(member_bins) >= n_bins:
        raise ValueError("bin index exceeds weight count")
    if abs(weights.sum() - 1.0) > 1e-6:
        raise ValueError("bin weights must sum to 1")
    base = maps[0]
    tau = {k: np.zeros_like(base.tau[k]) for k in STATES}
    for b in range(n_bins):
        idx = [i for i, mb in enumerate(member_bins) if mb == b]
        if not idx:
            raise ValueError(f"no members in bin {BIN_LABELS[b]}")
        for k in STATES:
            bin_mean = np.mean([maps[i].tau[k] for i in idx], axis=0)
            tau[k] += weights[b] * bin_mean
    return EfficiencyMap(thetas=base.thetas, phis=base.phis, tau=tau, reference=1.0)


def find_attack_angles(
    emap: EfficiencyMap,
    mode: str = "max-delta",
    delta: float | None = None,
    tau_floor: float = TAU_FLOOR,
    eps: float = RATIO_FLOOR,
) -> AttackAngleSet:
    """Locate valid attack angles per channel.

    The figure of merit at each angle is min over the two conjugate
    channels of tau_k / tau_conj (denominators floored at eps).  Angles
    where the targeted channel itself is darker than tau_floor are
    excluded.  mode="max-delta" returns the single best angle per
    channel; mode="threshold" returns every angle whose ratio exceeds
    `delta`.
    """
    if mode not in ("max-delta", "threshold"):
        raise ValueError(f"unknown mode {mode!r}")
    if mode == "threshold" and delta is None:
        raise ValueError("threshold mode requires delta")
    channels = {}
    for k in STATES:
        tk = emap.tau[k]
        c1, c2 = CONJUGATE[k]
        ratio = np.minimum(
            tk / np.maximum(emap.tau[c1], eps), tk / np.maximum(emap.tau[c2], eps)
        )
        usable = tk >= tau_floor
        if not np.any(usable):
            continue
        masked = np.where(usable, ratio, -np.inf)
        if mode == "max-delta":
            flat_idx = int(np.argmax(masked))
            picks = [np.unravel_index(flat_idx, tk.shape)]
        else:
            picks = list(zip(*np.where(masked > delta)))
            if not picks:
                continue
        entries = []
        for i, j in picks:
            entries.append(
                AttackAngle(
                    state=k,
                    theta=float(emap.thetas[i]),
                    phi=float(emap.phis[j]),
                    delta=float(ratio[i, j]),
                    tau=float(tk[i, j]),
                    tau_cross=np.array([emap.tau[s][i, j] for s in STATES]),
                )
            )
        entries.sort(key=lambda e: -e.delta)
        channels[k] = tuple(entries)
    return AttackAngleSet(channels=channels)


def write_attack_angles(angle_set: AttackAngleSet, path) -> None:
    """CSV: channel,theta_rad,phi_rad,delta,tau."""
    with open(path, "w", encoding="ascii", newline="\n") as fh:
        fh.write("channel,theta_rad,phi_rad,delta,tau\n")
        for k in angle_set.states:
            for e in angle_set.channels[k]:
                fh.write(
                    f"{k},{e.theta:.12e},{e.phi:.12e},{e.delta:.12e},{e.tau:.12e}\n"
                )
