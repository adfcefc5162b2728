"""Four-channel passive-basis polarization receiver model.

The telescope chain is collapsed into a single effective focal
transform: an entrance-angle tilt maps to a focal-plane displacement
f_eff * angle, and each channel couples the focal field into a
multimode core (encircled power) at its own coupler offset.  Phase
screens computed for the free-space beam are imprinted on the
receiver's collimated entrance beam, which magnifies their angular
effect by the beam-diameter ratio, as in an emulated channel.

Detection-efficiency mismatch between channels comes entirely from the
configured coupler offsets and extinction ratios; measured efficiency
maps can be ingested as an alternative source of truth.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Mapping

import numpy as np

from .screens import PhaseScreen, aperture_weights
from .optics import FieldGrid, fiber_coupling

__all__ = [
    "STATES",
    "CONJUGATE",
    "jones_vector",
    "ReceiverModel",
    "EfficiencyMap",
    "channel_efficiency",
    "focal_intensity",
    "encircled_power_map",
    "load_measured_map",
    "save_map",
]

STATES = ("H", "V", "D", "A")

# Channels of the conjugate (other) basis, per channel.
CONJUGATE = {"H": ("D", "A"), "V": ("D", "A"), "D": ("H", "V"), "A": ("H", "V")}

_SQ2 = 1.0 / math.sqrt(2.0)
_JONES = {
    "H": np.array([1.0, 0.0], dtype=complex),
    "V": np.array([0.0, 1.0], dtype=complex),
    "D": np.array([_SQ2, _SQ2], dtype=complex),
    "A": np.array([_SQ2, -_SQ2], dtype=complex),
    "circular": np.array([_SQ2, _SQ2 * 1j], dtype=complex),
}


def jones_vector(pol) -> np.ndarray:
    """Resolve a polarization spec (state name, 'circular', or 2-vector)."""
    if isinstance(pol, str):
        try:
            return _JONES[pol]
        except KeyError:
            raise ValueError(f"unknown polarization {pol!r}") from None
    v = np.asarray(pol, dtype=complex)
    if v.shape != (2,):
        raise ValueError("polarization vector must have 2 components")
    norm = math.sqrt(float(np.vdot(v, v).real))
    if norm == 0:
        raise ValueError("polarization vector must be nonzero")
    return v / norm


@dataclass(frozen=True)
class ReceiverModel:
    """Immutable receiver configuration.

    offsets: per-channel coupler offsets in focal-plane meters.
    extinction: power extinction ratio of each channel's polarization
    projection (transmitted arms are cleaner than reflected arms).
    beam_diameter: collimated entrance beam that carries the screen
    phase; f_eff: effective focal length of the angle-to-focal-plane
    mapping.
    """

    wavelength: float = 532e-9
    beam_diameter: float = 2.0e-3
    f_eff: float = 87.5e-3
    core_radius: float = 52.5e-6
    offsets: Mapping[str, tuple] = field(
        default_factory=lambda: {
            "H": (40e-6, 0.0),
            "V": (-40e-6, 0.0),
            "D": (0.0, 40e-6),
            "A": (0.0, -40e-6),
        }
    )
    eta_det: Mapping[str, float] = field(
        default_factory=lambda: {k: 0.6 for k in STATES}
    )
    extinction: Mapping[str, float] = field(
        default_factory=lambda: {"H": 1000.0, "V": 100.0, "D": 1000.0, "A": 100.0}
    )
    basis_split: float = 0.5
    fov: float = 5.4e-3
    resolution: int = 256
    oversample: int = 4

    def __post_init__(self):
        for k in STATES:
            if k not in self.offsets or k not in self.eta_det or k not in self.extinction:
                raise ValueError(f"missing channel {k} in receiver configuration")
            if not (0.0 <= self.eta_det[k] <= 1.0):
                raise ValueError(f"eta_det[{k}] outside [0, 1]")
            if self.extinction[k] <= 1.0:
                raise ValueError(f"extinction[{k}] must exceed 1")
        if not (0.0 < self.basis_split < 1.0):
            raise ValueError("basis_split must lie in (0, 1)")

    @classmethod
    def balanced(cls, **overrides) -> "ReceiverModel":
        """Fully symmetric receiver: no offsets, equal extinction and eta."""
        defaults = dict(
            offsets={k: (0.0, 0.0) for k in STATES},
            eta_det={k: 0.6 for k in STATES},
            extinction={k: 1e9 for k in STATES},
        )
        defaults.update(overrides)
        return cls(**defaults)

    def projector(self, state: str) -> np.ndarray:
        """Ideal 2x2 polarization projector of a channel (idempotent, Hermitian)."""
        v = jones_vector(state)
        return np.outer(v, v.conj())

    def polarization_transmission(self, state: str, pol) -> float:
        """Power fraction passed by channel `state` for the given input
        polarization, including the finite extinction leak of the
        orthogonal component."""
        v = jones_vector(pol)
        p_par = float(np.abs(np.vdot(_JONES[state], v)) ** 2)
        leak = 1.0 / self.extinction[state]
        return p_par + leak * (1.0 - p_par)

    @property
    def focal_pitch(self) -> float:
        n_fft = self.oversample * self.resolution
        pupil_pitch = self.beam_diameter / self.resolution
        return self.wavelength * self.f_eff / (n_fft * pupil_pitch)


def focal_intensity(model: ReceiverModel, screen: PhaseScreen | None, angle=(0.0, 0.0)):
    """Focal-plane intensity for the screen-distorted, tilted entrance beam.

    Returns (intensity array fftshifted, focal pitch in meters).  The
    screen's phase pattern is applied across the entrance beam diameter
    regardless of the aperture it was generated for.
    """
    n = model.resolution
    w = aperture_weights(n)
    if screen is not None:
        if screen.resolution != n:
            raise ValueError(
                f"screen resolution {screen.resolution} != receiver resolution {n}"
            )
        phase = screen.grid.copy()
    else:
        phase = np.zeros((n, n))
    theta, phi = angle
    if abs(theta) > model.fov or abs(phi) > model.fov:
        raise ValueError(f"angle {angle} outside field of view +-{model.fov}")
    if theta != 0.0 or phi != 0.0:
        coords = (np.arange(n) + 0.5) / n - 0.5  # pupil coords in beam diameters
        x = coords[None, :] * model.beam_diameter
        y = coords[:, None] * model.beam_diameter
        k = 2.0 * math.pi / model.wavelength
        phase = phase + k * (theta * x + phi * y)
    n_fft = model.oversample * n
    fld = np.zeros((n_fft, n_fft), dtype=complex)
    fld[:n, :n] = w * np.exp(1j * phase)
    spec = np.fft.fftshift(np.fft.fft2(fld))
    return np.abs(spec) ** 2, model.focal_pitch


def encircled_power_map(intensity: np.ndarray, pitch: float, core_radius: float):
    """Encircled power as a function of core-center position.

    FFT convolution of the (normalized) intensity with the core-disk
    indicator, on the same fftshift-centered grid.
    """
    n = intensity.shape[0]
    coords = (np.arange(n) - n // 2) * pitch
    x, y = np.meshgrid(coords, coords, indexing="xy")
    disk = (x * x + y * y <= core_radius * core_radius).astype(float)
    total = intensity.sum()
    if total <= 0:
        raise ValueError("zero total power in focal intensity")
    conv = np.fft.irfft2(
        np.fft.rfft2(np.fft.ifftshift(intensity / total))
        * np.fft.rfft2(np.fft.ifftshift(disk)),
        s=(n, n),
    )
    ep = np.fft.fftshift(conv)
    return np.clip(ep, 0.0, 1.0)


def sample_map(grid: np.ndarray, pitch: float, x: float, y: float) -> float:
    """Bilinear sample of an fftshift-centered map at physical (x, y)."""
    n = grid.shape[0]
    fx = x / pitch + n // 2
    fy = y / pitch + n // 2
    if not (0 <= fx <= n - 1 and 0 <= fy <= n - 1):
        raise ValueError("sample position outside the computed focal window")
    ix, iy = int(fx), int(fy)
    ix = min(ix, n - 2)
    iy = min(iy, n - 2)
    tx, ty = fx - ix, fy - iy
    g = grid
    return float(
        g[iy, ix] * (1 - tx) * (1 - ty)
        + g[iy, ix + 1] * tx * (1 - ty)
        + g[iy + 1, ix] * (1 - tx) * ty
        + g[iy + 1, ix + 1] * tx * ty
    )


def channel_efficiency(
    model: ReceiverModel,
    state: str,
    angle,
    screen: PhaseScreen | None = None,
    pol="circular",
) -> float:
    """Absolute detection efficiency of one channel at one entrance angle.

    basis split x polarization projection x encircled power at the
    channel's coupler offset x detector efficiency.
    """
    if state not in STATES:
        raise ValueError(f"unknown channel {state!r}")
    inten, pitch = focal_intensity(model, screen, angle)
    fld = FieldGrid(data=np.sqrt(inten), pitch=pitch, wavelength=model.wavelength)
    ox, oy = model.offsets[state]
    coupling = fiber_coupling(fld, model.core_radius, (ox, oy))
    return (
        model.basis_split
        * model.polarization_transmission(state, pol)
        * coupling
        * model.eta_det[state]
    )


@dataclass(frozen=True)
class EfficiencyMap:
    """Normalized per-channel efficiencies tau_k over an angle grid."""

    thetas: np.ndarray
    phis: np.ndarray
    tau: Mapping[str, np.ndarray]
    reference: float | None = None

    def __post_init__(self):
        thetas = np.asarray(self.thetas, dtype=float)
        phis = np.asarray(self.phis, dtype=float)
        object.__setattr__(self, "thetas", thetas)
        object.__setattr__(self, "phis", phis)
        shape = (len(thetas), len(phis))
        for k in STATES:
            if k not in self.tau:
                raise ValueError(f"missing channel {k}")
            arr = np.asarray(self.tau[k], dtype=float)
            if arr.shape != shape:
                raise ValueError(f"tau[{k}] has shape {arr.shape}, expected {shape}")
            if np.any(arr < 0):
                raise ValueError(f"negative efficiency in channel {k}")

    def at(self, state: str, i_theta: int, i_phi: int) -> float:
        return float(self.tau[state][i_theta, i_phi])

    def cross_section(self, state: str):
        """tau along phi = 0 (or nearest grid line), for quick inspection."""
        i = int(np.argmin(np.abs(self.phis)))
        return self.thetas, self.tau[state][:, i]


def save_map(emap: EfficiencyMap, path) -> None:
    """CSV: header theta_rad,phi_rad,tau_H,tau_V,tau_D,tau_A; row-major
    in theta then phi."""
    with open(path, "w", encoding="ascii", newline="\n") as fh:
        fh.write("theta_rad,phi_rad,tau_H,tau_V,tau_D,tau_A\n")
        for i, th in enumerate(emap.thetas):
            for j, ph in enumerate(emap.phis):
                vals = ",".join(f"{emap.tau[k][i, j]:.12e}" for k in STATES)
                fh.write(f"{th:.12e},{ph:.12e},{vals}\n")


def load_measured_map(path) -> EfficiencyMap:
    """Parse an efficiency-map CSV, validating the grid.

    Rejects malformed rows, duplicate angles, negative efficiencies and
    incomplete (non-rectangular) grids; errors name the offending line.
    """
    with open(path, "r", encoding="ascii") as fh:
        lines = fh.read().splitlines()
    if not lines or lines[0].strip() != "theta_rad,phi_rad,tau_H,tau_V,tau_D,tau_A":
        raise ValueError(f"{path}: missing or wrong efficiency-map header")
    rows = {}
    for lineno, line in enumerate(lines[1:], start=2):
        parts = line.split(",")
        if len(parts) != 6:
            raise ValueError(f"{path}: line {lineno}: expected 6 fields")
        try:
            vals = [float(v) for v in parts]
        except ValueError as exc:
            raise ValueError(f"{path}: line {lineno}: {exc}") from exc
        key = (vals[0], vals[1])
        if key in rows:
            raise ValueError(f"{path}: line {lineno}: duplicate angle {key}")
        if any(v < 0 for v in vals[2:]):
            raise ValueError(f"{path}: line {lineno}: negative efficiency")
        rows[key] = vals[2:]
    thetas = np.array(sorted({k[0] for k in rows}))
    phis = np.array(sorted({k[1] for k in rows}))
    if len(thetas) * len(phis) != len(rows):
        raise ValueError(f"{path}: incomplete grid: {len(rows)} rows for "
                         f"{len(thetas)}x{len(phis)} angles")
    tau = {k: np.empty((len(thetas), len(phis))) for k in STATES}
    for i, th in enumerate(thetas):
        for j, ph in enumerate(phis):
            try:
                vals = rows[(th, ph)]
            except KeyError:
                raise ValueError(f"{path}: missing grid point ({th}, {ph})") from None
            for k, v in zip(STATES, vals):
                tau[k][i, j] = v
    emap = EfficiencyMap(thetas=thetas, phis=phis, tau=tau)
    # Reference: normalization recomputed on load (mean center value).
    i0 = int(np.argmin(np.abs(thetas)))
    j0 = int(np.argmin(np.abs(phis)))
    ref = float(np.mean([tau[k][i0, j0] for k in STATES]))
    return replace(emap, reference=ref)
