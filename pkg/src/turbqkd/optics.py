"""Scalar Fourier-optics engine.

Far-field intensity of an aperture-limited field carrying a phase
screen, intensity centroids, and encircled-power fiber coupling.  All
transforms are plain zero-padded FFTs; power bookkeeping is exact
(Parseval), which the tests rely on.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .screens import PhaseScreen, ZernikeCoeffs, aperture_weights, render
from .turbmath import TurbulenceParams, tilt_std_per_axis

__all__ = [
    "FieldGrid",
    "IntensityGrid",
    "Centroid",
    "far_field",
    "centroid",
    "fiber_coupling",
    "make_centroid_propagator",
    "save_intensity_txt",
    "load_intensity_txt",
    "save_pgm",
]


@dataclass(frozen=True)
class FieldGrid:
    """Complex amplitude samples on a square grid with physical pitch (m)."""

    data: np.ndarray
    pitch: float
    wavelength: float

    @property
    def power(self) -> float:
        return float(np.sum(np.abs(self.data) ** 2) * self.pitch**2)


@dataclass(frozen=True)
class IntensityGrid:
    """Nonnegative intensity samples.

    pitch is per pixel in the unit named by pitch_unit ("rad" for
    angular spectra, "m" for focal planes).  power records the total,
    normalized so that it matches the input aperture power.
    """

    data: np.ndarray
    pitch: float
    pitch_unit: str
    power: float
    input_power: float

    def __post_init__(self):
        if np.any(np.asarray(self.data) < 0):
            raise ValueError("intensity samples must be nonnegative")


@dataclass(frozen=True)
class Centroid:
    """Intensity-weighted first moment, referenced to the optical axis."""

    x: float
    y: float

    @property
    def radius(self) -> float:
        return math.hypot(self.x, self.y)


def _axis_coords(n: int, pitch: float) -> np.ndarray:
    """fftshift-ordered coordinates: index n//2 is exactly zero."""
    return (np.arange(n) - n // 2) * pitch


def far_field(
    screen: PhaseScreen,
    params: TurbulenceParams,
    oversample: int = 4,
    check_resolution: bool = True,
) -> IntensityGrid:
    """Far-field intensity of the aperture field exp(i * phase).

    The aperture (diameter params.D, amplitude = sub-pixel coverage) is
    zero-padded `oversample` times and Fourier transformed; the result
    is fftshifted so the optical axis sits at pixel (n//2, n//2).
    Angular pitch is lambda / (N_fft * pixel_pitch).

    Raises if the angular pitch is too coarse to resolve the expected
    beam wander (pitch > sigma_axis / 4); pass check_resolution=False
    or increase oversampling to override.
    """
    if abs(screen.aperture_d - params.D) > 1e-12 * params.D:
        raise ValueError("screen aperture diameter does not match params.D")
    if oversample < 4:
        raise ValueError("oversample must be >= 4 for adequate angular sampling")
    n = screen.resolution
    n_fft = oversample * n
    pixel_pitch = params.D / n
    ang_pitch = params.wavelength / (n_fft * pixel_pitch)
    sigma = tilt_std_per_axis(params)
    if check_resolution and sigma > 0 and ang_pitch > sigma / 4.0:
        raise ValueError(
            f"angular pitch {ang_pitch:.3e} rad exceeds sigma/4 = {sigma / 4:.3e} rad; "
            "increase resolution or oversampling"
        )
    field = np.zeros((n_fft, n_fft), dtype=complex)
    field[:n, :n] = screen.weights * np.exp(1j * screen.grid)
    spec = np.fft.fftshift(np.fft.fft2(field))
    inten = np.abs(spec) ** 2 / n_fft**2  # Parseval: sum(inten) == sum(|field|^2)
    in_power = float(np.sum(screen.weights**2))
    return IntensityGrid(
        data=inten,
        pitch=ang_pitch,
        pitch_unit="rad",
        power=float(np.sum(inten)),
        input_power=in_power,
    )


def centroid(img: IntensityGrid) -> Centroid:
    """Intensity-weighted centroid in the grid's pitch units."""
    total = float(np.sum(img.data))
    if total <= 0.0:
        raise ValueError("centroid undefined: total power is zero")
    n = img.data.shape[0]
    coords = _axis_coords(n, img.pitch)
    x = float(np.sum(img.data.sum(axis=0) * coords) / total)
    y = float(np.sum(img.data.sum(axis=1) * coords) / total)
    return Centroid(x=x, y=y)


def fiber_coupling(field: FieldGrid, core_radius: float, core_offset=(0.0, 0.0)) -> float:
    """Fraction of focal-plane power inside an offset fiber-core disk.

    Multimode coupling as geometric acceptance: encircled energy within
    core_radius of core_offset (both meters).
    """
    if core_radius <= 0:
        raise ValueError("core_radius must be positive")
    inten = np.abs(field.data) ** 2
    total = float(np.sum(inten))
    if total <= 0.0:
        return 0.0
    n = field.data.shape[0]
    coords = _axis_coords(n, field.pitch)
    x, y = np.meshgrid(coords, coords, indexing="xy")
    inside = (x - core_offset[0]) ** 2 + (y - core_offset[1]) ** 2 <= core_radius**2
    return float(np.sum(inten[inside]) / total)


def make_centroid_propagator(
    params: TurbulenceParams, resolution: int = 512, oversample: int = 4
):
    """Callable mapping a coefficient vector to its far-field centroid (rad).

    Suitable as the propagator argument of screens.build_ensemble.
    """

    def propagate(coeffs: ZernikeCoeffs):
        img = far_field(render(coeffs, resolution), params, oversample)
        c = centroid(img)
        return (c.x, c.y)

    return propagate


def save_intensity_txt(img: IntensityGrid, path) -> None:
    """Plain-text grid: header (width height pitch pitch_unit power), rows."""
    h, w = img.data.shape
    with open(path, "w", encoding="ascii", newline="\n") as fh:
        fh.write(f"{w} {h} {img.pitch!r} {img.pitch_unit} {img.power!r}\n")
        for row in img.data:
            fh.write(" ".join(f"{v:.9e}" for v in row) + "\n")


def load_intensity_txt(path) -> IntensityGrid:
    with open(path, "r", encoding="ascii") as fh:
        header = fh.readline().split()
        if len(header) != 5:
            raise ValueError(f"{path}: malformed intensity header")
        w, h = int(header[0]), int(header[1])
        pitch, unit, power = float(header[2]), header[3], float(header[4])
        data = np.loadtxt(fh, dtype=float, ndmin=2)
    if data.shape != (h, w):
        raise ValueError(f"{path}: expected {h}x{w} grid, got {data.shape}")
    return IntensityGrid(
        data=data, pitch=pitch, pitch_unit=unit, power=power, input_power=power
    )


def save_pgm(data: np.ndarray, path, gamma: float = 0.5) -> None:
    """8-bit binary PGM preview of a nonnegative grid.

    gamma < 1 lifts faint structure, matching how far-field side lobes
    are usually inspected.
    """
    arr = np.asarray(data, dtype=float)
    peak = arr.max()
    scaled = (arr / peak) ** gamma if peak > 0 else np.zeros_like(arr)
    img8 = np.round(255.0 * scaled).astype(np.uint8)
    h, w = img8.shape
    with open(path, "wb") as fh:
        fh.write(f"P5\n{w} {h}\n255\n".encode("ascii"))
        fh.write(img8.tobytes())
