"""Random phase screens built from 44 Zernike modes.

Sampling of coefficient vectors with Kolmogorov variances, rasterization
over the aperture disk, tip-tilt removal, the Rayleigh annulus weights,
selection of the 29-member representative ensemble, and CSV persistence
of screen pools.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Callable, Iterable, Sequence

import numpy as np

from .turbmath import (
    TurbulenceParams,
    coeff_variance,
    noll_to_nm,
    tilt_std_per_axis,
    zernike_basis,
)

__all__ = [
    "N_TERMS",
    "ZernikeCoeffs",
    "PhaseScreen",
    "HologramEnsemble",
    "BIN_LABELS",
    "sample_coeffs",
    "sample_pool",
    "render",
    "correct_tip_tilt",
    "annulus_weights",
    "build_ensemble",
    "save_pool",
    "load_pool",
    "aperture_weights",
]

N_TERMS = 44

BIN_LABELS = ("0sigma", "0.5sigma", "1sigma", "2sigma", "3sigma")
BIN_TARGETS = (0.0, 0.5, 1.0, 2.0, 3.0)
BIN_COUNTS = (1, 8, 8, 8, 4)

POOL_FORMAT = "turbqkd-pool-v1"


@dataclass(frozen=True)
class ZernikeCoeffs:
    """A 44-term Noll-indexed coefficient vector (rad).

    c[0] corresponds to j=1 (piston) and is always zero.
    """

    c: np.ndarray
    seed: int
    params: TurbulenceParams

    def __post_init__(self):
        c = np.asarray(self.c, dtype=float)
        if c.shape != (N_TERMS,):
            raise ValueError(f"coefficient vector must have length {N_TERMS}")
        if c[0] != 0.0:
            raise ValueError("piston coefficient (j=1) must be zero")
        object.__setattr__(self, "c", c)

    def coeff(self, j: int) -> float:
        """Coefficient for Noll index j (1-based)."""
        return float(self.c[j - 1])


@dataclass(frozen=True)
class PhaseScreen:
    """Unwrapped phase (rad) rasterized over the inscribed aperture disk.

    grid is zero outside the disk; weights holds the sub-pixel aperture
    coverage fraction of each pixel (0 outside, 1 well inside).
    """

    grid: np.ndarray
    weights: np.ndarray
    aperture_d: float

    @property
    def resolution(self) -> int:
        return self.grid.shape[0]


@dataclass(frozen=True)
class HologramEnsemble:
    """29 representative screens binned by centroid displacement.

    member_bins[i] indexes BIN_LABELS; weights are the occupancy
    probabilities of the five annuli; sigma_ref is the per-axis wander
    std (rad) used for binning.
    """

    members: tuple
    member_bins: tuple
    weights: np.ndarray
    sigma_ref: float

    def __post_init__(self):
        if len(self.members) != sum(BIN_COUNTS):
            raise ValueError(f"ensemble must have {sum(BIN_COUNTS)} members")
        counts = [self.member_bins.count(i) for i in range(len(BIN_LABELS))]
        if tuple(counts) != BIN_COUNTS:
            raise ValueError(f"bin counts must be {BIN_COUNTS}, got {tuple(counts)}")
        w = np.asarray(self.weights, dtype=float)
        if abs(w.sum() - 1.0) > 1e-6:
            raise ValueError("bin weights must sum to 1")
        object.__setattr__(self, "weights", w)

    def bin_label(self, i: int) -> str:
        return BIN_LABELS[self.member_bins[i]]


def _screen_seed(pool_seed: int, index: int) -> int:
    """Stable per-screen sub-seed derived from (pool seed, index)."""
    ss = np.random.SeedSequence([int(pool_seed), int(index)])
    return int(ss.generate_state(1, np.uint64)[0])


def _rng(seed: int) -> np.random.Generator:
    # Philox: counter-based, published algorithm, safe to key per screen.
    return np.random.Generator(np.random.Philox(key=np.uint64(seed)))


def sample_coeffs(params: TurbulenceParams, seed: int) -> ZernikeCoeffs:
    """Draw one coefficient vector; c_j ~ N(0, sigma_nm^2) for j=2..44.

    Deterministic for a fixed seed.  With r0 = inf all coefficients are
    zero.
    """
    c = np.zeros(N_TERMS)
    if not math.isinf(params.r0):
        stds = np.array(
            [math.sqrt(coeff_variance(noll_to_nm(j), params)) for j in range(2, N_TERMS + 1)]
        )
        c[1:] = _rng(seed).standard_normal(N_TERMS - 1) * stds
    return ZernikeCoeffs(c=c, seed=int(seed), params=params)


def sample_pool(params: TurbulenceParams, pool_seed: int, count: int) -> list[ZernikeCoeffs]:
    """Sample `count` screens with per-screen seeds hashed from the pool seed."""
    if count < 1:
        raise ValueError("pool count must be >= 1")
    return [sample_coeffs(params, _screen_seed(pool_seed, i)) for i in range(count)]


_weights_cache: dict[int, np.ndarray] = {}
_basis_cache: dict[int, np.ndarray] = {}


def aperture_weights(resolution: int) -> np.ndarray:
    """Sub-pixel coverage fraction of the inscribed disk, per pixel.

    Boundary pixels are supersampled 4x4; interior/exterior pixels are
    exactly 1/0.  Used both as quadrature weight and as aperture
    amplitude profile.
    """
    if resolution in _weights_cache:
        return _weights_cache[resolution]
    n = resolution
    xs = (np.arange(n) + 0.5) / n * 2.0 - 1.0
    x, y = np.meshgrid(xs, xs, indexing="xy")
    r = np.hypot(x, y)
    half_diag = math.sqrt(2.0) / n
    w = np.zeros((n, n))
    w[r <= 1.0 - half_diag] = 1.0
    edge = (r > 1.0 - half_diag) & (r < 1.0 + half_diag)
    if np.any(edge):
        sub = (np.arange(4) + 0.5) / 4.0 - 0.5  # sub-pixel offsets in pixel units
        dx, dy = np.meshgrid(sub, sub, indexing="xy")
        px = x[edge][:, None] + dx.ravel()[None, :] * (2.0 / n)
        py = y[edge][:, None] + dy.ravel()[None, :] * (2.0 / n)
        w[edge] = np.mean(np.hypot(px, py) <= 1.0, axis=1)
    if len(_weights_cache) > 4:
        _weights_cache.clear()
    _weights_cache[resolution] = w
    return w


def _basis(resolution: int) -> np.ndarray:
    """(44, N, N) stack of Zernike values at pixel centers (unmasked)."""
    if resolution in _basis_cache:
        return _basis_cache[resolution]
    n = resolution
    xs = (np.arange(n) + 0.5) / n * 2.0 - 1.0
    x, y = np.meshgrid(xs, xs, indexing="xy")
    rho = np.minimum(np.hypot(x, y), 1.0)
    theta = np.arctan2(y, x)
    basis = zernike_basis(N_TERMS, rho, theta)
    if len(_basis_cache) > 2:
        _basis_cache.clear()
    _basis_cache[resolution] = basis
    return basis


def render(coeffs: ZernikeCoeffs, resolution: int = 512) -> PhaseScreen:
    """Rasterize the weighted Zernike sum over the aperture disk."""
    if resolution < 64:
        raise ValueError("resolution must be >= 64")
    basis = _basis(resolution)
    w = aperture_weights(resolution)
    grid = np.tensordot(coeffs.c, basis, axes=(0, 0))
    grid = np.where(w > 0.0, grid, 0.0)
    return PhaseScreen(grid=grid, weights=w, aperture_d=coeffs.params.D)


def correct_tip_tilt(coeffs: ZernikeCoeffs) -> ZernikeCoeffs:
    """Zero the tip/tilt terms (Noll j=2,3), leaving the rest unchanged."""
    c = coeffs.c.copy()
    c[1] = 0.0
    c[2] = 0.0
    return replace(coeffs, c=c)


def annulus_weights(boundaries: Sequence[float] = (0.5, 1.0, 2.0, 3.0)) -> np.ndarray:
    """Occupancy probabilities of annuli for 2-D isotropic Gaussian wander.

    Boundaries are radii in units of the per-axis std; the radial law is
    Rayleigh, so P(r < b) = 1 - exp(-b^2/2).  The outermost annulus
    extends to infinity.  Default boundaries give
    (0.1175, 0.2760, 0.4712, 0.1242, 0.0111).
    """
    b = np.asarray(boundaries, dtype=float)
    if b.ndim != 1 or len(b) < 1:
        raise ValueError("boundaries must be a 1-D sequence")
    if np.any(b <= 0) or np.any(np.diff(b) <= 0):
        raise ValueError("boundaries must be positive and strictly ascending")
    cdf = 1.0 - np.exp(-0.5 * b * b)
    return np.diff(np.concatenate([[0.0], cdf, [1.0]]))


def build_ensemble(
    pool: Sequence[ZernikeCoeffs],
    params: TurbulenceParams,
    propagator: Callable[[ZernikeCoeffs], tuple],
    rel_tol: float = 0.10,
) -> HologramEnsemble:
    """Pick the 29 representative screens from a pool.

    The propagator maps a coefficient vector to its far-field centroid
    (x, y) in radians.  One flat (zero-coefficient) screen represents
    the 0-sigma bin; 8/8/8/4 pool members are chosen whose centroid
    radii fall nearest 0.5/1/2/3 sigma, each within rel_tol of the
    target.  sigma is the per-axis wander std from the tilt variance.
    """
    if len(pool) < 29:
        raise ValueError("pool too small: need at least 29 screens")
    sigma = tilt_std_per_axis(params)
    flat = ZernikeCoeffs(c=np.zeros(N_TERMS), seed=-1, params=params)

    members: list[ZernikeCoeffs] = [flat]
    bins: list[int] = [0]
    if sigma == 0.0:
        # No turbulence: every screen is (statistically) flat.
        for i in range(28):
            members.append(pool[i])
        bins += [1] * 8 + [2] * 8 + [3] * 8 + [4] * 4
        return HologramEnsemble(
            members=tuple(members),
            member_bins=tuple(bins),
            weights=annulus_weights(),
            sigma_ref=0.0,
        )

    radii = np.array([math.hypot(*propagator(s)) for s in pool])
    if np.all(radii < 1e-3 * sigma):
        raise ValueError("pool is radially degenerate: all centroids at origin")
    taken = np.zeros(len(pool), dtype=bool)
    for bin_idx, (target_mult, count) in enumerate(zip(BIN_TARGETS[1:], BIN_COUNTS[1:]), start=1):
        target = target_mult * sigma
        order = np.argsort(np.abs(radii - target))
        picked = 0
        for i in order:
            if taken[i]:
                continue
            if abs(radii[i] - target) > rel_tol * target:
                break  # sorted by distance: nothing closer remains
            taken[i] = True
            members.append(pool[i])
            bins.append(bin_idx)
            picked += 1
            if picked == count:
                break
        if picked < count:
            raise ValueError(
                f"pool cannot fill the {BIN_LABELS[bin_idx]} bin: "
                f"only {picked} of {count} screens within "
                f"{rel_tol:.0%} of radius {target:.3e} rad"
            )
    return HologramEnsemble(
        members=tuple(members),
        member_bins=tuple(bins),
        weights=annulus_weights(),
        sigma_ref=sigma,
    )


def save_pool(path, pool: Sequence[ZernikeCoeffs]) -> None:
    """Write a pool to CSV: versioned header, then index,seed,c1..c44."""
    if not pool:
        raise ValueError("cannot save an empty pool")
    p = pool[0].params
    with open(path, "w", encoding="ascii", newline="\n") as fh:
        fh.write(
            f"{POOL_FORMAT},count={len(pool)},D_m={p.D!r},r0_m={p.r0!r},"
            f"wavelength_m={p.wavelength!r}\n"
        )
        fh.write("index,seed," + ",".join(f"c{j}" for j in range(1, N_TERMS + 1)) + "\n")
        for i, s in enumerate(pool):
            row = ",".join(f"{v:.17e}" for v in s.c)
            fh.write(f"{i},{s.seed},{row}\n")


def load_pool(path) -> tuple[TurbulenceParams, list[ZernikeCoeffs]]:
    """Read a pool CSV written by :func:`save_pool`."""
    with open(path, "r", encoding="ascii") as fh:
        lines = fh.read().splitlines()
    if not lines or not lines[0].startswith(POOL_FORMAT):
        raise ValueError(f"{path}: not a {POOL_FORMAT} file")
    fields = dict(kv.split("=", 1) for kv in lines[0].split(",")[1:])
    try:
        count = int(fields["count"])
        params = TurbulenceParams(
            D=float(fields["D_m"]),
            r0=float(fields["r0_m"]),
            wavelength=float(fields["wavelength_m"]),
        )
    except (KeyError, ValueError) as exc:
        raise ValueError(f"{path}: malformed pool header: {exc}") from exc
    if len(lines) != count + 2:
        raise ValueError(f"{path}: expected {count} records, found {len(lines) - 2}")
    pool = []
    for lineno, line in enumerate(lines[2:], start=3):
        parts = line.split(",")
        if len(parts) != 2 + N_TERMS:
            raise ValueError(f"{path}: line {lineno}: expected {2 + N_TERMS} fields")
        try:
            seed = int(parts[1])
            c = np.array([float(v) for v in parts[2:]])
        except ValueError as exc:
            raise ValueError(f"{path}: line {lineno}: {exc}") from exc
        pool.append(ZernikeCoeffs(c=c, seed=seed, params=params))
    return params, pool
