"""Closed-form Kolmogorov/Zernike statistics over a circular aperture.

Noll indexing and normalization of Zernike polynomials, the per-mode
coefficient variances of Kolmogorov turbulence, Fried-parameter
conversions, and the analytic beam-wander (tilt) variance.  Everything
here is a pure function of its arguments.

Conventions
-----------
- Noll single-index j starts at 1 (piston); j=2,3 are tip/tilt.
- Zernike polynomials carry Noll normalization: mean-square value over
  the unit disk is 1 for every mode, piston is identically 1.
- Angles are radians, lengths are meters.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

__all__ = [
    "NollIndex",
    "TurbulenceParams",
    "noll_to_nm",
    "nm_to_noll",
    "zernike_eval",
    "zernike_basis",
    "inm",
    "coeff_variance",
    "fried_from_path",
    "path_for_r0",
    "tilt_variance",
    "tilt_std_per_axis",
]

# r0 = FRIED_COEFF * (Cn2 * L * k^2)^(-3/5) for a plane wave over a
# constant-Cn2 path.
FRIED_COEFF = 1.68

# Two-axis image-motion variance coefficient.  Equals 8*I(1,1)/pi^2 with
# I(1,1) ~ 0.4509 from `inm`, i.e. the angular wander implied by the
# tip/tilt coefficient statistics themselves.
TILT_COEFF = 0.364


@dataclass(frozen=True)
class NollIndex:
    """A Zernike mode identified by Noll index j and orders (n, m)."""

    j: int
    n: int
    m: int

    def __post_init__(self):
        if self.j < 1:
            raise ValueError(f"invalid Noll index j={self.j}: must be >= 1")
        if self.n < 0 or self.n < abs(self.m) or (self.n - abs(self.m)) % 2 != 0:
            raise ValueError(f"invalid Zernike orders (n={self.n}, m={self.m})")


def noll_to_nm(j: int) -> NollIndex:
    """Convert a Noll index to its radial/azimuthal orders.

    Uses the standard Noll ordering: within radial order n the |m| values
    run 0,2,2,4,4,... (n even) or 1,1,3,3,... (n odd), and the sign of m
    is positive for even j, negative for odd j.
    """
    j = int(j)
    if j < 1:
        raise ValueError(f"invalid Noll index j={j}: must be >= 1")
    n = 0
    while (n + 1) * (n + 2) // 2 < j:
        n += 1
    k = j - (n * (n + 1) // 2 + 1)  # 0-based position within row n
    if n % 2 == 0:
        m_abs = 2 * ((k + 1) // 2)
    else:
        m_abs = 2 * (k // 2) + 1
    if m_abs == 0:
        m = 0
    else:
        m = m_abs if j % 2 == 0 else -m_abs
    return NollIndex(j=j, n=n, m=m)


def nm_to_noll(n: int, m: int) -> int:
    """Inverse of :func:`noll_to_nm` (searches row n for the matching slot)."""
    if n < 0 or n < abs(m) or (n - abs(m)) % 2 != 0:
        raise ValueError(f"invalid Zernike orders (n={n}, m={m})")
    j_base = n * (n + 1) // 2 + 1
    for j in range(j_base, j_base + n + 1):
        idx = noll_to_nm(j)
        if idx.n == n and idx.m == m:
            return j
    raise RuntimeError(f"no Noll index found for (n={n}, m={m})")  # pragma: no cover


def _radial(n: int, m_abs: int, rho):
    """Radial Zernike polynomial R_n^|m|(rho)."""
    out = np.zeros_like(np.asarray(rho, dtype=float))
    for s in range((n - m_abs) // 2 + 1):
        coef = (
            (-1.0) ** s
            * math.factorial(n - s)
            / (
                math.factorial(s)
                * math.factorial((n + m_abs) // 2 - s)
                * math.factorial((n - m_abs) // 2 - s)
            )
        )
        out = out + coef * np.asarray(rho, dtype=float) ** (n - 2 * s)
    return out


def zernike_eval(idx: NollIndex, rho, theta):
    """Evaluate the Noll-normalized Zernike polynomial Z_j(rho, theta).

    rho must lie in [0, 1]; theta in radians.  Scalars or arrays are
    accepted and broadcast together.
    """
    rho_arr = np.asarray(rho, dtype=float)
    if np.any(rho_arr < 0) or np.any(rho_arr > 1 + 1e-12):
        raise ValueError("rho outside the unit aperture [0, 1]")
    theta_arr = np.asarray(theta, dtype=float)
    n, m = idx.n, idx.m
    r = _radial(n, abs(m), rho_arr)
    if m == 0:
        z = math.sqrt(n + 1) * r * np.ones_like(theta_arr)
    elif m > 0:
        z = math.sqrt(2 * (n + 1)) * r * np.cos(m * theta_arr)
    else:
        z = math.sqrt(2 * (n + 1)) * r * np.sin(-m * theta_arr)
    if np.isscalar(rho) and np.isscalar(theta):
        return float(z)
    return z


def zernike_basis(jmax: int, rho, theta) -> np.ndarray:
    """Stack Z_1..Z_jmax evaluated on the given (rho, theta) arrays.

    Returns an array of shape (jmax,) + rho.shape.  Intended for grid
    rasterization; rho values above 1 are allowed here and produce
    unmasked polynomial values (callers apply their own aperture mask).
    """
    rho_arr = np.asarray(rho, dtype=float)
    theta_arr = np.asarray(theta, dtype=float)
    out = np.empty((jmax,) + rho_arr.shape, dtype=float)
    for j in range(1, jmax + 1):
        idx = noll_to_nm(j)
        n, m = idx.n, idx.m
        r = _radial(n, abs(m), rho_arr)
        if m == 0:
            out[j - 1] = math.sqrt(n + 1) * r
        elif m > 0:
            out[j - 1] = math.sqrt(2 * (n + 1)) * r * np.cos(m * theta_arr)
        else:
            out[j - 1] = math.sqrt(2 * (n + 1)) * r * np.sin(-m * theta_arr)
    return out


def inm(idx: NollIndex) -> float:
    """Kolmogorov variance prefactor I(n, m) for a Zernike mode.

    I = 0.15337 (-1)^(n-m) (n+1) Gamma(14/3) Gamma(n - 5/6)
        / (Gamma(17/6)^2 Gamma(n + 23/6))

    The (n - m) parity rule makes the sign factor +1 for every valid
    mode.  Piston has no finite Kolmogorov variance and is rejected.
    Anchors: I(1,1) ~ 0.45, I(2,0) = I(2,2) ~ 0.02.
    """
    n, m = idx.n, idx.m
    if n == 0:
        raise ValueError("piston (n=0) is excluded from turbulence statistics")
    sign = (-1.0) ** (n - m)
    value = (
        0.15337
        * sign
        * (n + 1)
        * math.gamma(14.0 / 3.0)
        * math.gamma(n - 5.0 / 6.0)
        / (math.gamma(17.0 / 6.0) ** 2 * math.gamma(n + 23.0 / 6.0))
    )
    return value


def coeff_variance(idx: NollIndex, params: "TurbulenceParams") -> float:
    """Variance (rad^2) of the Zernike coefficient c_j under Kolmogorov
    statistics: sigma^2 = I(n,m) * (D/r0)^(5/3).  Zero when r0 is infinite.
    """
    if math.isinf(params.r0):
        return 0.0
    return inm(idx) * (params.D / params.r0) ** (5.0 / 3.0)


def fried_from_path(cn2: float, path_length: float, wavelength: float) -> float:
    """Fried parameter r0 (m) for a constant-Cn2 path of given length."""
    if cn2 <= 0 or path_length <= 0 or wavelength <= 0:
        raise ValueError("cn2, path_length and wavelength must all be positive")
    k = 2.0 * math.pi / wavelength
    return FRIED_COEFF * (cn2 * path_length * k * k) ** (-3.0 / 5.0)


def path_for_r0(cn2: float, r0: float, wavelength: float) -> float:
    """Path length (m) over which a constant-Cn2 atmosphere yields r0.

    Exact inverse of :func:`fried_from_path`.
    """
    if cn2 <= 0 or r0 <= 0 or wavelength <= 0:
        raise ValueError("cn2, r0 and wavelength must all be positive")
    k = 2.0 * math.pi / wavelength
    return (FRIED_COEFF / r0) ** (5.0 / 3.0) / (cn2 * k * k)


def tilt_variance(params: "TurbulenceParams") -> float:
    """Two-axis angular beam-wander variance (rad^2).

    0.364 (D/r0)^(5/3) (lambda/D)^2, the image-motion variance consistent
    with the tip/tilt coefficient statistics of `coeff_variance`
    (0.364 = 8 I(1,1) / pi^2).  Zero when r0 is infinite.
    """
    if math.isinf(params.r0):
        return 0.0
    return (
        TILT_COEFF
        * (params.D / params.r0) ** (5.0 / 3.0)
        * (params.wavelength / params.D) ** 2
    )


def tilt_std_per_axis(params: "TurbulenceParams") -> float:
    """Per-axis standard deviation (rad) of centroid wander.

    The two uncorrelated axes split the two-axis variance equally.
    """
    return math.sqrt(tilt_variance(params) / 2.0)


@dataclass(frozen=True)
class TurbulenceParams:
    """Beam and turbulence-strength parameters.

    D: beam/aperture diameter (m); r0: Fried parameter (m), may be
    math.inf for no turbulence; wavelength (m).  cn2 and path_length are
    optional and, when both given, must be consistent with r0.
    """

    D: float
    r0: float
    wavelength: float
    cn2: float | None = None
    path_length: float | None = None

    def __post_init__(self):
        if self.D <= 0 or self.wavelength <= 0:
            raise ValueError("D and wavelength must be positive")
        if not (self.r0 > 0):
            raise ValueError("r0 must be positive (math.inf allowed)")
        if (self.cn2 is None) != (self.path_length is None):
            raise ValueError("cn2 and path_length must be given together")
        if self.cn2 is not None:
            derived = fried_from_path(self.cn2, self.path_length, self.wavelength)
            if math.isinf(self.r0) or abs(self.r0 - derived) > 1e-9 * derived:
                raise ValueError(
                    f"r0={self.r0} inconsistent with (cn2, path_length): "
                    f"expected {derived}"
                )

    @classmethod
    def from_path(
        cls, D: float, cn2: float, path_length: float, wavelength: float
    ) -> "TurbulenceParams":
        """Build params with r0 derived from a constant-Cn2 path."""
        r0 = fried_from_path(cn2, path_length, wavelength)
        return cls(D=D, r0=r0, wavelength=wavelength, cn2=cn2, path_length=path_length)

    @property
    def k(self) -> float:
        """Optical wavenumber 2*pi/lambda (rad/m)."""
        return 2.0 * math.pi / self.wavelength

    @property
    def d_over_r0(self) -> float:
        return 0.0 if math.isinf(self.r0) else self.D / self.r0
