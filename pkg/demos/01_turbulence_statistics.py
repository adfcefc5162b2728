"""Closed-form turbulence statistics: mode variances, coherence length,
beam wander, and the annulus occupancy weights.

Run:  python3 demos/01_turbulence_statistics.py
"""

import math

import numpy as np

from turbqkd import screens as sc
from turbqkd import turbmath as tm

# A 20 cm beam at 532 nm in progressively stronger turbulence.
D, LAM = 0.2, 532e-9

print("Per-mode Kolmogorov variance prefactors (Noll order):")
for j in (2, 3, 4, 5, 6, 7, 8, 11):
    idx = tm.noll_to_nm(j)
    print(f"  j={j:2d} (n={idx.n}, m={idx.m:+d}):  I = {tm.inm(idx):.5f}")
print()

print("Coefficient variances and wander at several coherence lengths:")
for r0_cm in (7.0, 3.5, 2.21, 1.53, 1.0):
    p = tm.TurbulenceParams(D=D, r0=r0_cm / 100, wavelength=LAM)
    var_tip = tm.coeff_variance(tm.noll_to_nm(2), p)
    sigma = tm.tilt_std_per_axis(p)
    print(
        f"  r0 = {r0_cm:5.2f} cm:  D/r0 = {p.d_over_r0:5.1f}, "
        f"var(c_tip) = {var_tip:8.2f} rad^2, "
        f"per-axis wander = {sigma * 1e6:6.2f} urad"
    )
print()

print("Path lengths under sea-level conditions (Cn2 = 1.8e-14 m^-2/3):")
for r0_cm in (2.21, 1.53, 1.0):
    length = tm.path_for_r0(1.8e-14, r0_cm / 100, LAM)
    print(f"  r0 = {r0_cm:5.2f} cm  <->  L = {length:7.1f} m")
back = tm.fried_from_path(1.8e-14, 1000.0, LAM)
print(f"  and inversely, L = 1 km  ->  r0 = {back * 100:.2f} cm")
print()

w = sc.annulus_weights()
print("Occupancy weights of the wander annuli (0, 0.5, 1, 2, 3 sigma):")
print(" ", np.round(w, 4), " sum =", w.sum())
