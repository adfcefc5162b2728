"""Phase screens and their far fields: sampling, rendering, centroids,
tip-tilt removal, and the representative 29-screen ensemble.

Writes a few PGM previews and a pool CSV next to this script.

Run:  python3 demos/02_phase_screens_far_field.py
"""

import math
import pathlib

import numpy as np

from turbqkd import optics as op
from turbqkd import screens as sc
from turbqkd import turbmath as tm

OUT = pathlib.Path(__file__).parent / "output"
OUT.mkdir(exist_ok=True)

p = tm.TurbulenceParams(D=0.2, r0=0.01, wavelength=532e-9)

# One screen and its far field.
coeffs = sc.sample_coeffs(p, seed=2024)
screen = sc.render(coeffs, resolution=256)
img = op.far_field(screen, p, oversample=4)
c = op.centroid(img)
print(f"screen seed {coeffs.seed}: rms phase "
      f"{screen.grid[screen.weights > 0].std():.2f} rad, "
      f"centroid ({c.x * 1e6:+.2f}, {c.y * 1e6:+.2f}) urad")
op.save_pgm(screen.grid - screen.grid.min(), OUT / "screen.pgm")
op.save_pgm(img.data, OUT / "far_field.pgm")
op.save_intensity_txt(img, OUT / "far_field.txt")

# Tip-tilt removal recenters the far field.
corrected = sc.correct_tip_tilt(coeffs)
c2 = op.centroid(op.far_field(sc.render(corrected, 256), p, oversample=4))
print(f"after tip-tilt removal: centroid ({c2.x * 1e6:+.2f}, {c2.y * 1e6:+.2f}) urad")

# Wander statistics over a pool, against the analytic prediction.
pool = sc.sample_pool(p, pool_seed=7, count=200)
prop = op.make_centroid_propagator(p, resolution=256, oversample=4)
cents = np.array([prop(s) for s in pool])
sigma_pred = tm.tilt_std_per_axis(p)
print(f"pool of {len(pool)}: per-axis wander std "
      f"{cents.std(axis=0)[0] * 1e6:.2f} / {cents.std(axis=0)[1] * 1e6:.2f} urad "
      f"(predicted {sigma_pred * 1e6:.2f})")

# Representative ensemble: 1 flat + 8/8/8/4 screens near the target radii.
ens = sc.build_ensemble(pool + sc.sample_pool(p, 8, 300), p, prop)
print("ensemble bins:", [ens.bin_label(i) for i in (0, 1, 9, 17, 25)],
      "... weights", np.round(ens.weights, 4))
sc.save_pool(OUT / "pool.csv", pool)
print(f"wrote {OUT / 'pool.csv'} and PGM previews")
