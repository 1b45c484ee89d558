"""Three unit squares in the coordinate planes of R^3.

This is the one configuration where every quantity is known in closed form,
so it is a good first check that the fiber machinery is wired correctly.
"""

import numpy as np

from transconv.convolution import convolve_points, verify_theorem1
from transconv.families import coordinate_planes
from transconv.surfaces import SurfaceDensity, transversality_gamma0

# S1 lies in {x = 0}, S2 in {y = 0} shifted down by one, S3 in {z = 0}
S1, S2, S3 = coordinate_planes(cells=2)
print("facets per surface:", len(S1), len(S2), len(S3))
print("gamma0:", transversality_gamma0(S1, S2, S3))

f1 = SurfaceDensity.constant(S1)
f2 = SurfaceDensity.constant(S2)

# With uniform densities the convolution at (x, y, z) is the length of
# {z' in [0, 1] : z - z' in [-1, 0]}, i.e. 1 - |z| over the unit square.
rng = np.random.default_rng(0)
pts = rng.uniform([0, 0, -1], [1, 1, 1], size=(8, 3))
vals = convolve_points(pts, f1, f2, S1, S2)
for p, v in zip(pts, vals):
    print(f"  z = {p[2]:+.3f}   f1*f2 = {v:.12f}   1 - |z| = {1 - abs(p[2]):.12f}")

# On S3 itself (z = 0) the convolution is identically 1, so the ratio is 1
rep = verify_theorem1(f1, f2, S1, S2, S3, level=2)
print(f"ratio {rep.ratio:.15f}   gamma0^(-1/2) {rep.linear_bound:.3f}   "
      f"gamma0^(-3/2) {rep.bound:.3f}")

# Non-uniform densities can only do worse than the bound, never better
f1 = SurfaceDensity(rng.uniform(0, 1, len(S1)))
f2 = SurfaceDensity(rng.uniform(0, 1, len(S2)))
print("random densities, ratio:", verify_theorem1(f1, f2, S1, S2, S3, level=3).ratio)
