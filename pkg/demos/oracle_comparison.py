"""Fiber quadrature against a thickened-surface Monte Carlo estimate.

The trilinear form int int F1(x) F2(y) F3(-x-y) is estimated with each
surface smeared over a slab of width eps. As eps shrinks the estimate
approaches the fiber pairing, with a bias of order eps / (patch size).
"""

import numpy as np

from transconv.convolution import fiber_pairing, thickened_trilinear
from transconv.families import dual_basis_patches, random_linear_frames
from transconv.linalg import DimensionSignature
from transconv.surfaces import SurfaceDensity

rng = np.random.default_rng(11)
sig = DimensionSignature.from_codims(1, 1, 1)
(S1, S2, S3), gamma = dual_basis_patches(*random_linear_frames(rng, sig, 0.3), cells=2)
S3r = S3.reflected()
f1, f2, f3 = (SurfaceDensity(rng.uniform(0.2, 1, len(S))) for S in (S1, S2, S3r))

pair = fiber_pairing(f1, f2, f3, S1, S2, S3r, level=3)
print(f"gamma {gamma:.4f}, fiber pairing {pair.value:.6f} (level change "
      f"{abs(pair.value - pair.coarse) / pair.value:.1e})")
print(f"{'eps':>6} {'MC':>10} {'stderr':>9} {'bias':>9} {'z':>6}")
for eps in (0.4, 0.2, 0.1, 0.05, 0.01):
    mc = thickened_trilinear(f1, f2, f3, S1, S2, S3r, epsilon=eps, samples=400_000, seed=1)
    print(f"{eps:6.2f} {mc.value:10.6f} {mc.stderr:9.2e} {mc.value - pair.value:+9.2e} "
          f"{abs(mc.value - pair.value) / mc.stderr:6.2f}")

# Enlarging the patches shrinks the relative bias at a fixed eps
for scale in (1.0, 3.0):
    T = [S.scaled(scale) for S in (S1, S2, S3r)]
    p = fiber_pairing(f1, f2, f3, *T, level=3).value
    mc = thickened_trilinear(f1, f2, f3, *T, epsilon=0.1, samples=400_000, seed=2)
    print(f"scale {scale}: relative bias {(mc.value - p) / p:+.2e} +- {mc.stderr / p:.1e}")
