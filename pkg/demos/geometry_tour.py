"""Distances, lines and the invariant line measure in the hyperbolic plane."""
import math

import numpy as np

from hypcyl import hypgeo as hg
from hypcyl import linemeasure as lm
from hypcyl.mc import RngStream

o = hg.Point.from_ball([0.0, 0.0])
a = hg.Point.from_ball([0.5, 0.0])
print(f"d(o, a) = {hg.dist(o, a):.7f}  (ln 3 = {math.log(3):.7f})")

L1 = hg.Geodesic.from_foot(0.7, [1, 0], [0, 1])
L2 = hg.Geodesic.from_foot(0.7, [-1, 0], [0, 1])
print(f"two lines orthogonal to a diameter, feet at +-0.7: distance {hg.dist_geodesics(L1, L2):.6f}")
t, d = hg.dist_point_geodesic(o, L1)
print(f"o to L1: {d:.6f} at parameter {t:.2e}")

# lines meeting B(o, r): closed form vs sampling an off-center unit ball
for r in (1.0, 2.0, 4.0):
    print(f"measure of lines meeting B(o, {r}): {lm.measure_hitting_ball(2, r):.4f}")
z = hg.polar_point(2.0, np.array([1.0, 0.0]))
est = lm.estimate_ball_measure(RngStream(1), z, 1.0, 4.0, 200_000)
print(f"lines meeting B(z, 1), d(o,z)=2: {est.mean:.3f} +- {est.stderr:.3f} (exact {2 * math.pi:.3f})")
