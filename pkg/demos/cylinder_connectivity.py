"""Cylinder connectivity: components over intensity, and how far chains reach."""
import math

from hypcyl import cylproc as cp
from hypcyl import particles as pt
from hypcyl.mc import RngStream

rows = cp.phase_scan(RngStream(1), 2, 5.0, [0.02, 0.1, 0.3, 1.0, 3.0], reps=10)
print("u      components  largest fraction")
for r in rows:
    print(f"{r['u']:<6} {r['mean_components']:10.1f}  {r['largest_frac']:.3f}")

print("\ntwo-cylinder connection probability at u=0.05")
for R in (3.0, 4.0, 5.0):
    e = cp.estimate_connect_prob_msteps(RngStream(2, int(R)), 2, 0.05, R, 2, reps=2000)
    print(f"  R={R}: p={e.mean:.4f}  p*e^R/R^2={e.mean * math.exp(R) / R**2:.3f}")

rep = pt.growth_rate_comparison(RngStream(3), 2, 0.01, [2, 3, 4, 5, 6], gens=4, reps=300)
print(f"\ngrowth in R: exploration {rep.eta_rate:.3f} {rep.eta_rate_ci95}, all lines {rep.ambient_rate:.3f}")
