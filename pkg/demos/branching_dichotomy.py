"""Expected generation sizes on both sides of u = 1/4, exact and simulated."""
import math

from hypcyl import branching as br
from hypcyl import particles as pt
from hypcyl.mc import RngStream

for u in (0.2, 0.25, 0.3):
    logs = [br.log_F_n(n, 1.0, u) / math.log(10) for n in (10, 50, 100, 200)]
    print(f"u={u}: log10 F_n(1) at n=10,50,100,200 ->", " ".join(f"{v:8.2f}" for v in logs),
          f"[{br.regime(u)}]")

gc = pt.zeta_counts(RngStream(3), 0.1, 4, 2.0, 100_000)
print("\nsimulated vs exact, u=0.1, R=2")
for n in range(1, 5):
    e = gc.estimate(n)
    print(f"  n={n}: {e.mean:.5f} +- {e.stderr:.5f}   exact {br.F_n(n, 2.0, 0.1):.5f}")
