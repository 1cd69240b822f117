"""Invariant measure on lines of H^d: hitting formulas, exact samplers and
Monte Carlo estimates of measures of line sets.

Lines are stored in batches as arrays ``(P, V)`` of shape ``(n, d+1)`` where
``P`` is the point of the line closest to o and ``V`` the unit tangent there.
The measure is normalised so the lines meeting B(o, 1) have mass O_{d-1}.
"""
from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import asdict, dataclass

import numpy as np

from .hypgeo import (
    Geodesic,
    GeometryError,
    Point,
    foot_params,
    geodesic_at,
    line_line_cosh,
    point_line_cosh,
    polar_point,
    radius_of,
    sphere_area,
    uniform_directions,
)
from .mc import as_generator, seed_record


class WindowTooLargeError(RuntimeError):
    pass


def measure_hitting_ball(d, r):
    """Measure of the lines meeting a ball of radius r."""
    if d < 2 or r < 0:
        raise GeometryError("need d >= 2 and r >= 0")
    return sphere_area(d) * (math.sinh(r) / math.sinh(1.0)) ** (d - 1)


def measure_shell(d, a, b):
    """Measure of the lines with a < rho(L) <= b."""
    return sphere_area(d) * (math.sinh(b) ** (d - 1) - math.sinh(a) ** (d - 1)) / math.sinh(1.0) ** (d - 1)


@dataclass(frozen=True)
class LineWindow:
    d: int
    r: float

    @property
    def total_measure(self):
        return measure_hitting_ball(self.d, self.r)


# ---------------------------------------------------------------------------
# sampling

def _orthogonal_unit(rng, omega):
    g = rng.standard_normal(omega.shape)
    g -= np.sum(g * omega, axis=1, keepdims=True) * omega
    return g / np.linalg.norm(g, axis=1, keepdims=True)


def sample_rho(rng, d, r, n, r_in=0.0):
    """rho(L) for lines drawn from the measure restricted to r_in < rho <= r.

    The radial law has CDF proportional to sinh^{d-1}(rho).
    """
    U = rng.random(n)
    if r_in == 0.0:
        return np.arcsinh(math.sinh(r) * U ** (1.0 / (d - 1)))
    lo, hi = math.sinh(r_in) ** (d - 1), math.sinh(r) ** (d - 1)
    return np.arcsinh((lo + U * (hi - lo)) ** (1.0 / (d - 1)))


def sample_lines(rng, d, r, n, r_in=0.0):
    """n i.i.d. lines from the normalised measure on lines with r_in < rho <= r.

    Returns (P, V): feet and unit tangents at the feet.
    """
    rng = as_generator(rng)
    rho = sample_rho(rng, d, r, n, r_in)
    omega = uniform_directions(rng, n, d)
    tangent = _orthogonal_unit(rng, omega)
    P = polar_point(rho, omega)
    V = np.concatenate([np.zeros((n, 1)), tangent], axis=1)
    return P, V


def sample_line_hitting_ball(rng, d, r):
    if r <= 0:
        raise GeometryError("r must be positive")
    P, V = sample_lines(rng, d, r, 1)
    return Geodesic(P[0], V[0])


def poisson_count(rng, u, d, r, max_expected=2e6):
    if u < 0:
        raise ValueError("intensity must be nonnegative")
    lam = u * measure_hitting_ball(d, r)
    if lam > max_expected:
        raise WindowTooLargeError(f"expected {lam:.3g} lines exceeds the cap {max_expected:.3g}")
    return int(as_generator(rng).poisson(lam))


def sample_poisson_lines(rng, u, d, r, max_expected=2e6):
    """Poisson line process of intensity u restricted to lines meeting B(o, r)."""
    rng = as_generator(rng)
    n = poisson_count(rng, u, d, r, max_expected)
    return sample_lines(rng, d, r, n)


def sample_poisson_line_process(rng, u, d, r, max_expected=2e6):
    P, V = sample_poisson_lines(rng, u, d, r, max_expected)
    return to_geodesics(P, V)


def to_geodesics(P, V):
    return [Geodesic(p, v) for p, v in zip(P, V)]


def from_geodesics(lines, d=None):
    if not lines:
        if d is None:
            raise ValueError("dimension needed for an empty line list")
        return np.zeros((0, d + 1)), np.zeros((0, d + 1))
    return np.array([L.base for L in lines]), np.array([L.direction for L in lines])


def canonicalize(P, V):
    """Re-base lines at their closest point to o."""
    t = foot_params(P, V)
    Pc = geodesic_at(P, V, t)
    Vc = np.sinh(t)[..., None] * P + np.cosh(t)[..., None] * V
    return Pc, Vc


# ---------------------------------------------------------------------------
# hit regions

@dataclass(frozen=True, eq=False)
class Ball:
    center: np.ndarray
    radius: float

    @classmethod
    def at(cls, point, radius):
        c = point.coords if isinstance(point, Point) else np.asarray(point, dtype=float)
        return cls(c, float(radius))

    @property
    def d(self):
        return len(self.center) - 1

    def hits(self, P, V):
        return point_line_cosh(self.center, P, V) <= math.cosh(self.radius) * (1 + 1e-12)

    def enclosed_in(self, r):
        return float(radius_of(self.center)) + self.radius <= r + 1e-12


@dataclass(frozen=True, eq=False)
class Cylinder:
    """Points within `radius` of the line (p, v)."""

    p: np.ndarray
    v: np.ndarray
    radius: float

    @classmethod
    def around(cls, line, radius=1.0):
        return cls(line.base, line.direction, float(radius))

    @property
    def d(self):
        return len(self.p) - 1

    def hits(self, P, V):
        return line_line_cosh(P, V, self.p, self.v) <= math.cosh(self.radius) * (1 + 1e-12)

    def enclosed_in(self, r):
        return False


@dataclass(frozen=True)
class MeasureEstimate:
    mean: float
    stderr: float
    n_samples: int
    seed: object
    hits: int = 0

    def to_dict(self):
        return asdict(self)


def estimate_measure_intersection(rng, A, B, enclosing_r, n, batch=200_000):
    """Measure of lines meeting both A and B, by sampling lines meeting B(o, enclosing_r).

    Every line meeting A (or B) must meet the window, which holds as soon as
    one of the two regions lies inside it.
    """
    if not (A.enclosed_in(enclosing_r) or B.enclosed_in(enclosing_r)):
        raise GeometryError("neither region lies inside the enclosing ball")
    if n < 1:
        raise ValueError("n must be positive")
    d = A.d
    seed = seed_record(rng)
    g = as_generator(rng)
    total = measure_hitting_ball(d, enclosing_r)
    hits = 0
    for start in range(0, n, batch):
        m = min(batch, n - start)
        P, V = sample_lines(g, d, enclosing_r, m)
        hits += int(np.count_nonzero(A.hits(P, V) & B.hits(P, V)))
    p = hits / n
    se = total * math.sqrt(p * (1 - p) / n)
    return MeasureEstimate(total * p, se, n, seed, hits)


def estimate_ball_measure(rng, center, radius, window_r, n):
    """Measure of lines meeting B(center, radius) from a window sample around o."""
    ball = Ball.at(center, radius)
    return estimate_measure_intersection(rng, ball, ball, window_r, n)


# ---------------------------------------------------------------------------
# export

def line_records(P, V):
    """Records {rho, foot_direction, tangent} describing each line."""
    Pc, Vc = canonicalize(np.atleast_2d(P), np.atleast_2d(V))
    out = []
    for p, v in zip(Pc, Vc):
        s = p[1:]
        nrm = np.linalg.norm(s)
        if nrm > 0:
            omega = s / nrm
        else:
            # line through o: any direction orthogonal to the tangent
            omega = np.zeros_like(s)
            omega[np.argmin(np.abs(v[1:]))] = 1.0
            omega -= (omega @ v[1:]) * v[1:]
            omega /= np.linalg.norm(omega)
        out.append({"rho": float(np.arcsinh(nrm)), "foot_direction": omega.tolist(), "tangent": v[1:].tolist()})
    return out


def lines_from_records(records):
    rho = np.array([r["rho"] for r in records], dtype=float)
    omega = np.array([r["foot_direction"] for r in records], dtype=float)
    tangent = np.array([r["tangent"] for r in records], dtype=float)
    P = polar_point(rho, omega)
    V = np.concatenate([np.zeros((len(rho), 1)), tangent], axis=1)
    return P, V


def lines_to_json(P, V):
    return json.dumps(line_records(P, V))


def lines_to_csv(P, V):
    recs = line_records(P, V)
    d = P.shape[1] - 1
    buf = io.StringIO()
    w = csv.writer(buf)
    w.writerow(["rho"] + [f"foot_direction_{i}" for i in range(d)] + [f"tangent_{i}" for i in range(d)])
    for r in recs:
        w.writerow([repr(r["rho"])] + [repr(x) for x in r["foot_direction"]] + [repr(x) for x in r["tangent"]])
    return buf.getvalue()
