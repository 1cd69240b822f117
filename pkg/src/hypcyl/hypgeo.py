"""Hyperbolic geometry kernel on the hyperboloid model.

Points live on the upper sheet of <x, x>_M = -1 in R^{d+1}; the Poincare
ball is used for input/output only. Most routines come in two flavours: a
small object API (:class:`Point`, :class:`Geodesic`) and array kernels that
take stacked coordinates of shape ``(..., d+1)`` for the Monte Carlo code.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np
from scipy import integrate, special
from scipy.spatial import cKDTree

# tolerance on <x,x>_M = -1, relative to x_0^2
_NORM_TOL = 1e-9


class GeometryError(ValueError):
    pass


class ConvergenceError(RuntimeError):
    """Raised by the numeric geodesic-distance minimizer.

    ``best`` holds the smallest distance found before giving up.
    """

    def __init__(self, message, best):
        super().__init__(f"{message} (best bound {best:.12g})")
        self.best = best


class NetBudgetError(RuntimeError):
    pass


# ---------------------------------------------------------------------------
# array kernels

def mdot(x, y):
    """Minkowski product -x0*y0 + sum xi*yi along the last axis."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    return -x[..., 0] * y[..., 0] + np.sum(x[..., 1:] * y[..., 1:], axis=-1)


def mgram(X, Y):
    """Matrix of Minkowski products between rows of X (n, d+1) and Y (m, d+1)."""
    X = np.asarray(X, dtype=float)
    Y = np.asarray(Y, dtype=float)
    return X[:, 1:] @ Y[:, 1:].T - np.outer(X[:, 0], Y[:, 0])


def origin(d):
    o = np.zeros(d + 1)
    o[0] = 1.0
    return o


def lift(spatial):
    """Hyperboloid point(s) with the given spatial part; x0 is recomputed."""
    s = np.asarray(spatial, dtype=float)
    x0 = np.sqrt(1.0 + np.sum(s * s, axis=-1))
    return np.concatenate([x0[..., None], s], axis=-1)


def polar_point(rho, omega):
    """Point at distance rho from o in unit direction omega (broadcasts)."""
    rho = np.asarray(rho, dtype=float)
    omega = np.asarray(omega, dtype=float)
    return np.concatenate([np.cosh(rho)[..., None], np.sinh(rho)[..., None] * omega], axis=-1)


def dist_coords(x, y):
    """Hyperbolic distance between stacked hyperboloid coordinates.

    Uses 2*asinh(|x-y|_M / 2) for nearby points, where acosh(-<x,y>) loses
    half its digits.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    c = -mdot(x, y)
    diff = x - y
    chord2 = np.maximum(mdot(diff, diff), 0.0)
    near = 2.0 * np.arcsinh(np.sqrt(chord2) / 2.0)
    far = np.arccosh(np.maximum(c, 1.0))
    return np.where(c < 2.0, near, far)


def radius_of(x):
    """Distance from o, stable for points near o."""
    x = np.asarray(x, dtype=float)
    return np.arcsinh(np.linalg.norm(x[..., 1:], axis=-1))


def geodesic_at(P, V, t):
    t = np.asarray(t, dtype=float)[..., None]
    return np.cosh(t) * P + np.sinh(t) * V


def foot_params(P, V):
    """Arclength parameter of the point of each line closest to o."""
    P = np.asarray(P, dtype=float)
    V = np.asarray(V, dtype=float)
    return np.arctanh(np.clip(-V[..., 0] / P[..., 0], -1.0, 1.0))


def line_rho(P, V):
    """rho(L) = d_H(o, L) for stacked lines."""
    P = np.asarray(P, dtype=float)
    V = np.asarray(V, dtype=float)
    c2 = np.maximum(P[..., 0] ** 2 - V[..., 0] ** 2, 1.0)
    return np.arccosh(np.sqrt(c2))


def point_line_cosh(x, P, V):
    """cosh of the distance from point(s) x to line(s) (P, V); broadcasts."""
    a = mdot(x, P)
    b = mdot(x, V)
    return np.sqrt(np.maximum(a * a - b * b, 1.0))


def _endpoint_products(P1, V1, P2, V2, gram):
    a1, b1 = P1 + V1, P1 - V1
    a2, b2 = P2 + V2, P2 - V2
    A = np.maximum(-gram(a1, a2), 0.0)
    B = np.maximum(-gram(a1, b2), 0.0)
    C = np.maximum(-gram(b1, a2), 0.0)
    D = np.maximum(-gram(b1, b2), 0.0)
    return A, B, C, D


def line_line_cosh(P1, V1, P2, V2):
    """cosh of the distance between paired lines (broadcasting).

    With ideal endpoints a = p + v, b = p - v, -<g1(t), g2(s)> splits into
    A*XY + D/(XY) + B*X/Y + C*Y/X with X = e^t, Y = e^s, whose infimum is
    sqrt(AD) + sqrt(BC) over 2.
    """
    A, B, C, D = _endpoint_products(P1, V1, P2, V2, mdot)
    return np.maximum(0.5 * (np.sqrt(A * D) + np.sqrt(B * C)), 1.0)


def line_line_cosh_matrix(P1, V1, P2, V2):
    """All-pairs version of :func:`line_line_cosh`, shape (n1, n2)."""
    A, B, C, D = _endpoint_products(np.asarray(P1), np.asarray(V1),
                                    np.asarray(P2), np.asarray(V2), mgram)
    return np.maximum(0.5 * (np.sqrt(A * D) + np.sqrt(B * C)), 1.0)


# ---------------------------------------------------------------------------
# isometries

def boost(d, rapidity, axis=1):
    """Hyperbolic translation along a coordinate axis."""
    M = np.eye(d + 1)
    ch, sh = math.cosh(rapidity), math.sinh(rapidity)
    M[0, 0] = M[axis, axis] = ch
    M[0, axis] = M[axis, 0] = sh
    return M


def translation_to(x):
    """Isometry (pure boost) mapping o to the point x."""
    x = np.asarray(x, dtype=float)
    d = x.shape[-1] - 1
    s = x[1:]
    M = np.empty((d + 1, d + 1))
    M[0, 0] = x[0]
    M[0, 1:] = s
    M[1:, 0] = s
    M[1:, 1:] = np.eye(d) + np.outer(s, s) / (1.0 + x[0])
    return M


def rotation(Q):
    Q = np.asarray(Q, dtype=float)
    d = Q.shape[0]
    M = np.eye(d + 1)
    M[1:, 1:] = Q
    return M


def random_isometry(rng, d, max_rapidity=3.0):
    """Uniform rotation composed with a boost of uniform rapidity in [0, max_rapidity]."""
    G = rng.standard_normal((d, d))
    Q, R = np.linalg.qr(G)
    Q = Q * np.sign(np.diag(R))
    return rotation(Q) @ boost(d, rng.uniform(0.0, max_rapidity))


def apply(M, X):
    """Apply isometry matrix M to stacked coordinates X (rows)."""
    return np.asarray(X, dtype=float) @ np.asarray(M).T


def is_isometry(M, atol=1e-9):
    M = np.asarray(M, dtype=float)
    J = np.diag([-1.0] + [1.0] * (M.shape[0] - 1))
    scale = max(1.0, float(np.abs(M).max()) ** 2)
    return np.allclose(M.T @ J @ M, J, atol=atol * scale) and M[0, 0] > 0


# ---------------------------------------------------------------------------
# points and lines

@dataclass(frozen=True, eq=False)
class Point:
    """A point of H^d in hyperboloid coordinates."""

    coords: np.ndarray

    def __post_init__(self):
        x = np.array(self.coords, dtype=float).reshape(-1)
        if x.size < 3:
            raise GeometryError("dimension d must be at least 2")
        if not np.all(np.isfinite(x)):
            raise GeometryError("non-finite coordinates")
        if x[0] <= 0:
            raise GeometryError("point not on the upper sheet (x0 <= 0)")
        if abs(mdot(x, x) + 1.0) > _NORM_TOL * max(1.0, x[0] ** 2):
            raise GeometryError("coordinates do not satisfy <x,x>_M = -1")
        x = lift(x[1:])
        x.setflags(write=False)
        object.__setattr__(self, "coords", x)

    @property
    def dim(self):
        return self.coords.size - 1

    @classmethod
    def origin(cls, d):
        return cls(origin(d))

    @classmethod
    def from_ball(cls, y):
        y = np.asarray(y, dtype=float)
        n2 = float(y @ y)
        if n2 >= 1.0:
            raise GeometryError("ball coordinates must lie inside the unit ball")
        return cls(lift(2.0 * y / (1.0 - n2)))

    @classmethod
    def polar(cls, rho, omega):
        omega = np.asarray(omega, dtype=float)
        return cls(polar_point(rho, omega / np.linalg.norm(omega)))

    def to_ball(self):
        return self.coords[1:] / (1.0 + self.coords[0])

    @property
    def radius(self):
        return float(radius_of(self.coords))

    def to_json(self):
        return json.dumps({"model": "ball", "coords": self.to_ball().tolist()})

    @classmethod
    def from_json(cls, text):
        obj = json.loads(text) if isinstance(text, str) else text
        if obj.get("model") != "ball":
            raise GeometryError("expected a 'ball' model point")
        return cls.from_ball(obj["coords"])

    def __repr__(self):
        return f"Point(ball={np.array2string(self.to_ball(), precision=6)})"


def _check_pair(x, y):
    if x.dim != y.dim:
        raise GeometryError(f"dimension mismatch: {x.dim} vs {y.dim}")


def dist(x, y):
    """Hyperbolic distance between two points."""
    _check_pair(x, y)
    c = -mdot(x.coords, y.coords)
    if c < 1.0 - 1e-9 * max(1.0, x.coords[0] * y.coords[0]):
        raise GeometryError("invalid points: -<x,y>_M < 1")
    return float(dist_coords(x.coords, y.coords))


def ball_dist(y1, y2):
    """Distance formula written directly in ball coordinates."""
    y1 = np.asarray(y1, dtype=float)
    y2 = np.asarray(y2, dtype=float)
    num = 2.0 * np.sum((y1 - y2) ** 2, axis=-1)
    den = (1.0 - np.sum(y1 * y1, axis=-1)) * (1.0 - np.sum(y2 * y2, axis=-1))
    return np.arccosh(1.0 + num / den)


@dataclass(frozen=True, eq=False)
class Geodesic:
    """Unit-speed geodesic t -> cosh(t) p + sinh(t) v."""

    base: np.ndarray
    direction: np.ndarray

    def __post_init__(self):
        p = Point(self.base).coords
        v = np.array(self.direction, dtype=float).reshape(-1)
        if v.shape != p.shape:
            raise GeometryError("base and direction dimensions differ")
        # re-orthonormalize against p
        v = v + mdot(p, v) * p
        n2 = mdot(v, v)
        if not n2 > 0:
            raise GeometryError("direction must be spacelike")
        v = v / math.sqrt(n2)
        v.setflags(write=False)
        object.__setattr__(self, "base", p)
        object.__setattr__(self, "direction", v)

    @property
    def dim(self):
        return self.base.size - 1

    @classmethod
    def through(cls, x, y):
        """The line through two distinct points."""
        _check_pair(x, y)
        p, q = x.coords, y.coords
        v = q + mdot(p, q) * p
        if mdot(v, v) <= 0:
            raise GeometryError("points coincide")
        return cls(p, v)

    @classmethod
    def from_foot(cls, rho, omega, tangent):
        """Line with closest point at distance rho in direction omega.

        ``tangent`` must be a unit vector of R^d orthogonal to omega.
        """
        omega = np.asarray(omega, dtype=float)
        tangent = np.asarray(tangent, dtype=float)
        p = polar_point(rho, omega)
        v = np.concatenate([[0.0], tangent])
        return cls(p, v)

    def at(self, t):
        return Point(geodesic_at(self.base, self.direction, t))

    def points(self, ts):
        return geodesic_at(self.base, self.direction, np.asarray(ts)[:, None][..., 0])

    @property
    def foot_param(self):
        return float(foot_params(self.base, self.direction))

    @property
    def foot(self):
        return self.at(self.foot_param)

    @property
    def rho(self):
        return float(radius_of(self.foot.coords))

    def canonical(self):
        """Same line re-based at its closest point to o."""
        t = self.foot_param
        p = geodesic_at(self.base, self.direction, t)
        v = np.sinh(t) * self.base + np.cosh(t) * self.direction
        return Geodesic(p, v)

    def transformed(self, M):
        return Geodesic(apply(M, self.base), apply(M, self.direction))

    def __repr__(self):
        return f"Geodesic(rho={self.rho:.6g})"


def dist_point_geodesic(x, L):
    """Return (t_star, d): the closest arclength parameter on L and the distance.

    Minimizing -<x, g(t)> = alpha cosh t + beta sinh t gives tanh t* = -beta/alpha
    and cosh d = sqrt(alpha^2 - beta^2); d itself is re-evaluated between x
    and g(t*) for accuracy at small distances.
    """
    if x.dim != L.dim:
        raise GeometryError("dimension mismatch")
    alpha = -mdot(x.coords, L.base)
    beta = -mdot(x.coords, L.direction)
    t_star = float(np.arctanh(np.clip(-beta / alpha, -1.0, 1.0)))
    q = geodesic_at(L.base, L.direction, t_star)
    return t_star, float(dist_coords(x.coords, q))


def dist_geodesics(L1, L2):
    """Infimum distance between two geodesics (0 if they meet or are asymptotic)."""
    if L1.dim != L2.dim:
        raise GeometryError("dimension mismatch")
    A, B, C, D = _endpoint_products(L1.base, L1.direction, L2.base, L2.direction, mdot)
    scale = max(1.0, float(np.max(np.abs([A, B, C, D]))))
    if min(A, D) <= 1e-14 * scale or min(B, C) <= 1e-14 * scale:
        # shared ideal endpoint
        return 0.0
    xy = math.sqrt(D / A)
    x_over_y = math.sqrt(C / B)
    t = 0.5 * math.log(xy * x_over_y)
    s = 0.5 * math.log(xy / x_over_y)
    p = geodesic_at(L1.base, L1.direction, t)
    q = geodesic_at(L2.base, L2.direction, s)
    return float(dist_coords(p, q))


def dist_geodesics_numeric(L1, L2, r=None, tol=1e-10, max_iter=100):
    """Grid-seeded damped Newton minimization of -<g1(t), g2(s)>.

    Independent of the endpoint closed form; used as a cross-check. Lines are
    re-based at their feet and (t, s) seeded from a 16x16 grid on [-r, r]^2.
    """
    if L1.dim != L2.dim:
        raise GeometryError("dimension mismatch")
    L1, L2 = L1.canonical(), L2.canonical()
    p1, v1, p2, v2 = L1.base, L1.direction, L2.base, L2.direction
    if r is None:
        r = max(L1.rho, L2.rho) + 6.0

    def parts(t, s):
        g1 = np.cosh(t) * p1 + np.sinh(t) * v1
        d1 = np.sinh(t) * p1 + np.cosh(t) * v1
        g2 = np.cosh(s) * p2 + np.sinh(s) * v2
        d2 = np.sinh(s) * p2 + np.cosh(s) * v2
        f = -mdot(g1, g2)
        grad = np.array([-mdot(d1, g2), -mdot(g1, d2)])
        hess = np.array([[f, -mdot(d1, d2)], [-mdot(d1, d2), f]])
        return f, grad, hess

    grid = np.linspace(-r, r, 16)
    T, S = np.meshgrid(grid, grid, indexing="ij")
    G1 = geodesic_at(p1, v1, T)
    G2 = geodesic_at(p2, v2, S)
    F = -mdot(G1, G2)
    i, j = np.unravel_index(np.argmin(F), F.shape)
    t, s = float(T[i, j]), float(S[i, j])
    f, grad, hess = parts(t, s)
    best = f
    for _ in range(max_iter):
        if f <= 1.0 + 1e-13:
            return 0.0
        try:
            step = -np.linalg.solve(hess, grad)
        except np.linalg.LinAlgError:
            step = -grad
        if grad @ step >= 0:
            step = -grad / max(1.0, f)
        lam = 1.0
        while lam > 1e-12:
            f_new, g_new, h_new = parts(t + lam * step[0], s + lam * step[1])
            if f_new <= f:
                break
            lam *= 0.5
        else:
            break
        t, s = t + lam * step[0], s + lam * step[1]
        f_prev, f, grad, hess = f, f_new, g_new, h_new
        best = min(best, f)
        if np.linalg.norm(lam * step) < tol or abs(f_prev - f) <= tol * tol * f:
            g1 = geodesic_at(p1, v1, t)
            g2 = geodesic_at(p2, v2, s)
            return float(dist_coords(g1, g2))
    if best <= 1.0 + 1e-10:
        return 0.0
    raise ConvergenceError("Newton iteration did not converge", float(np.arccosh(best)))


# ---------------------------------------------------------------------------
# triangles

def cosh_rule_side(a, b, gamma):
    """Side opposite the angle gamma between sides a and b (first cosine rule)."""
    if a < 0 or b < 0 or not (0.0 <= gamma <= math.pi):
        raise GeometryError("need a, b >= 0 and gamma in [0, pi]")
    # cosh c - 1 written without cancellation
    c_minus_1 = (math.cosh(a - b) - 1.0) + math.sinh(a) * math.sinh(b) * (1.0 - math.cos(gamma))
    return 2.0 * math.asinh(math.sqrt(max(c_minus_1, 0.0) / 2.0))


def angle_from_sides(a, b, c):
    """Angle opposite side c in a triangle with sides a, b, c (radians, in [0, pi])."""
    # half-angle tangent form; acos of the cosine rule loses small angles
    num = math.sinh(max((c + a - b) / 2.0, 0.0)) * math.sinh(max((c - a + b) / 2.0, 0.0))
    den = math.sinh((a + b + c) / 2.0) * math.sinh(max((a + b - c) / 2.0, 0.0))
    return 2.0 * math.atan2(math.sqrt(num), math.sqrt(den))


def cosh_side_from_angles(alpha, beta, gamma):
    """cosh of the side opposite gamma, from the three angles (second cosine rule)."""
    return (math.cos(alpha) * math.cos(beta) + math.cos(gamma)) / (math.sin(alpha) * math.sin(beta))


@dataclass(frozen=True)
class Triangle:
    """Geodesic triangle; each angle is opposite the side of the same letter.

    Angles are interior angles in [0, pi].
    """

    a: float
    b: float
    c: float
    alpha: float
    beta: float
    gamma: float

    @classmethod
    def from_sas(cls, a, b, gamma):
        if a <= 0 or b <= 0 or not (0.0 < gamma < math.pi):
            raise GeometryError("need a, b > 0 and 0 < gamma < pi")
        c = cosh_rule_side(a, b, gamma)
        alpha = angle_from_sides(b, c, a)
        beta = angle_from_sides(a, c, b)
        return cls(a, b, c, alpha, beta, gamma)

    def residuals(self):
        """Relative residuals of both cosine rules for side c."""
        ch = math.cosh(self.c)
        r1 = math.cosh(self.a) * math.cosh(self.b) - math.sinh(self.a) * math.sinh(self.b) * math.cos(self.gamma)
        r2 = cosh_side_from_angles(self.alpha, self.beta, self.gamma)
        return abs(r1 - ch) / ch, abs(r2 - ch) / ch


# ---------------------------------------------------------------------------
# volumes and caps

def sphere_area(d):
    """O_{d-1}: (d-1)-dimensional volume of the unit sphere in R^d."""
    return 2.0 * math.pi ** (d / 2.0) / math.gamma(d / 2.0)


def ball_volume(d, r):
    """Hyperbolic volume of a ball of radius r in H^d."""
    if d < 2:
        raise GeometryError("d must be at least 2")
    if r < 0:
        raise GeometryError("radius must be nonnegative")
    if r == 0:
        return 0.0
    if d == 2:
        return 2.0 * math.pi * 2.0 * math.sinh(r / 2.0) ** 2
    if d == 3:
        return 4.0 * math.pi * (math.sinh(2.0 * r) / 4.0 - r / 2.0)
    val, _ = integrate.quad(lambda t: math.sinh(t) ** (d - 1), 0.0, r, epsabs=1e-10, epsrel=1e-12, limit=200)
    return sphere_area(d) * val


def cap_area(theta, d):
    """Euclidean area of the boundary cap of angular radius theta."""
    if not (0.0 <= theta <= math.pi / 2):
        raise GeometryError("theta must lie in [0, pi/2]")
    h = 1.0 - math.cos(theta)
    x = min(1.0, 2.0 * h - h * h)
    return 0.5 * sphere_area(d) * float(special.betainc((d - 1) / 2.0, 0.5, x))


# ---------------------------------------------------------------------------
# nets

def uniform_directions(rng, n, d):
    g = rng.standard_normal((n, d))
    return g / np.linalg.norm(g, axis=1, keepdims=True)


def _radial_sampler(d, r_in, r_out, n_grid=4096):
    """Inverse CDF of the radius for points uniform in volume on a shell."""
    grid = np.linspace(r_in, r_out, n_grid)
    dens = np.sinh(grid) ** (d - 1)
    cdf = np.concatenate([[0.0], np.cumsum(0.5 * (dens[1:] + dens[:-1]) * np.diff(grid))])
    cdf /= cdf[-1]
    return lambda u: np.interp(u, cdf, grid)


def sample_volume(rng, d, r_out, n, r_in=0.0):
    """Points roughly uniform in volume on the shell r_in <= rho <= r_out."""
    inv = _radial_sampler(d, r_in, r_out)
    rho = inv(rng.random(n))
    return polar_point(rho, uniform_directions(rng, n, d))


def _near_mask(X, C, spacing, chunk=2048):
    """True for rows of X within `spacing` of some row of C."""
    out = np.zeros(len(X), dtype=bool)
    if len(C) == 0 or len(X) == 0:
        return out
    thr = math.cosh(spacing)
    for i in range(0, len(X), chunk):
        G = -mgram(X[i:i + chunk], C)
        out[i:i + chunk] = (G <= thr * (1 + 1e-13)).any(axis=1)
    return out


class _CenterIndex:
    """Centers bucketed by radius, with a direction k-d tree per bucket."""

    def __init__(self, d, spacing):
        self.d = d
        self.spacing = spacing
        self.chunks = []
        self._trees = {}

    def add(self, X):
        if len(X):
            self.chunks.append(np.asarray(X))
            self._trees.clear()

    @property
    def centers(self):
        if not self.chunks:
            return np.zeros((0, self.d + 1))
        if len(self.chunks) > 1:
            self.chunks = [np.concatenate(self.chunks)]
        return self.chunks[0]

    def _buckets(self):
        if not self._trees:
            C = self.centers
            rad = radius_of(C)
            keys = np.floor(rad / self.spacing).astype(int)
            for k in np.unique(keys):
                idx = np.nonzero(keys == k)[0]
                dirs = C[idx, 1:] / np.maximum(np.linalg.norm(C[idx, 1:], axis=1, keepdims=True), 1e-300)
                self._trees[int(k)] = (C[idx], cKDTree(dirs), float(rad[idx].min()))
        return self._trees

    def near(self, X):
        """Mask of rows of X within spacing of an indexed center."""
        out = np.zeros(len(X), dtype=bool)
        if not self.chunks or len(X) == 0:
            return out
        s = self.spacing
        thr = math.cosh(s) * (1 + 1e-13)
        rad = radius_of(X)
        dirs = X[:, 1:] / np.maximum(np.linalg.norm(X[:, 1:], axis=1, keepdims=True), 1e-300)
        keys = np.floor(rad / s).astype(int)
        buckets = self._buckets()
        for kx in np.unique(keys):
            rows = np.nonzero(keys == kx)[0]
            rmin_x = float(rad[rows].min())
            for kc in (kx - 1, kx, kx + 1):
                if kc not in buckets:
                    continue
                C, tree, rmin_c = buckets[kc]
                todo = rows[~out[rows]]
                if len(todo) == 0:
                    break
                # angular bound: cosh s >= 1 + sinh(r1) sinh(r2) (1 - cos theta)
                sh = math.sinh(max(rmin_x, 0.0)) * math.sinh(max(rmin_c, 0.0))
                one_minus_cos = (math.cosh(s) - 1.0) / sh if sh > 0 else 2.0
                chord = math.sqrt(2.0 * min(one_minus_cos, 2.0))
                pairs = cKDTree(dirs[todo]).sparse_distance_matrix(tree, chord + 1e-12, output_type="ndarray")
                if len(pairs) == 0:
                    continue
                i, j = todo[pairs["i"]], pairs["j"]
                ok = -mdot(X[i], C[j]) <= thr
                out[i[ok]] = True
        return out


def _greedy_fill(index, X, spacing):
    """Greedily add rows of X (in order) that are spacing-apart from everything."""
    keep = X[~index.near(X)]
    if len(keep) == 0:
        return 0
    thr = math.cosh(spacing) * (1 + 1e-13)
    added = 0
    for i in range(0, len(keep), 1024):
        block = keep[i:i + 1024]
        block = block[~index.near(block)]
        if len(block) == 0:
            continue
        close = -mgram(block, block) <= thr
        alive = np.ones(len(block), dtype=bool)
        chosen = []
        for j in range(len(block)):
            if alive[j]:
                chosen.append(j)
                alive &= ~close[j]
        index.add(block[chosen])
        added += len(chosen)
    return added


@dataclass
class Net:
    """A separated net: centers pairwise >= packing apart, covering radius `covering`."""

    centers: np.ndarray
    packing: float
    covering: float
    d: int
    r_out: float
    r_in: float = 0.0
    n_verify: int = 0

    def __len__(self):
        return len(self.centers)

    def points(self):
        return [Point(c) for c in self.centers]

    def min_pairwise(self, chunk=2048):
        C = self.centers
        best = np.inf
        for i in range(0, len(C), chunk):
            G = -mgram(C[i:i + chunk], C)
            rows = np.arange(i, min(i + chunk, len(C)))
            G[rows - i, rows] = np.inf
            best = min(best, float(G.min()))
        return float(np.arccosh(max(best, 1.0))) if np.isfinite(best) else np.inf

    def covering_radius(self, sample):
        """Largest distance from a sample point to its nearest center."""
        worst = 0.0
        for i in range(0, len(sample), 2048):
            G = -mgram(sample[i:i + 2048], self.centers)
            worst = max(worst, float(np.arccosh(np.maximum(G.min(axis=1), 1.0)).max()))
        return worst


def _build_net(rng, d, r_in, r_out, spacing, seed_points, budget, n_verify, max_rounds=50):
    # candidates may sit up to half a spacing outside the region; otherwise
    # thin uncovered slivers survive along the boundary sphere
    c_in, c_out = max(r_in - spacing / 2, 0.0), r_out + spacing / 2
    index = _CenterIndex(d, spacing)
    if seed_points is not None:
        index.add(np.atleast_2d(seed_points))
    X = sample_volume(rng, d, c_out, 4 * n_verify, r_in=c_in)
    _greedy_fill(index, X[np.argsort(radius_of(X), kind="stable")], spacing)
    local = sample_volume(rng, d, spacing, 32)
    for _ in range(max_rounds):
        if len(index.centers) > budget:
            raise NetBudgetError(f"net exceeds the center budget of {budget}")
        X = sample_volume(rng, d, r_out, n_verify, r_in=r_in)
        missed = X[~index.near(X)]
        if len(missed) == 0:
            return index.centers
        # refill around each hole
        extra = np.concatenate([apply(translation_to(m), local) for m in missed])
        rad = radius_of(extra)
        extra = extra[(rad >= c_in) & (rad <= c_out)]
        _greedy_fill(index, np.concatenate([missed, extra]), spacing)
    raise NetBudgetError("covering verification did not stabilise")


def greedy_net(d, r, spacing=0.5, seed=0, budget=200_000, n_verify=100_000):
    """Greedy separated net of B(o, r) grown outward from o.

    Candidates are drawn uniformly in volume and swept in order of distance
    from o; rounds repeat until a fresh batch of `n_verify` points is entirely
    covered.
    """
    if r <= 0 or spacing <= 0:
        raise GeometryError("need r > 0 and spacing > 0")
    rng = np.random.default_rng(seed)
    centers = _build_net(rng, d, 0.0, r, spacing, origin(d), budget, n_verify)
    return Net(centers, spacing, spacing, d, r, 0.0, n_verify)


def shell_ball_centers(d, R, seed=0, budget=200_000, n_verify=100_000):
    """Centers on the sphere of radius R from a 1/2-net of the shell
    R - 1/2 <= rho <= R + 3/2, each moved radially onto the sphere.
    """
    if R < 1:
        raise GeometryError("R must be at least 1")
    rng = np.random.default_rng(seed)
    centers = _build_net(rng, d, max(R - 0.5, 0.0), R + 1.5, 0.5, None, budget, n_verify)
    dirs = centers[:, 1:] / np.linalg.norm(centers[:, 1:], axis=1, keepdims=True)
    return polar_point(np.full(len(dirs), float(R)), dirs)


def shell_growth_constant(d, R, centers):
    """Empirical c in |centers| >= c exp((d-1) R)."""
    return len(centers) * math.exp(-(d - 1) * R)


def max_cylinder_ball_hits(rng, centers, R, n_lines=2000, s=1.0, ball_radius=0.25):
    """Largest number of balls B(center, 1/4) met by one cylinder of radius s.

    Lines are sampled from those hitting B(o, R + 5/4), the only ones whose
    cylinders can reach the balls.
    """
    from .linemeasure import sample_lines  # deferred: linemeasure imports this module

    d = centers.shape[1] - 1
    P, V = sample_lines(rng, d, R + s + ball_radius, n_lines)
    worst = 0
    thr = math.cosh(s + ball_radius)
    for i in range(0, n_lines, 256):
        a = mgram(P[i:i + 256], centers)
        b = mgram(V[i:i + 256], centers)
        hits = (a * a - b * b) <= thr * thr
        worst = max(worst, int(hits.sum(axis=1).max()))
    return worst
