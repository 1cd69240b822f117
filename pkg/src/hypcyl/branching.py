"""Closed-form analytics of the one-dimensional particle process.

The expected densities are u^n g_{n-1}, where g_n = sum_k c_{k,n} x^k / k!
and c_{k,n} is the Catalan triangle. The operator

    (T f)(x) = int_0^x f(y) dy + int_x^inf e^{x-y} f(y) dy

maps g_n to g_{n+1}; it is implemented exactly on polynomials plus
polynomial * e^{a x} terms (0 < a < 1), and by quadrature for anything else.
"""
from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass
from fractions import Fraction
from functools import lru_cache

import numpy as np
from scipy import integrate
from scipy.special import logsumexp

QUARTER = 0.25


class UnsupportedFormError(TypeError):
    pass


# ---------------------------------------------------------------------------
# Catalan triangle

def catalan(k, n):
    """c_{k,n} = (k+1)/(n+1) * binom(2n-k, n)."""
    if not (0 <= k <= n):
        raise ValueError(f"need 0 <= k <= n, got k={k}, n={n}")
    num = (k + 1) * math.comb(2 * n - k, n)
    q, r = divmod(num, n + 1)
    assert r == 0
    return q


@lru_cache(maxsize=None)
def catalan_rows(n_max):
    """Rows 0..n_max built by the summation recursion, as tuples of ints."""
    rows = [(1,)]
    for n in range(1, n_max + 1):
        prev = rows[-1]
        # c_{k,n} = sum_{l=k-1}^{n-1} c_{l,n-1}: suffix sums of the previous row
        suffix = [0] * (n + 1)
        acc = 0
        for l in range(n - 1, -1, -1):
            acc += prev[l]
            suffix[l] = acc
        rows.append(tuple(suffix[max(k - 1, 0)] for k in range(n + 1)))
    return tuple(rows)


def catalan_recursive(k, n):
    if not (0 <= k <= n):
        raise ValueError(f"need 0 <= k <= n, got k={k}, n={n}")
    return catalan_rows(n)[n][k]


@lru_cache(maxsize=None)
def _log_catalan_row(n):
    return np.array([math.log(catalan(k, n)) for k in range(n + 1)])


# ---------------------------------------------------------------------------
# exact polynomials with an optional exponential part

def _fracs(seq):
    out = [Fraction(c) for c in seq]
    while out and out[-1] == 0:
        out.pop()
    return tuple(out)


@dataclass(frozen=True)
class ExpPolynomial:
    """sum_k poly[k] x^k + e^{rate x} sum_j exp_poly[j] x^j with rational coefficients."""

    poly: tuple = ()
    exp_poly: tuple = ()
    rate: Fraction = Fraction(1, 2)

    def __post_init__(self):
        object.__setattr__(self, "poly", _fracs(self.poly))
        object.__setattr__(self, "exp_poly", _fracs(self.exp_poly))
        object.__setattr__(self, "rate", Fraction(self.rate))

    @property
    def degree(self):
        return len(self.poly) - 1

    def __add__(self, other):
        if self.exp_poly and other.exp_poly and self.rate != other.rate:
            raise UnsupportedFormError("cannot add exponential parts with different rates")
        rate = self.rate if self.exp_poly else other.rate
        return ExpPolynomial(_padd(self.poly, other.poly), _padd(self.exp_poly, other.exp_poly), rate)

    def __sub__(self, other):
        return self + other.scale(-1)

    def scale(self, c):
        c = Fraction(c)
        return ExpPolynomial([c * a for a in self.poly], [c * b for b in self.exp_poly], self.rate)

    def __call__(self, x):
        x = float(x)
        val = math.fsum(float(a) * x ** k for k, a in enumerate(self.poly))
        if self.exp_poly:
            val += math.exp(float(self.rate) * x) * math.fsum(float(b) * x ** j for j, b in enumerate(self.exp_poly))
        return val

    def exact(self, x):
        """Exact value of the polynomial part at a rational x (no exponential part)."""
        if self.exp_poly:
            raise UnsupportedFormError("exact evaluation needs a pure polynomial")
        x = Fraction(x)
        return sum((a * x ** k for k, a in enumerate(self.poly)), Fraction(0))

    def coefficients(self):
        return {"poly": [str(a) for a in self.poly], "exp_poly": [str(b) for b in self.exp_poly],
                "rate": str(self.rate)}


def _padd(p, q):
    n = max(len(p), len(q))
    return [(p[i] if i < len(p) else 0) + (q[i] if i < len(q) else 0) for i in range(n)]


def g_poly(n):
    """g_n(x) = sum_k c_{k,n} x^k / k!."""
    if n < 0:
        raise ValueError("n must be nonnegative")
    return ExpPolynomial([Fraction(catalan(k, n), math.factorial(k)) for k in range(n + 1)])


def eigenfunction():
    """(x + 2) e^{x/2}, mapped by T to four times itself."""
    return ExpPolynomial((), (2, 1), Fraction(1, 2))


def apply_T(p):
    """Exact image of an ExpPolynomial under T."""
    if isinstance(p, (int, Fraction)):
        p = ExpPolynomial((p,))
    if not isinstance(p, ExpPolynomial):
        raise UnsupportedFormError(f"T is only implemented exactly for ExpPolynomial, got {type(p).__name__}")
    out = [Fraction(0)] * (len(p.poly) + 1)
    # T(x^k/k!) = sum_{l <= k+1} x^l / l!
    for k, a in enumerate(p.poly):
        ak = a * math.factorial(k)
        for l in range(k + 2):
            out[l] += ak / math.factorial(l)
    exp_out = [Fraction(0)] * len(p.exp_poly)
    if p.exp_poly:
        a = p.rate
        if not (0 < a < 1):
            raise UnsupportedFormError("exponential rate must lie strictly between 0 and 1")
        for j, b in enumerate(p.exp_poly):
            if b == 0:
                continue
            fj = math.factorial(j)
            # int_0^x y^j e^{ay} = e^{ax} P(x) - P(0); e^x int_x^inf y^j e^{(a-1)y} = e^{ax} Q(x)
            for i in range(j + 1):
                c = Fraction(fj, math.factorial(j - i))
                exp_out[j - i] += b * c * ((-1) ** i / a ** (i + 1) + 1 / (1 - a) ** (i + 1))
            out[0] -= b * (-1) ** j * fj / a ** (j + 1)
    return ExpPolynomial(out, exp_out, p.rate)


def apply_T_numeric(f, x, tail=60.0):
    """Quadrature of T f at x with the improper integral truncated at x + tail.

    Returns (value, remainder_estimate) where the remainder estimate is
    e^{-tail} * |f(x + tail)| * (1 + tail), adequate for polynomial f.
    """
    head, _ = integrate.quad(f, 0.0, x, epsabs=0.0, epsrel=1e-13, limit=200)
    rest, _ = integrate.quad(lambda y: math.exp(x - y) * f(y), x, x + tail, epsabs=0.0, epsrel=1e-13, limit=400)
    remainder = math.exp(-tail) * abs(f(x + tail)) * (1 + tail)
    return head + rest, remainder


def eigen_residual():
    """Largest relative coefficient mismatch between T(g) and 4g for the eigenfunction."""
    g = eigenfunction()
    tg = apply_T(g)
    diff = tg - g.scale(4)
    ref = max(abs(c) for c in g.scale(4).exp_poly)
    worst = max([abs(c) for c in diff.poly + diff.exp_poly] + [Fraction(0)])
    return float(worst / ref)


# ---------------------------------------------------------------------------
# densities and expected counts

def log_f_n(n, R, u):
    """log f_n(R) = n log u + log g_{n-1}(R)."""
    if n < 1:
        raise ValueError("n must be at least 1")
    if u <= 0:
        return -math.inf
    k = np.arange(n)
    terms = _log_catalan_row(n - 1) - np.array([math.lgamma(i + 1) for i in k])
    if R > 0:
        terms = terms + k * math.log(R)
    else:
        terms = terms[:1]
    return n * math.log(u) + float(logsumexp(terms))


def log_F_n(n, R, u):
    """log F_n(R), F_n(R) = u^n sum_k c_{k,n-1} R^{k+1}/(k+1)!."""
    if n < 1:
        raise ValueError("n must be at least 1")
    if u <= 0 or R <= 0:
        return -math.inf
    k = np.arange(n)
    terms = _log_catalan_row(n - 1) - np.array([math.lgamma(i + 2) for i in k]) + (k + 1) * math.log(R)
    return n * math.log(u) + float(logsumexp(terms))


def f_n(n, R, u):
    """Expected density of generation-n particles at type R."""
    if R < 0 or u < 0:
        raise ValueError("R and u must be nonnegative")
    direct = _direct(n, u, lambda k: catalan(k, n - 1) * R ** k / math.factorial(k))
    return direct if direct is not None else math.exp(log_f_n(n, R, u))


def F_n(n, R, u):
    """Expected number of generation-n particles with type in [0, R]."""
    if R < 0 or u < 0:
        raise ValueError("R and u must be nonnegative")
    direct = _direct(n, u, lambda k: catalan(k, n - 1) * R ** (k + 1) / math.factorial(k + 1))
    return direct if direct is not None else math.exp(log_F_n(n, R, u))


def _direct(n, u, term):
    # plain float summation while nothing over- or underflows
    if n < 1:
        raise ValueError("n must be at least 1")
    if n > 60 or u == 0:
        return None if u else 0.0
    scale = float(u) ** n
    if scale < 1e-280:
        return None
    try:
        val = scale * math.fsum(term(k) for k in range(n))
    except OverflowError:
        return None
    return val if math.isfinite(val) and val > 0 else None


def F_n_exact(n, R, u):
    """F_n with rational inputs, computed exactly."""
    R, u = Fraction(R), Fraction(u)
    return u ** n * sum((Fraction(catalan(k, n - 1), math.factorial(k + 1)) * R ** (k + 1) for k in range(n)),
                        Fraction(0))


def subcritical_bound(x, u):
    """u e^{4ux} / (1 - 4u), a bound on sum_n f_n(x) for u < 1/4."""
    if u >= QUARTER:
        raise ValueError("the bound needs u < 1/4")
    if u < 0 or x < 0:
        raise ValueError("u and x must be nonnegative")
    return u * math.exp(4 * u * x) / (1 - 4 * u)


def subcritical_sum_bound(R, u):
    """e^{4uR} / (4 (1 - 4u)), a bound on sum_n F_n(R) for u < 1/4."""
    if u >= QUARTER:
        raise ValueError("the bound needs u < 1/4")
    return math.exp(4 * u * R) / (4 * (1 - 4 * u))


def log_supercritical_lower(n, R, u):
    return (n + 1) * math.log(u) + n * math.log(4.0) + math.log(R) - math.log(2.0) - 2 * math.log(n + 1)


def supercritical_lower(n, R, u):
    """u^{n+1} 4^n R / (2 (n+1)^2), a lower bound on F_{n+1}(R)."""
    if n < 0 or R <= 0 or u <= 0:
        raise ValueError("need n >= 0, R > 0, u > 0")
    return math.exp(log_supercritical_lower(n, R, u))


def regime(u):
    if u < QUARTER:
        return "subcritical"
    if u > QUARTER:
        return "supercritical"
    return "critical (no claim)"


TABLE_COLUMNS = ["n", "R", "u", "f_n", "F_n", "subcritical_bound", "supercritical_lower"]


def branching_table(u, R, n_max):
    """Rows of (n, R, u, f_n(R), F_n(R), subcritical bound at R, lower bound on F_n(R))."""
    rows = []
    for n in range(1, n_max + 1):
        rows.append({
            "n": n, "R": R, "u": u,
            "f_n": f_n(n, R, u),
            "F_n": F_n(n, R, u),
            "subcritical_bound": subcritical_bound(R, u) if u < QUARTER else float("nan"),
            "supercritical_lower": supercritical_lower(n - 1, R, u) if (R > 0 and u > 0) else 0.0,
        })
    return rows


def table_csv(rows):
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=TABLE_COLUMNS)
    w.writeheader()
    for r in rows:
        w.writerow({k: (f"{v:.10g}" if isinstance(v, float) else v) for k, v in r.items()})
    return buf.getvalue()
