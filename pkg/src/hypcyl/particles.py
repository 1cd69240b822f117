"""Simulators for the branching particle process on [0, inf), generic offspring
kernels with bin-wise domination constants, the closest-point kernel tau_x
of the cylinder model, and the independent cylinder exploration process eta.

A parent of type x has offspring forming a Poisson process with intensity
u * exp(-(x - y)^+) dy on y >= 0: rate u e^{y-x} below x and rate u above.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import asdict, dataclass, field

import numpy as np

from .hypgeo import line_line_cosh, line_line_cosh_matrix, line_rho, origin, polar_point
from .linemeasure import MeasureEstimate, measure_hitting_ball, measure_shell, poisson_count, sample_lines
from .mc import Estimate, as_generator, as_stream, run_parallel, seed_record


class PopulationCapError(RuntimeError):
    """Population exceeded its cap, typically a supercritical blow-up."""


class LineCapError(RuntimeError):
    pass


@dataclass(frozen=True)
class ParticleGeneration:
    """One generation: sorted types plus the truncation loss estimate.

    ``truncated_mass`` is the expected number of particles dropped above
    the cap that would re-enter [0, R] in one step (u^2 e^{R-cap} per parent).
    """

    types: np.ndarray
    generation_index: int
    truncated_mass: float = 0.0

    def __post_init__(self):
        t = np.sort(np.asarray(self.types, dtype=float))
        if len(t) and t[0] < 0:
            raise ValueError("types must be nonnegative")
        object.__setattr__(self, "types", t)

    def count(self, a, b):
        """X_{[a,b]}: number of particles with type in [a, b]."""
        return int(np.searchsorted(self.types, b, side="right") - np.searchsorted(self.types, a, side="left"))

    def __len__(self):
        return len(self.types)


# ---------------------------------------------------------------------------
# kernels

@dataclass(frozen=True, eq=False)
class OffspringKernel:
    """A family of offspring intensities nu_x on [0, inf).

    ``bin_mass(x, lo, hi)`` is nu_x((lo, hi]); ``sampler(rng, xs, cap)`` draws
    offspring of every parent in ``xs`` (types <= cap) and returns
    (parent_index, types). ``count_sampler(rng, xs, R)`` draws only the
    number of offspring in [0, R] per parent.
    """

    bin_mass: object
    sampler: object
    count_sampler: object
    label: str
    zero_atom: float = 0.0
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.zero_atom != 0:
            raise ValueError("offspring kernels must not charge the point 0")

    def bin_intensity(self, x, l):
        return self.bin_mass(x, l, l + 1)


def mu_bin_mass(x, lo, hi, u):
    """u * int_lo^hi exp(-(x - y)^+) dy, closed form (lo >= 0)."""
    below = 0.0
    if lo < x:
        below = u * (math.exp(min(x, hi) - x) - math.exp(lo - x))
    above = u * max(hi - max(lo, x), 0.0)
    return below + above


def _mu_sample(rng, xs, u, cap):
    xs = np.asarray(xs, dtype=float)
    if np.any(xs > cap):
        raise ValueError("cap must be at least every parent type")
    nb = rng.poisson(u * -np.expm1(-xs))
    nf = rng.poisson(u * (cap - xs))
    pb = np.repeat(np.arange(len(xs)), nb)
    pf = np.repeat(np.arange(len(xs)), nf)
    xb = xs[pb]
    # inverse CDF of the density proportional to e^{y - x} on [0, x)
    yb = xb + np.log(np.exp(-xb) - rng.random(len(pb)) * np.expm1(-xb))
    yf = xs[pf] + rng.random(len(pf)) * (cap - xs[pf])
    return np.concatenate([pb, pf]), np.maximum(np.concatenate([yb, yf]), 0.0)


def _mu_count(rng, xs, u, R):
    xs = np.asarray(xs, dtype=float)
    lo = np.minimum(xs, R)
    lam = u * (np.exp(lo - xs) - np.exp(-xs)) + u * np.maximum(R - xs, 0.0)
    return rng.poisson(lam)


def sample_offspring_mu(rng, x, u, cap):
    """Offspring types of one parent of type x, all <= cap, sorted."""
    if cap < x:
        raise ValueError("cap must be at least x")
    if x < 0:
        raise ValueError("x must be nonnegative")
    _, ys = _mu_sample(as_generator(rng), np.array([float(x)]), u, cap)
    return np.sort(ys)


def mu_kernel(u):
    return OffspringKernel(
        bin_mass=lambda x, lo, hi: mu_bin_mass(x, lo, hi, u),
        sampler=lambda rng, xs, cap: _mu_sample(rng, xs, u, cap),
        count_sampler=lambda rng, xs, R: _mu_count(rng, xs, u, R),
        label=f"mu(u={u:g})",
        meta={"u": u},
    )


def scaled_kernel(nu, c):
    """The kernel c * nu, by superposing floor(c) copies and thinning the rest."""
    if c < 0:
        raise ValueError("scale must be nonnegative")
    whole, frac = int(math.floor(c)), c - math.floor(c)

    def sampler(rng, xs, cap):
        idx, ys = [], []
        for _ in range(whole):
            i, y = nu.sampler(rng, xs, cap)
            idx.append(i)
            ys.append(y)
        if frac > 0:
            i, y = nu.sampler(rng, xs, cap)
            keep = rng.random(len(i)) < frac
            idx.append(i[keep])
            ys.append(y[keep])
        if not idx:
            return np.zeros(0, dtype=np.int64), np.zeros(0)
        return np.concatenate(idx), np.concatenate(ys)

    def count_sampler(rng, xs, R):
        total = np.zeros(len(xs), dtype=np.int64)
        for _ in range(whole):
            total += nu.count_sampler(rng, xs, R)
        if frac > 0:
            total += rng.binomial(nu.count_sampler(rng, xs, R), frac)
        return total

    return OffspringKernel(
        bin_mass=lambda x, lo, hi: c * nu.bin_mass(x, lo, hi),
        sampler=sampler,
        count_sampler=count_sampler,
        label=f"{c:g}*{nu.label}",
        zero_atom=c * nu.zero_atom,
        meta={**nu.meta, "scale": c},
    )


# ---------------------------------------------------------------------------
# branching simulation

def _sort_by_rep(rep, types):
    order = np.lexsort((types, rep))
    return rep[order], types[order]


def _branch(rng, kernel, reps, n_gens, R, cap, pop_cap, keep_types):
    """Core batched simulation.

    Returns counts (reps, n_gens+1) of types in [0, R], mean population per
    generation, and (if keep_types) the per-generation (rep, types) arrays.
    The last generation is only counted, never materialized.
    """
    rep = np.arange(reps)
    types = np.zeros(reps)
    counts = np.zeros((reps, n_gens + 1), dtype=np.int64)
    counts[:, 0] = 1 if R >= 0 else 0
    pops = [1.0]
    kept = [(rep, types)]
    for g in range(1, n_gens + 1):
        if g == n_gens and not keep_types:
            c = kernel.count_sampler(rng, types, R)
            counts[:, g] = np.bincount(rep, weights=c, minlength=reps).astype(np.int64)
            pops.append(float("nan"))
            break
        parent, child = kernel.sampler(rng, types, cap)
        rep = rep[parent]
        types = child
        if len(types) > pop_cap:
            raise PopulationCapError(f"generation {g} has {len(types)} particles (cap {pop_cap})")
        counts[:, g] = np.bincount(rep[types <= R], minlength=reps)
        pops.append(len(types) / reps)
        if keep_types:
            kept.append(_sort_by_rep(rep, types))
    return counts, pops, kept


def _truncation_estimate(u, R, cap, pops, n):
    # first-order: parents of generations < n-1 lose u^2 e^{R-cap} returns each
    pre = [p for p in pops[: max(n - 1, 0)] if np.isfinite(p)]
    return u * u * math.exp(R - cap) * sum(pre)


def simulate_kernel(rng, nu, n_gens, R, cap, pop_cap=10**6):
    """One realization of generations 0..n_gens under kernel nu."""
    if cap < R:
        raise ValueError("cap must be at least R")
    g = as_generator(rng)
    u = nu.meta.get("u", 0.0) * nu.meta.get("scale", 1.0)
    _, _, kept = _branch(g, nu, 1, n_gens, R, cap, pop_cap, keep_types=True)
    return [ParticleGeneration(t, i, u * u * math.exp(R - cap) * len(kept[i - 1][1]) if i else 0.0)
            for i, (_, t) in enumerate(kept)]


def simulate_zeta(rng, u, n_gens, R, cap=None, pop_cap=10**6):
    """One realization of the particle process started from a single particle at 0."""
    cap = R + 40.0 if cap is None else cap
    return simulate_kernel(rng, mu_kernel(u), n_gens, R, cap, pop_cap)


@dataclass(frozen=True)
class GenerationCounts:
    """Replicated counts X^n_{[0,R]} for n = 0..n_gens."""

    counts: np.ndarray
    R: float
    cap: float
    truncation_bias: tuple
    seed: object = None

    def estimate(self, n):
        return Estimate.from_values(self.counts[:, n], None if self.seed is None else self.seed[0])


def kernel_counts(rng, nu, n_gens, R, reps, cap=None, pop_cap=5 * 10**7, batch=10_000, workers=1):
    """Replicated generation counts under kernel nu; batch b uses sub-stream b."""
    cap = R + 40.0 if cap is None else cap
    if cap < R:
        raise ValueError("cap must be at least R")
    root = as_stream(rng)
    sizes = [min(batch, reps - s) for s in range(0, reps, batch)]

    def one(b):
        c, pops, _ = _branch(root.child(b).generator, nu, sizes[b], n_gens, R, cap, pop_cap, keep_types=False)
        return c, pops

    out = run_parallel(one, range(len(sizes)), workers)
    counts = np.concatenate([c for c, _ in out])
    pops = np.average([p for _, p in out], axis=0, weights=sizes)
    u = nu.meta.get("u", 0.0) * nu.meta.get("scale", 1.0)
    bias = tuple(_truncation_estimate(u, R, cap, list(pops), n) for n in range(n_gens + 1))
    return GenerationCounts(counts, R, cap, bias, seed_record(root))


def zeta_counts(rng, u, n_gens, R, reps, cap=None, **kw):
    return kernel_counts(rng, mu_kernel(u), n_gens, R, reps, cap, **kw)


# ---------------------------------------------------------------------------
# domination constants

def cell_grid(l, width=1.0, points=16):
    """Closed cell [l w, (l+1) w] sampled at `points` equispaced values."""
    return np.linspace(l * width, (l + 1) * width, points)


def kernel_domination_constant(nu, K, L, width=1.0, points=16, u=None):
    """Largest ratio over cells of sup_x nu_x(bin k) / inf_x mu_x(bin k).

    Cells and bins have the given width: x ranges over [l w, (l+1) w] for
    l = 0..L, bins are (k w, (k+1) w] for k = 0..K. mu uses the intensity of
    nu's metadata unless ``u`` is given.
    """
    u = nu.meta.get("u") if u is None else u
    if u is None or u <= 0:
        raise ValueError("need a positive intensity for the reference kernel")
    best = 0.0
    where = None
    for l in range(L + 1):
        xs = cell_grid(l, width, points)
        for k in range(K + 1):
            lo, hi = k * width, (k + 1) * width
            num = max(nu.bin_mass(x, lo, hi) for x in xs)
            den = min(mu_bin_mass(x, lo, hi, u) for x in xs)
            if not den > 0:
                raise ZeroDivisionError(f"reference kernel vanishes on cell {l}, bin {k}")
            r = num / den
            if not math.isfinite(r):
                raise ValueError(f"undefined ratio on cell {l}, bin {k}")
            if r > best:
                best, where = r, (k, l)
    return best if where is None else _Ratio(best, where)


class _Ratio(float):
    """A float that also remembers the (bin, cell) attaining it."""

    def __new__(cls, value, where):
        obj = super().__new__(cls, value)
        obj.where = where
        return obj


# ---------------------------------------------------------------------------
# closest-point kernel tau_x

def reference_line(d, x):
    """The line with closest point x e_1 and tangent e_2."""
    P = polar_point(float(x), np.eye(d)[0])
    V = np.zeros(d + 1)
    V[2] = 1.0
    return P, V


def estimate_tau_bins(rng, d, u, x, l_max, n, s=1.0, window_r=None):
    """tau_x((l, l+1]) for l = 0..l_max.

    tau_x(A) is u times the measure of lines L' with rho(L') in A whose
    cylinder meets that of the reference line at distance x. Each shell is
    sampled separately (n // (l_max+1) lines) and weighted by its measure.
    """
    window_r = l_max + 2 if window_r is None else window_r
    if window_r < l_max + 1:
        raise ValueError("window must contain the outermost shell")
    if x < 0:
        raise ValueError("x must be nonnegative")
    g = as_generator(rng)
    seed = seed_record(rng)
    m = max(n // (l_max + 1), 1)
    P0, V0 = reference_line(d, x)
    thr = math.cosh(2 * s) * (1 + 1e-12)
    out = []
    for l in range(l_max + 1):
        P, V = sample_lines(g, d, l + 1, m, r_in=l)
        hits = int(np.count_nonzero(line_line_cosh(P, V, P0, V0) <= thr))
        w = u * measure_shell(d, l, l + 1)
        p = hits / m
        out.append((l, MeasureEstimate(w * p, w * math.sqrt(p * (1 - p) / m), m, seed, hits)))
    return out


def tau_table(rng, d, u, xs, K, n_per_bin, s=1.0):
    """tau_x((k, k+1]) for every x in xs and k = 0..K, with common random lines."""
    g = as_generator(rng)
    xs = np.asarray(xs, dtype=float)
    refs = [reference_line(d, x) for x in xs]
    P0 = np.array([r[0] for r in refs])
    V0 = np.array([r[1] for r in refs])
    thr = math.cosh(2 * s) * (1 + 1e-12)
    table = np.zeros((len(xs), K + 1))
    se = np.zeros_like(table)
    for k in range(K + 1):
        hits = np.zeros(len(xs))
        for start in range(0, n_per_bin, 20_000):
            m = min(20_000, n_per_bin - start)
            P, V = sample_lines(g, d, k + 1, m, r_in=k)
            hits += (line_line_cosh_matrix(P, V, P0, V0) <= thr).sum(axis=0)
        p = hits / n_per_bin
        w = u * measure_shell(d, k, k + 1)
        table[:, k] = w * p
        se[:, k] = w * np.sqrt(p * (1 - p) / n_per_bin)
    return table, se


def tau_kernel(rng, d, u, K, L, n_per_bin=20_000, points=16, s=1.0):
    """Offspring kernel tau_x, tabulated on the cell grids of cells 0..L and bins 0..K.

    Offspring of a parent at x use the bins of the nearest grid point and are
    spread uniformly within each unit bin; types beyond K+1 are not produced.
    """
    xs = np.unique(np.concatenate([cell_grid(l, 1.0, points) for l in range(L + 1)]))
    table, se = tau_table(rng, d, u, xs, K, n_per_bin, s)

    def nearest(x):
        return int(np.argmin(np.abs(xs - x)))

    def bin_mass(x, lo, hi):
        k = int(round(lo))
        if abs(lo - k) > 1e-12 or abs(hi - lo - 1.0) > 1e-12 or not 0 <= k <= K:
            raise ValueError("tabulated tau supports unit bins 0..K only")
        i = nearest(x)
        if abs(xs[i] - x) > 1e-9:
            raise ValueError(f"x={x} is not on the tabulation grid")
        return float(table[i, k])

    def sampler(rng, parents, cap):
        idx = np.array([nearest(x) for x in parents], dtype=np.int64)
        lam = table[idx]
        n = rng.poisson(lam)
        par = np.repeat(np.repeat(np.arange(len(parents)), K + 1), n.reshape(-1))
        k = np.repeat(np.tile(np.arange(K + 1), len(parents)), n.reshape(-1))
        y = k + rng.random(len(k))
        keep = y <= cap
        return par[keep], y[keep]

    def count_sampler(rng, parents, R):
        par, y = sampler(rng, parents, max(R, K + 1))
        return np.bincount(par[y <= R], minlength=len(parents))

    return OffspringKernel(bin_mass, sampler, count_sampler, f"tau(d={d}, u={u:g})",
                           meta={"u": u, "xs": xs, "table": table, "se": se, "K": K, "L": L})


# ---------------------------------------------------------------------------
# independent cylinder process eta

@dataclass(frozen=True, eq=False)
class EtaRealization:
    """Generations of eta; generation 0 is the root line through o along e_1."""

    d: int
    u: float
    window_r: float
    s: float
    lines: list          # per generation: (P, V) arrays
    parents: list        # per generation: parent index into the previous generation
    seed: object = None

    @property
    def n_gens(self):
        return len(self.lines) - 1

    def rho(self, n):
        P, V = self.lines[n]
        return line_rho(P, V)

    def bin_counts(self, n):
        """Counts of generation-n lines by unit rho-bin (0,1], (1,2], ..."""
        r = self.rho(n)
        nb = int(math.ceil(self.window_r))
        return np.bincount(np.minimum(np.floor(r).astype(int), nb - 1), minlength=nb)

    def count_within(self, n, R):
        """Generation-n lines with rho <= R (the H_n statistic)."""
        return int(np.count_nonzero(self.rho(n) <= R))

    def cumulative_within(self, R):
        return sum(self.count_within(n, R) for n in range(len(self.lines)))


def root_line(d):
    P = origin(d)
    V = np.zeros(d + 1)
    V[1] = 1.0
    return P[None], V[None]


def simulate_eta(rng, u, d, n_gens, window_r, line_cap=10**6, s=1.0):
    """Generation-wise exploration where each parent gets a fresh Poisson line process.

    Offspring of a parent are the lines of an independent intensity-u process
    in B(o, window_r) whose cylinders meet the parent's cylinder.
    """
    g = as_generator(rng)
    thr = math.cosh(2 * s) * (1 + 1e-12)
    P, V = root_line(d)
    lines = [(P, V)]
    parents = [np.zeros(1, dtype=np.int64) - 1]
    total = 1
    for _ in range(n_gens):
        Pp, Vp = lines[-1]
        newP, newV, par = [], [], []
        for i in range(len(Pp)):
            k = poisson_count(g, u, d, window_r)
            Pn, Vn = sample_lines(g, d, window_r, k)
            keep = line_line_cosh(Pn, Vn, Pp[i], Vp[i]) <= thr
            newP.append(Pn[keep])
            newV.append(Vn[keep])
            par.append(np.full(int(keep.sum()), i, dtype=np.int64))
        Pg = np.concatenate(newP) if newP else np.zeros((0, d + 1))
        Vg = np.concatenate(newV) if newV else np.zeros((0, d + 1))
        pg = np.concatenate(par) if par else np.zeros(0, dtype=np.int64)
        order = np.argsort(line_rho(Pg, Vg), kind="stable")
        lines.append((Pg[order], Vg[order]))
        parents.append(pg[order])
        total += len(Pg)
        if total > line_cap:
            raise LineCapError(f"eta exceeded {line_cap} lines")
        if len(Pg) == 0:
            break
    return EtaRealization(d, u, window_r, s, lines, parents, seed_record(rng))


def eta_generation_counts(rng, u, d, n_gens, window_r, R_values, reps, s=1.0, workers=1):
    """Counts (reps, n_gens+1, len(R_values)) of generation-n lines with rho <= R."""
    root = as_stream(rng)
    R_values = list(R_values)

    def one(i):
        eta = simulate_eta(root.child(i), u, d, n_gens, window_r, s=s)
        out = np.zeros((n_gens + 1, len(R_values)))
        for n in range(len(eta.lines)):
            r = eta.rho(n)
            out[n] = [np.count_nonzero(r <= R) for R in R_values]
        return out

    return np.array(run_parallel(one, range(reps), workers))


def _ols_slope(x, y):
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    xc = x - x.mean()
    return float(xc @ (y - y.mean()) / (xc @ xc))


@dataclass(frozen=True)
class GrowthReport:
    R_grid: tuple
    eta_mean: tuple
    eta_rate: float
    eta_rate_ci95: tuple
    ambient_mean: tuple
    ambient_rate: float
    ambient_rate_ci95: tuple
    ambient_rate_exact: float
    target_rate: float
    disconnected: bool
    reps: int

    def to_dict(self):
        return asdict(self)


def growth_rate_comparison(rng, d, u, R_grid, gens, reps=500, margin=3.0, n_boot=2000, rate_margin=0.0,
                           c_hat=None, s=1.0, workers=1):
    """Compare the growth in R of cumulative eta counts within B(o, R) with the
    ambient growth of the number of lines meeting B(o, R).

    Rates are OLS slopes of log mean count against R, with bootstrap 95%
    intervals over replications. Declares disconnection when the upper end
    of the eta interval lies below (d-1) - rate_margin.
    """
    R_grid = sorted(float(r) for r in R_grid)
    if len(R_grid) < 3 or R_grid[-1] - R_grid[0] < 2:
        raise ValueError("need at least three radii spanning a range of 2 or more")
    if c_hat is not None and u * c_hat >= 0.25:
        warnings.warn("u * c_hat >= 1/4: outside the regime where eta is controlled", stacklevel=2)
    root = as_stream(rng)
    window = R_grid[-1] + margin
    eta = eta_generation_counts(root.child(0), u, d, gens, window, R_grid, reps, s, workers).sum(axis=1)

    amb_root = root.child(1)

    def ambient(i):
        g = amb_root.child(i).generator
        P, V = sample_lines(g, d, R_grid[-1], poisson_count(g, u, d, R_grid[-1]))
        r = line_rho(P, V)
        return [np.count_nonzero(r <= R) for R in R_grid]

    amb = np.array(run_parallel(ambient, range(reps), workers), dtype=float)
    boot = np.random.Generator(np.random.Philox(key=np.random.SeedSequence(root.master_seed, spawn_key=root.stream_id + (2,)).generate_state(2, np.uint64)))

    def rate_and_ci(data):
        m = data.mean(axis=0)
        if np.any(m <= 0):
            return float("nan"), (float("nan"), float("nan"))
        rate = _ols_slope(R_grid, np.log(m))
        bs = []
        for _ in range(n_boot):
            mb = data[boot.integers(0, len(data), len(data))].mean(axis=0)
            if np.all(mb > 0):
                bs.append(_ols_slope(R_grid, np.log(mb)))
        lo, hi = np.percentile(bs, [2.5, 97.5])
        return rate, (float(lo), float(hi))

    eta_rate, eta_ci = rate_and_ci(eta)
    amb_rate, amb_ci = rate_and_ci(amb)
    exact = _ols_slope(R_grid, [math.log(measure_hitting_ball(d, R)) for R in R_grid])
    target = float(d - 1)
    return GrowthReport(tuple(R_grid), tuple(eta.mean(axis=0)), eta_rate, eta_ci, tuple(amb.mean(axis=0)),
                        amb_rate, amb_ci, exact, target, bool(eta_ci[1] < target - rate_margin), reps)
