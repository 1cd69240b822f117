"""Acceptance checks: each function runs one end-to-end check and returns a
:class:`CheckResult`. Shared by ``tests/test_acceptance.py`` and the
``acceptance`` CLI subcommand.

``scale`` shrinks Monte Carlo sizes (1.0 = full size); ``workers`` sets the
thread count for replication.
"""
from __future__ import annotations

import math
import time
from dataclasses import dataclass, field

import numpy as np
from scipy import optimize

from . import branching as br
from . import hypgeo as hg
from . import linemeasure as lm
from .cylproc import estimate_connect_prob_msteps
from .mc import RngStream, run_parallel
from .particles import (
    eta_generation_counts,
    estimate_tau_bins,
    growth_rate_comparison,
    kernel_domination_constant,
    tau_kernel,
    zeta_counts,
)

MASTER_SEED = 20240611


@dataclass
class CheckResult:
    number: int
    name: str
    passed: bool
    seconds: float
    limit: float
    detail: dict = field(default_factory=dict)

    def line(self):
        status = "PASS" if self.passed else "FAIL"
        return f"[{status}] {self.number:2d} {self.name} ({self.seconds:.1f}s / limit {self.limit:g}s)"


def _timed(number, name, limit):
    def wrap(fn):
        def run(*args, **kwargs):
            t0 = time.perf_counter()
            ok, detail = fn(*args, **kwargs)
            dt = time.perf_counter() - t0
            scale = kwargs.get("scale", 1.0)
            within = dt <= limit or scale < 1.0
            detail["runtime_ok"] = within
            return CheckResult(number, name, bool(ok and within), dt, limit, detail)

        run.number = number
        run.check_name = name
        return run

    return wrap


def _n(base, scale, minimum=100):
    return max(int(base * scale), minimum)


# ---------------------------------------------------------------------------

@_timed(1, "catalan_triangle", 1.0)
def check_catalan(scale=1.0, workers=1, seed=MASTER_SEED):
    br.catalan_rows.cache_clear()
    rows = br.catalan_rows(50)
    mismatches = [(k, n) for n in range(51) for k in range(n + 1) if rows[n][k] != br.catalan(k, n)]
    over = [(k, n) for n in range(51) for k in range(n + 1) if rows[n][k] > 4 ** n]
    return not mismatches and not over, {"mismatches": mismatches[:5], "above_4^n": over[:5]}


@_timed(2, "operator_iteration", 1.0)
def check_operator(scale=1.0, workers=1, seed=MASTER_SEED):
    g = br.g_poly(0)
    bad = []
    for n in range(20):
        g = br.apply_T(g)
        if g != br.g_poly(n + 1):
            bad.append(n)
    resid = br.eigen_residual()
    return not bad and resid <= 1e-10, {"failed_n": bad, "eigen_residual": resid}


@_timed(3, "quadrature_consistency", 10.0)
def check_quadrature(scale=1.0, workers=1, seed=MASTER_SEED):
    g5, g6 = br.g_poly(5), br.g_poly(6)
    rel = {}
    for x in (0.5, 2.0, 10.0):
        val, rem = br.apply_T_numeric(g5, x, tail=60.0)
        rel[x] = abs(val - g6(x)) / g6(x)
    return max(rel.values()) <= 1e-8, {"relative_error": rel}


@_timed(4, "branching_mc_vs_exact", 300.0)
def check_branching_mc(scale=1.0, workers=1, seed=MASTER_SEED):
    reps = _n(10**5, scale, 1000)
    root = RngStream(seed, 4)
    rows = []
    ok = True
    for i, (u, R) in enumerate([(0.05, 1.0), (0.05, 2.0), (0.1, 1.0), (0.1, 2.0)]):
        gc = zeta_counts(root.child(i), u, 4, R, reps, workers=workers)
        for n in range(1, 5):
            est = gc.estimate(n)
            exact = br.F_n(n, R, u)
            z = (est.mean - exact) / est.stderr if est.stderr > 0 else math.inf
            good = abs(z) <= 3 and gc.truncation_bias[n] < 1e-10
            ok &= good
            rows.append({"u": u, "R": R, "n": n, "mean": est.mean, "stderr": est.stderr, "exact": exact,
                         "z": z, "bias_estimate": gc.truncation_bias[n]})
    return ok, {"reps": reps, "rows": rows}


@_timed(5, "phase_dichotomy", 10.0)
def check_dichotomy(scale=1.0, workers=1, seed=MASTER_SEED):
    u = 0.2
    ratios = []
    for x in range(11):
        partial = math.fsum(br.f_n(n, x, u) for n in range(1, 201))
        ratios.append(partial / br.subcritical_bound(x, u))
    sub_ok = max(ratios) <= 1.0
    u = 0.3
    logs = [br.log_F_n(n, 1.0, u) for n in range(1, 201)]
    first = next((n for n, lf in enumerate(logs, start=1) if lf > math.log(1e6)), None)
    lower_ok = all(br.log_F_n(n + 1, 1.0, u) >= br.log_supercritical_lower(n, 1.0, u) for n in range(61))
    return sub_ok and first is not None and lower_ok, {
        "max_partial_sum_over_bound": max(ratios), "first_n_F_above_1e6": first, "lower_bound_holds": lower_ok}


@_timed(6, "line_measure_invariance", 120.0)
def check_line_measure(scale=1.0, workers=1, seed=MASTER_SEED):
    n = _n(10**5, scale, 2000)
    root = RngStream(seed, 6)
    window = 4.0
    cases = [(d, t) for d in (2, 3) for t in (0, 1, 2, 3)]

    def one(i):
        d, t = cases[i]
        z = hg.polar_point(float(t), np.eye(d)[0])
        est = lm.estimate_ball_measure(root.child(i), z, 1.0, window, n)
        target = hg.sphere_area(d)
        return {"d": d, "t": t, "mean": est.mean, "stderr": est.stderr, "target": target,
                "ok": abs(est.mean - target) <= 3 * est.stderr}

    rows = run_parallel(one, range(len(cases)), workers)
    conc = []
    for j, d in enumerate((2, 3)):
        g = root.child(100 + j)
        P, V = lm.sample_lines(g, d, window, n)
        frac = float(np.mean(lm.Ball.at(hg.origin(d), 1.0).hits(P, V)))
        target = (math.sinh(1.0) / math.sinh(window)) ** (d - 1)
        se = math.sqrt(target * (1 - target) / n)
        conc.append({"d": d, "fraction": frac, "target": target, "stderr": se, "ok": abs(frac - target) <= 3 * se})
    ok = all(r["ok"] for r in rows) and all(c["ok"] for c in conc)
    return ok, {"n": n, "window": window, "offcenter": rows, "concentric": conc}


@_timed(7, "two_ball_decay", 600.0)
def check_two_ball_decay(scale=1.0, workers=1, seed=MASTER_SEED):
    n = _n(10**6, scale, 10**4)
    root = RngStream(seed, 7)
    Rs = (4.0, 6.0, 8.0)

    def one(i):
        y = hg.polar_point(Rs[i], np.eye(2)[0])
        est = lm.estimate_measure_intersection(root.child(i), lm.Ball.at(hg.origin(2), 2.0), lm.Ball.at(y, 2.0),
                                               2.0, n)
        return est

    ests = run_parallel(one, range(len(Rs)), workers)
    scaled = [e.mean * math.exp(R) for e, R in zip(ests, Rs)]
    ratio = max(scaled) / min(scaled) if min(scaled) > 0 else math.inf
    return ratio <= 2.0, {"n": n, "R": Rs, "mu_hat": [e.mean for e in ests], "stderr": [e.stderr for e in ests],
                          "mu_hat_times_e^R": scaled, "max_over_min": ratio}


def _weighted_slope(x, y, w):
    x, y, w = map(np.asarray, (x, y, w))
    xm = np.sum(w * x) / np.sum(w)
    ym = np.sum(w * y) / np.sum(w)
    sxx = np.sum(w * (x - xm) ** 2)
    slope = np.sum(w * (x - xm) * (y - ym)) / sxx
    return float(slope), float(math.sqrt(1.0 / sxx))


@_timed(8, "tau_shell_bound", 600.0)
def check_tau_shell(scale=1.0, workers=1, seed=MASTER_SEED):
    """tau_x bins times e^{(x-l)^+} stay bounded: no residual growth with x - l.

    A kernel without the exponential decay would give log-slope 1 against
    (x - l)^+; we require the slope's upper 95% bound below 1/2 and the
    scaled values to lie within a factor 10 of each other.
    """
    n = _n(10**6, scale, 8000)
    x = 6.0
    bins = estimate_tau_bins(RngStream(seed, 8), 2, 1.0, x, 7, n)
    q, se, dist = [], [], []
    for l, e in bins:
        f = math.exp(max(x - l, 0.0))
        q.append(e.mean * f)
        se.append(e.stderr * f)
        dist.append(max(x - l, 0.0))
    q, se = np.array(q), np.array(se)
    if np.any(q <= 0):
        return False, {"scaled": q.tolist(), "reason": "empty bin"}
    slope, slope_se = _weighted_slope(dist, np.log(q), (q / se) ** 2)
    spread = float(q.max() / q.min())
    ok = slope + 1.96 * slope_se < 0.5 and spread <= 10.0
    return ok, {"n": n, "scaled": q.tolist(), "stderr": se.tolist(), "fitted_constant": float(q.max()),
                "log_slope": slope, "log_slope_se": slope_se, "max_over_min": spread}


@_timed(9, "domination_chain", 600.0)
def check_domination(scale=1.0, workers=1, seed=MASTER_SEED):
    n_bin = _n(10**5, scale, 2000)
    root = RngStream(seed, 9)
    c_hats = {}
    for K in (6, 8, 10):
        # same stream for every grid: bins shared across grids see the same lines
        nu = tau_kernel(root.child(0), 2, 1.0, K, K, n_per_bin=n_bin)
        c = kernel_domination_constant(nu, K, K)
        c_hats[K] = float(c)
    base = c_hats[6]
    stable = all(abs(c / base - 1.0) <= 0.2 for c in c_hats.values()) and all(np.isfinite(list(c_hats.values())))
    u, R = 0.05, 3.0
    reps = _n(4000, scale, 200)
    counts = eta_generation_counts(root.child(1), u, 2, 1, R + 4.0, [R], reps, workers=workers)[:, 1, 0]
    h1 = float(counts.mean())
    h1_se = float(counts.std(ddof=1) / math.sqrt(reps))
    c_hat = c_hats[10]
    bound = c_hat * br.F_n(1, R, u)
    return stable and h1 <= bound + 3 * h1_se, {
        "c_hat": c_hats, "H1_hat": h1, "H1_stderr": h1_se, "c_hat_F1": bound, "reps": reps, "n_per_bin": n_bin}


@_timed(10, "growth_rate_comparison", 900.0)
def check_growth(scale=1.0, workers=1, seed=MASTER_SEED):
    reps = _n(2000, scale, 100)
    rep = growth_rate_comparison(RngStream(seed, 10), 2, 0.01, [2, 3, 4, 5, 6], gens=4, reps=reps, workers=workers)
    ok = rep.eta_rate_ci95[1] < 1.0 and abs(rep.ambient_rate - 1.0) <= 0.1
    return ok, rep.to_dict()


@_timed(11, "m_step_decay", 1200.0)
def check_m_step(scale=1.0, workers=1, seed=MASTER_SEED):
    """q(R) = log p(R) + R - 2 log R must not grow over R = 3, 4, 5.

    Bounded above is checked as: q(R) <= q(3) + 2 * se(q(R) - q(3)) for R = 4, 5.
    """
    reps = _n(10**4, scale, 500)
    root = RngStream(seed, 11)
    Rs = (3.0, 4.0, 5.0)
    ests = [estimate_connect_prob_msteps(root.child(i), 2, 0.05, R, 2, margin=2.0, reps=reps, workers=workers)
            for i, R in enumerate(Rs)]
    if any(e.mean <= 0 for e in ests):
        return False, {"p_hat": [e.mean for e in ests], "reason": "no connections observed"}
    q = [math.log(e.mean) + R - 2 * math.log(R) for e, R in zip(ests, Rs)]
    q_se = [e.stderr / e.mean for e in ests]
    ok = all(q[i] <= q[0] + 2 * math.hypot(q_se[i], q_se[0]) for i in (1, 2))
    return ok, {"reps": reps, "p_hat": [e.mean for e in ests], "stderr": [e.stderr for e in ests], "q": q,
                "q_se": q_se, "fitted_constant": max(q)}


@_timed(12, "geometry_kernel", 30.0)
def check_geometry(scale=1.0, workers=1, seed=MASTER_SEED):
    rng = RngStream(seed, 12).generator
    m = _n(2000, scale, 1000)
    out = {}
    # metric axioms
    for d in (2, 3, 5):
        X = [hg.polar_point(rng.uniform(0, 5, m), hg.uniform_directions(rng, m, d)) for _ in range(3)]
        dxy = hg.dist_coords(X[0], X[1])
        dyx = hg.dist_coords(X[1], X[0])
        dyz = hg.dist_coords(X[1], X[2])
        dxz = hg.dist_coords(X[0], X[2])
        out[f"symmetry_d{d}"] = bool(np.array_equal(dxy, dyx))
        out[f"triangle_d{d}"] = float(np.max(dxz - dxy - dyz))
        out[f"identity_d{d}"] = float(np.max(np.abs(hg.dist_coords(X[0], X[0]))))
    # ball-coordinate formula
    n_pairs = _n(10**4, scale, 1000)
    A = hg.polar_point(rng.uniform(0, 5, n_pairs), hg.uniform_directions(rng, n_pairs, 3))
    B = hg.polar_point(rng.uniform(0, 5, n_pairs), hg.uniform_directions(rng, n_pairs, 3))
    ya = A[:, 1:] / (1 + A[:, :1])
    yb = B[:, 1:] / (1 + B[:, :1])
    dh = hg.dist_coords(A, B)
    db = hg.ball_dist(ya, yb)
    mask = dh > 1e-3
    out["ball_formula_rel_err"] = float(np.max(np.abs(dh[mask] - db[mask]) / dh[mask]))
    # cosine rules
    worst = 0.0
    for _ in range(m):
        a, b = rng.uniform(0.05, 4.0, 2)
        gam = rng.uniform(0.05, math.pi - 0.05)
        tri = hg.Triangle.from_sas(a, b, gam)
        worst = max(worst, *tri.residuals())
    out["cosine_rule_residual"] = worst
    # point-to-line distance against direct minimization along the line
    worst_pl = 0.0
    ts = np.linspace(-25, 25, 5001)
    for _ in range(m):
        d = int(rng.integers(2, 5))
        M = hg.random_isometry(rng, d)
        L = hg.Geodesic.from_foot(rng.uniform(0, 3), np.eye(d)[0], np.eye(d)[1]).transformed(M)
        x = hg.Point(hg.polar_point(rng.uniform(0, 4), hg.uniform_directions(rng, 1, d)[0]))
        _, dcf = hg.dist_point_geodesic(x, L)
        pts = hg.geodesic_at(L.base, L.direction, ts)
        vals = hg.dist_coords(x.coords, pts)
        i = int(np.argmin(vals))
        res = optimize.minimize_scalar(
            lambda t: float(hg.dist_coords(x.coords, hg.geodesic_at(L.base, L.direction, t))),
            bracket=(ts[max(i - 1, 0)], ts[i], ts[min(i + 1, len(ts) - 1)]), method="golden",
            options={"xtol": 1e-12})
        worst_pl = max(worst_pl, abs(res.fun - dcf))
    out["point_line_abs_err"] = worst_pl
    ok = (all(out[f"symmetry_d{d}"] for d in (2, 3, 5))
          and max(out[f"triangle_d{d}"] for d in (2, 3, 5)) <= 1e-9
          and max(out[f"identity_d{d}"] for d in (2, 3, 5)) == 0.0
          and out["ball_formula_rel_err"] <= 1e-9
          and out["cosine_rule_residual"] <= 1e-8
          and out["point_line_abs_err"] <= 1e-8)
    out["cases"] = m
    return ok, out


@_timed(13, "determinism", 600.0)
def check_determinism(scale=0.05, workers=4, seed=MASTER_SEED):
    """Re-run every Monte Carlo check at reduced size with 1 and `workers` threads."""
    mismatched = []
    for chk in MC_CHECKS:
        a = chk(scale=scale, workers=1, seed=seed).detail
        b = chk(scale=scale, workers=workers, seed=seed).detail
        a.pop("runtime_ok", None)
        b.pop("runtime_ok", None)
        if repr(a) != repr(b):
            mismatched.append(chk.check_name)
    return not mismatched, {"scale": scale, "workers": [1, workers], "mismatched": mismatched,
                            "checked": [c.check_name for c in MC_CHECKS]}


MC_CHECKS = [check_branching_mc, check_line_measure, check_two_ball_decay, check_tau_shell, check_domination,
             check_growth, check_m_step]

ALL_CHECKS = [check_catalan, check_operator, check_quadrature, check_branching_mc, check_dichotomy,
              check_line_measure, check_two_ball_decay, check_tau_shell, check_domination, check_growth,
              check_m_step, check_geometry, check_determinism]


def run_all(scale=1.0, workers=1, seed=MASTER_SEED, only=None):
    results = []
    for chk in ALL_CHECKS:
        if only and chk.number not in only:
            continue
        if chk is check_determinism:
            results.append(chk(scale=min(scale, 0.05), workers=max(workers, 4), seed=seed))
        else:
            results.append(chk(scale=scale, workers=workers, seed=seed))
    return results
