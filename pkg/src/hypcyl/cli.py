"""Command-line front end.

Every command writes CSV (with ``#`` header lines) or JSON (``{config,
results}``). The header records the exact argument list, so
``hypcyl --replay FILE`` regenerates the file.

Exit codes: 0 success, 1 numeric failure, 2 usage error.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import math
import sys
import warnings

import numpy as np

from . import __version__
from . import acceptance as acc
from . import branching as br
from . import cylproc as cp
from . import hypgeo as hg
from . import linemeasure as lm
from . import particles as pt
from .mc import RngStream

ARGV_PREFIX = "# argv: "


class UsageError(Exception):
    pass


# ---------------------------------------------------------------------------
# parsing helpers

def _floats(text):
    try:
        return [float(t) for t in text.split(",") if t.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def _grid(text):
    """a,b,c or start:stop:step (inclusive stop)."""
    if ":" in text:
        try:
            a, b, h = (float(t) for t in text.split(":"))
        except ValueError:
            raise argparse.ArgumentTypeError(f"bad range {text!r}, want start:stop:step") from None
        if h <= 0 or b < a:
            raise argparse.ArgumentTypeError(f"bad range {text!r}")
        n = int(math.floor((b - a) / h + 1e-9)) + 1
        return [round(a + i * h, 12) for i in range(n)]
    return _floats(text)


def _pos_int(text):
    v = int(text)
    if v < 1:
        raise argparse.ArgumentTypeError("must be a positive integer")
    return v


def _nonneg(text):
    v = float(text)
    if not (v >= 0 and math.isfinite(v)):
        raise argparse.ArgumentTypeError("must be a finite nonnegative number")
    return v


def _pos(text):
    v = float(text)
    if not (v > 0 and math.isfinite(v)):
        raise argparse.ArgumentTypeError("must be a finite positive number")
    return v


def _dim(text):
    v = int(text)
    if v < 2:
        raise argparse.ArgumentTypeError("dimension must be at least 2")
    return v


# ---------------------------------------------------------------------------
# output

def _fmt(v):
    if isinstance(v, (bool, np.bool_)):
        return str(bool(v))
    if isinstance(v, (float, np.floating)):
        return f"{float(v):.12g}"
    if isinstance(v, (list, tuple)):
        return " ".join(_fmt(x) for x in v)
    return str(v)


def _plain(v):
    if isinstance(v, dict):
        return {str(k): _plain(x) for k, x in v.items()}
    if isinstance(v, (list, tuple, np.ndarray)):
        return [_plain(x) for x in v]
    if isinstance(v, np.bool_):
        return bool(v)
    if isinstance(v, np.integer):
        return int(v)
    if isinstance(v, np.floating):
        v = float(v)
    if isinstance(v, float) and not math.isfinite(v):
        return str(v)
    return v


def render(argv, config, rows, fmt):
    if fmt == "json":
        return json.dumps({"config": _plain({**config, "argv": list(argv)}), "results": _plain(rows)}, indent=2) + "\n"
    buf = io.StringIO()
    buf.write(f"# hypcyl {__version__} {config['command']}\n")
    buf.write(ARGV_PREFIX + json.dumps(list(argv)) + "\n")
    for k, v in config.items():
        if k != "command":
            buf.write(f"# {k}={_fmt(v)}\n")
    if rows:
        cols = list(rows[0].keys())
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(cols)
        for r in rows:
            w.writerow([_fmt(r.get(c, "")) for c in cols])
    return buf.getvalue()


def argv_from_file(path):
    """Recover the argument list embedded in an output file."""
    with open(path) as fh:
        text = fh.read()
    if text.lstrip().startswith("{"):
        return json.loads(text)["config"]["argv"]
    for line in text.splitlines():
        if line.startswith(ARGV_PREFIX):
            return json.loads(line[len(ARGV_PREFIX):])
    raise UsageError(f"{path}: no embedded argument list")


# ---------------------------------------------------------------------------
# commands; each returns (rows, ok)

def cmd_geo_dist(a):
    if a.ball and a.hyp:
        raise UsageError("give points either with --ball or with --hyp, not both")
    raw = a.ball or a.hyp
    if not raw or len(raw) != 2:
        raise UsageError("need exactly two points")
    if a.ball:
        pts = [hg.Point.from_ball(p) for p in raw]
    else:
        pts = [hg.Point(p) for p in raw]
    if len(pts[0].coords) != len(pts[1].coords):
        raise UsageError("points have different dimensions")
    return [{"distance": hg.dist(*pts)}], True


def cmd_line_measure(a):
    if a.r_in >= a.r:
        raise UsageError("--r-in must be smaller than --r")
    exact = lm.measure_shell(a.d, a.r_in, a.r) if a.r_in > 0 else lm.measure_hitting_ball(a.d, a.r)
    row = {"d": a.d, "r_in": a.r_in, "r": a.r, "measure": exact}
    if a.n:
        if a.r_in > 0:
            raise UsageError("--n estimates only the full ball measure")
        est = lm.estimate_ball_measure(RngStream(a.seed), hg.origin(a.d), a.r, a.r + 1.0, a.n)
        row.update(estimate=est.mean, stderr=est.stderr, n=a.n)
    return [row], True


def cmd_line_sample(a):
    P, V = lm.sample_lines(RngStream(a.seed), a.d, a.r, a.n)
    rows = []
    for rec in lm.line_records(P, V) if a.n else []:
        row = {"rho": rec["rho"]}
        row.update({f"foot_direction_{i}": x for i, x in enumerate(rec["foot_direction"])})
        row.update({f"tangent_{i}": x for i, x in enumerate(rec["tangent"])})
        rows.append(row)
    return rows, True


def cmd_connect_one(a):
    y = hg.polar_point(a.R, np.eye(a.d)[0])
    rows = []
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always", cp.IntensityWarning)
        p, est = cp.connect_prob_one_step(a.d, a.u, hg.origin(a.d), y, a.n, RngStream(a.seed), a.s)
    rows.append({"d": a.d, "u": a.u, "R": a.R, "prob": p, "mu_hat": est.mean, "mu_stderr": est.stderr,
                 "mu_hat_times_e^R": est.mean * math.exp((a.d - 1) * a.R), "small_u_regime": not caught})
    return rows, True


def cmd_connect_m(a):
    rows = []
    root = RngStream(a.seed)
    for i, R in enumerate(a.R):
        est = cp.estimate_connect_prob_msteps(root.child(i), a.d, a.u, R, a.m, a.margin, a.reps, a.s, a.workers)
        q = math.log(est.mean) + R - 2 * math.log(R) if est.mean > 0 and R > 0 else float("nan")
        rows.append({"d": a.d, "u": a.u, "R": R, "m": a.m, "prob": est.mean, "stderr": est.stderr,
                     "log_p_plus_R_minus_2logR": q})
    return rows, True


def cmd_phase_scan(a):
    return cp.phase_scan(RngStream(a.seed), a.d, a.window, a.u_grid, a.reps, a.s, a.workers), True


def cmd_branching_table(a):
    rows = br.branching_table(a.u, a.R, a.n_max)
    for r in rows:
        r["regime"] = br.regime(a.u)
    return rows, True


def cmd_branching_sim(a):
    gc = pt.zeta_counts(RngStream(a.seed), a.u, a.gens, a.R, a.reps, workers=a.workers)
    rows = []
    for n in range(1, a.gens + 1):
        e = gc.estimate(n)
        rows.append({"n": n, "u": a.u, "R": a.R, "mean": e.mean, "stderr": e.stderr,
                     "exact": br.F_n(n, a.R, a.u), "truncation_bias": gc.truncation_bias[n]})
    return rows, True


def cmd_kernel_check(a):
    if a.kernel == "tau":
        nu = pt.tau_kernel(RngStream(a.seed), a.d, a.u, a.K, a.L, n_per_bin=a.n_per_bin)
    else:
        nu = pt.scaled_kernel(pt.mu_kernel(a.u), a.factor)
    c = pt.kernel_domination_constant(nu, a.K, a.L, width=a.width, u=a.u)
    k, l = getattr(c, "where", (None, None))
    return [{"kernel": a.kernel, "u": a.u, "K": a.K, "L": a.L, "width": a.width, "c_hat": float(c),
             "bin": k, "cell": l, "u_times_c_hat": a.u * float(c)}], True


def cmd_tau_bins(a):
    rows = []
    root = RngStream(a.seed)
    for i, x in enumerate(a.x):
        for l, e in pt.estimate_tau_bins(root.child(i), a.d, a.u, x, a.l_max, a.n, a.s):
            rows.append({"x": x, "l": l, "tau": e.mean, "stderr": e.stderr,
                         "tau_times_e^(x-l)+": e.mean * math.exp(max(x - l, 0.0))})
    return rows, True


def cmd_eta_sim(a):
    window = max(a.R_grid) + a.margin
    counts = pt.eta_generation_counts(RngStream(a.seed), a.u, a.d, a.gens, window, a.R_grid, a.reps, a.s,
                                      a.workers)
    rows = []
    for n in range(a.gens + 1):
        for j, R in enumerate(a.R_grid):
            v = counts[:, n, j]
            rows.append({"n": n, "R": R, "mean": float(v.mean()),
                         "stderr": float(v.std(ddof=1) / math.sqrt(len(v))) if len(v) > 1 else float("nan"),
                         "F_n": br.F_n(n, R, a.u) if n else float("nan")})
    return rows, True


def cmd_growth_compare(a):
    rep = pt.growth_rate_comparison(RngStream(a.seed), a.d, a.u, a.R_grid, a.gens, a.reps, a.margin,
                                    s=a.s, workers=a.workers)
    rows = [{"R": R, "eta_mean": e, "ambient_mean": m}
            for R, e, m in zip(rep.R_grid, rep.eta_mean, rep.ambient_mean)]
    rows.append({"R": "rate", "eta_mean": rep.eta_rate, "ambient_mean": rep.ambient_rate})
    rows.append({"R": "ci95_low", "eta_mean": rep.eta_rate_ci95[0], "ambient_mean": rep.ambient_rate_ci95[0]})
    rows.append({"R": "ci95_high", "eta_mean": rep.eta_rate_ci95[1], "ambient_mean": rep.ambient_rate_ci95[1]})
    rows.append({"R": "disconnected", "eta_mean": rep.disconnected, "ambient_mean": rep.ambient_rate_exact})
    return rows, True


def cmd_net_build(a):
    net = hg.greedy_net(a.d, a.r, a.spacing, seed=a.seed, budget=a.budget, n_verify=a.n_verify)
    if a.centers:
        return [{"rho": float(hg.radius_of(c)), **{f"x{i}": float(v) for i, v in enumerate(c)}}
                for c in net.centers], True
    vol = hg.ball_volume(a.d, a.r)
    return [{"d": a.d, "r": a.r, "spacing": a.spacing, "centers": len(net),
             "min_pairwise": net.min_pairwise(),
             "lower_bound": vol / hg.ball_volume(a.d, a.spacing),
             "upper_bound": hg.ball_volume(a.d, a.r + a.spacing / 2) / hg.ball_volume(a.d, a.spacing / 2)}], True


def cmd_acceptance(a):
    results = acc.run_all(scale=a.scale, workers=a.workers, seed=a.seed, only=set(a.only) if a.only else None)
    rows = [{"criterion": r.number, "name": r.name, "passed": r.passed, "seconds": round(r.seconds, 1),
             "limit": r.limit, "detail": json.dumps(_plain(r.detail))} for r in results]
    for r in results:
        print(r.line(), file=sys.stderr)
    return rows, all(r.passed for r in results)


# ---------------------------------------------------------------------------

def build_parser():
    p = argparse.ArgumentParser(prog="hypcyl", description="Poisson cylinder processes in hyperbolic space")
    p.add_argument("--version", action="version", version=f"hypcyl {__version__}")
    p.add_argument("--replay", metavar="FILE", help="re-run the command recorded in an output file")
    sub = p.add_subparsers(dest="command")

    def add(name, fn, help_):
        sp = sub.add_parser(name, help=help_)
        sp.set_defaults(func=fn)
        sp.add_argument("--format", choices=["csv", "json"], default="csv")
        sp.add_argument("--out", metavar="PATH", help="output file (default stdout)")
        return sp

    def mc_flags(sp, reps=1000):
        sp.add_argument("--seed", type=int, default=0)
        sp.add_argument("--workers", type=_pos_int, default=1)
        if reps:
            sp.add_argument("--reps", type=_pos_int, default=reps)

    sp = add("geo-dist", cmd_geo_dist, "distance between two points")
    sp.add_argument("--ball", type=_floats, action="append", help="point in ball coordinates, e.g. 0.5,0")
    sp.add_argument("--hyp", type=_floats, action="append", help="point on the hyperboloid x0,x1,...")

    sp = add("line-measure", cmd_line_measure, "measure of lines meeting a ball (or shell)")
    sp.add_argument("--d", type=_dim, required=True)
    sp.add_argument("--r", type=_pos, required=True)
    sp.add_argument("--r-in", type=_nonneg, default=0.0)
    sp.add_argument("--n", type=int, default=0, help="also estimate by sampling n lines")
    sp.add_argument("--seed", type=int, default=0)

    sp = add("line-sample", cmd_line_sample, "sample lines meeting B(o, r)")
    sp.add_argument("--d", type=_dim, required=True)
    sp.add_argument("--r", type=_pos, required=True)
    sp.add_argument("--n", type=int, default=10)
    sp.add_argument("--seed", type=int, default=0)

    sp = add("connect-one", cmd_connect_one, "one-cylinder connection probability of B(o,1), B(y,1)")
    sp.add_argument("--d", type=_dim, default=2)
    sp.add_argument("--u", type=_pos, required=True)
    sp.add_argument("--R", type=_nonneg, required=True)
    sp.add_argument("--s", type=_pos, default=1.0)
    sp.add_argument("--n", type=_pos_int, default=10**6)
    sp.add_argument("--seed", type=int, default=0)

    sp = add("connect-m", cmd_connect_m, "probability of a chain of at most m cylinders")
    sp.add_argument("--d", type=_dim, default=2)
    sp.add_argument("--u", type=_pos, required=True)
    sp.add_argument("--R", type=_grid, required=True, help="distances, e.g. 3,4,5")
    sp.add_argument("--m", type=_pos_int, default=2)
    sp.add_argument("--margin", type=_nonneg, default=2.0)
    sp.add_argument("--s", type=_pos, default=1.0)
    mc_flags(sp)

    sp = add("phase-scan", cmd_phase_scan, "component statistics over an intensity grid")
    sp.add_argument("--d", type=_dim, default=2)
    sp.add_argument("--window", type=_pos, default=6.0)
    sp.add_argument("--u-grid", type=_grid, required=True, help="e.g. 0.1,0.5,1 or 0:2:0.25")
    sp.add_argument("--s", type=_pos, default=1.0)
    mc_flags(sp, reps=20)

    sp = add("branching-table", cmd_branching_table, "closed-form f_n, F_n and bounds")
    sp.add_argument("--u", type=_nonneg, required=True)
    sp.add_argument("--R", type=_nonneg, required=True)
    sp.add_argument("--n-max", type=_pos_int, default=10)

    sp = add("branching-sim", cmd_branching_sim, "simulated generation counts against F_n")
    sp.add_argument("--u", type=_pos, required=True)
    sp.add_argument("--R", type=_pos, required=True)
    sp.add_argument("--gens", type=_pos_int, default=4)
    mc_flags(sp, reps=10**5)

    sp = add("kernel-check", cmd_kernel_check, "domination constant of a kernel over the reference kernel")
    sp.add_argument("--kernel", choices=["mu", "tau"], default="tau")
    sp.add_argument("--d", type=_dim, default=2)
    sp.add_argument("--u", type=_pos, default=1.0)
    sp.add_argument("--K", type=_pos_int, default=6)
    sp.add_argument("--L", type=_pos_int, default=6)
    sp.add_argument("--width", type=_pos, default=1.0)
    sp.add_argument("--factor", type=_pos, default=1.0, help="scale of the mu kernel")
    sp.add_argument("--n-per-bin", type=_pos_int, default=20_000)
    sp.add_argument("--seed", type=int, default=0)

    sp = add("tau-bins", cmd_tau_bins, "shell masses of the closest-point kernel")
    sp.add_argument("--d", type=_dim, default=2)
    sp.add_argument("--u", type=_pos, default=1.0)
    sp.add_argument("--x", type=_grid, required=True)
    sp.add_argument("--l-max", type=int, default=7)
    sp.add_argument("--n", type=_pos_int, default=10**5)
    sp.add_argument("--s", type=_pos, default=1.0)
    sp.add_argument("--seed", type=int, default=0)

    sp = add("eta-sim", cmd_eta_sim, "generation counts of the geometric particle system")
    sp.add_argument("--d", type=_dim, default=2)
    sp.add_argument("--u", type=_pos, required=True)
    sp.add_argument("--gens", type=_pos_int, default=3)
    sp.add_argument("--R-grid", type=_grid, default=[2.0, 3.0, 4.0])
    sp.add_argument("--margin", type=_nonneg, default=3.0)
    sp.add_argument("--s", type=_pos, default=1.0)
    mc_flags(sp, reps=200)

    sp = add("growth-compare", cmd_growth_compare, "growth rate of particle counts vs. ambient lines")
    sp.add_argument("--d", type=_dim, default=2)
    sp.add_argument("--u", type=_pos, required=True)
    sp.add_argument("--R-grid", type=_grid, default=[2.0, 3.0, 4.0, 5.0, 6.0])
    sp.add_argument("--gens", type=_pos_int, default=4)
    sp.add_argument("--margin", type=_nonneg, default=3.0)
    sp.add_argument("--s", type=_pos, default=1.0)
    mc_flags(sp, reps=500)

    sp = add("net-build", cmd_net_build, "greedy separated net of B(o, r)")
    sp.add_argument("--d", type=_dim, default=2)
    sp.add_argument("--r", type=_pos, required=True)
    sp.add_argument("--spacing", type=_pos, default=0.5)
    sp.add_argument("--budget", type=_pos_int, default=200_000)
    sp.add_argument("--n-verify", type=_pos_int, default=100_000)
    sp.add_argument("--centers", action="store_true", help="emit the centers instead of a summary")
    sp.add_argument("--seed", type=int, default=0)

    sp = add("acceptance", cmd_acceptance, "run the acceptance suite")
    sp.add_argument("--scale", type=_pos, default=1.0, help="Monte Carlo size factor (1 = full)")
    sp.add_argument("--only", type=lambda t: [int(x) for x in t.split(",")], help="criterion numbers")
    sp.add_argument("--seed", type=int, default=acc.MASTER_SEED)
    sp.add_argument("--workers", type=_pos_int, default=1)
    return p


def run(argv):
    """Execute one command; returns (exit_code, rendered_output)."""
    parser = build_parser()
    try:
        a = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0), ""
    if a.replay:
        if a.command:
            print("hypcyl: --replay takes no command", file=sys.stderr)
            return 2, ""
        try:
            recorded = argv_from_file(a.replay)
        except (OSError, UsageError, ValueError, KeyError) as exc:
            print(f"hypcyl: {exc}", file=sys.stderr)
            return 2, ""
        return run(recorded)
    if not a.command:
        parser.print_usage(sys.stderr)
        return 2, ""
    config = {k: v for k, v in vars(a).items() if k not in ("func", "out", "replay")}
    try:
        rows, ok = a.func(a)
    except UsageError as exc:
        print(f"hypcyl {a.command}: {exc}", file=sys.stderr)
        return 2, ""
    except (hg.GeometryError, ValueError) as exc:
        print(f"hypcyl {a.command}: invalid input: {exc}", file=sys.stderr)
        return 2, ""
    except (RuntimeError, ArithmeticError) as exc:
        print(f"hypcyl {a.command}: numeric failure: {exc}", file=sys.stderr)
        return 1, ""
    recorded = [x for x in argv if x != "--out"] if "--out" not in argv else _strip_out(argv)
    text = render(recorded, config, rows, a.format)
    if a.out:
        with open(a.out, "w") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)
    return (0 if ok else 1), text


def _strip_out(argv):
    out, skip = [], False
    for x in argv:
        if skip:
            skip = False
            continue
        if x == "--out":
            skip = True
            continue
        if x.startswith("--out="):
            continue
        out.append(x)
    return out


def main(argv=None):
    code, _ = run(sys.argv[1:] if argv is None else list(argv))
    return code


if __name__ == "__main__":
    raise SystemExit(main())
