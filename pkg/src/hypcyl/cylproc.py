"""Poisson cylinder process in a window: realizations, the cylinder
intersection graph, chain distances, coverage and connection probabilities.
"""
from __future__ import annotations

import json
import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components, shortest_path

from .hypgeo import (
    Point,
    apply,
    dist_coords,
    line_line_cosh_matrix,
    origin,
    point_line_cosh,
    polar_point,
    translation_to,
)
from .linemeasure import (
    Ball,
    MeasureEstimate,
    estimate_measure_intersection,
    line_records,
    measure_hitting_ball,
    poisson_count,
    sample_lines,
    to_geodesics,
)
from .mc import as_generator, as_stream, replicate, run_parallel, seed_record


class EdgeEffectWarning(UserWarning):
    pass


class IntensityWarning(UserWarning):
    pass


@dataclass(frozen=True, eq=False)
class CylinderProcessRealization:
    d: int
    u: float
    window_r: float
    s: float
    P: np.ndarray
    V: np.ndarray
    seed: object = None

    @property
    def n_lines(self):
        return len(self.P)

    @property
    def lines(self):
        return to_geodesics(self.P, self.V)

    def to_json(self):
        return json.dumps({
            "d": self.d, "u": self.u, "window_r": self.window_r, "s": self.s,
            "seed": self.seed, "lines": line_records(self.P, self.V) if self.n_lines else [],
        })


def realize(rng, u, d, window_r, s=1.0, max_expected=2e6):
    seed = seed_record(rng)
    g = as_generator(rng)
    n = poisson_count(g, u, d, window_r, max_expected)
    P, V = sample_lines(g, d, window_r, n)
    return CylinderProcessRealization(d, u, window_r, s, P, V, seed)


def from_lines(lines, s=1.0, window_r=math.inf, u=float("nan")):
    P = np.array([L.base for L in lines])
    V = np.array([L.direction for L in lines])
    return CylinderProcessRealization(P.shape[1] - 1, u, window_r, s, P, V)


# ---------------------------------------------------------------------------
# graph

def adjacency_pairs(P, V, threshold, P2=None, V2=None, chunk=512):
    """Index pairs (i, j) of lines at distance <= threshold.

    Without a second set, returns each unordered pair once (i < j).
    """
    same = P2 is None
    if same:
        P2, V2 = P, V
    c = math.cosh(threshold)
    rows, cols = [], []
    for i in range(0, len(P), chunk):
        ch = line_line_cosh_matrix(P[i:i + chunk], V[i:i + chunk], P2, V2)
        a, b = np.nonzero(ch <= c)
        a = a + i
        if same:
            keep = a < b
            a, b = a[keep], b[keep]
        rows.append(a)
        cols.append(b)
    if not rows:
        return np.zeros(0, dtype=np.int64), np.zeros(0, dtype=np.int64)
    return np.concatenate(rows), np.concatenate(cols)


def _canonical_labels(labels):
    _, first = np.unique(labels, return_index=True)
    order = np.argsort(first)
    remap = np.empty(len(order), dtype=np.int64)
    remap[order] = np.arange(len(order))
    return remap[labels]


@dataclass(eq=False)
class ConnectivityGraph:
    n_nodes: int
    edges: np.ndarray
    component_labels: np.ndarray
    _adj: object = field(default=None, repr=False)

    @classmethod
    def from_edges(cls, n, edges):
        edges = np.asarray(edges, dtype=np.int64).reshape(-1, 2)
        adj = coo_matrix((np.ones(len(edges)), (edges[:, 0], edges[:, 1])), shape=(n, n)).tocsr()
        adj = ((adj + adj.T) > 0).astype(np.int8)
        if n:
            _, labels = connected_components(adj, directed=False)
        else:
            labels = np.zeros(0, dtype=np.int64)
        return cls(n, edges, _canonical_labels(np.asarray(labels, dtype=np.int64)), adj)

    @property
    def n_components(self):
        return int(self.component_labels.max() + 1) if self.n_nodes else 0

    def component_sizes(self):
        return np.bincount(self.component_labels) if self.n_nodes else np.zeros(0, dtype=np.int64)

    def neighbors(self, i):
        return self._adj.indices[self._adj.indptr[i]:self._adj.indptr[i + 1]]

    def to_json(self):
        return json.dumps({"n_nodes": self.n_nodes, "edges": self.edges.tolist(),
                           "component_labels": self.component_labels.tolist()})


def build_graph(real):
    a, b = adjacency_pairs(real.P, real.V, 2 * real.s + 1e-9)
    return ConnectivityGraph.from_edges(real.n_lines, np.stack([a, b], axis=1))


def cdist(graph, i, j):
    """Number of intermediate cylinders in the shortest chain from i to j."""
    if i == j:
        return 0
    dist = shortest_path(graph._adj, unweighted=True, directed=False, indices=i)
    k = dist[j]
    return math.inf if not np.isfinite(k) else int(k) - 1


def diam_hat(graph):
    """Largest finite chain distance between two cylinders (0 for < 2 nodes)."""
    if graph.n_nodes < 2:
        return 0
    dist = shortest_path(graph._adj, unweighted=True, directed=False)
    finite = dist[np.isfinite(dist)]
    return max(int(finite.max()) - 1, 0)


# ---------------------------------------------------------------------------
# coverage

def covers_point(real, x):
    """True iff x lies in some cylinder of the realization."""
    x = x.coords if isinstance(x, Point) else np.asarray(x, dtype=float)
    if float(dist_coords(origin(real.d), x)) + real.s > real.window_r:
        warnings.warn("point within s of the window edge; coverage may be undercounted",
                      EdgeEffectWarning, stacklevel=2)
    if real.n_lines == 0:
        return False
    return bool((point_line_cosh(x, real.P, real.V) <= math.cosh(real.s) * (1 + 1e-12)).any())


def covered_mask(real, X):
    """Vectorized coverage for many points (no edge warning)."""
    X = np.atleast_2d(X)
    out = np.zeros(len(X), dtype=bool)
    if real.n_lines == 0:
        return out
    c = math.cosh(real.s) * (1 + 1e-12)
    for i in range(0, len(X), 256):
        blk = X[i:i + 256, None, :]
        out[i:i + 256] = (point_line_cosh(blk, real.P[None], real.V[None]) <= c).any(axis=1)
    return out


def closest_point_process(real):
    return [Point(p) for p in real.P]


# ---------------------------------------------------------------------------
# connection probabilities

def _inverse_translation(x):
    xi = np.array(x, dtype=float)
    xi[1:] *= -1.0
    return translation_to(xi)


def connect_prob_one_step(d, u, x, y, n, rng, s=1.0):
    """Probability that a single cylinder meets both B(x, 1) and B(y, 1).

    Returns (1 - exp(-u * mu_hat), estimate of mu_hat), where mu_hat is the
    measure of lines meeting both B(x, s+1) and B(y, s+1).
    """
    xs = x.coords if isinstance(x, Point) else np.asarray(x, dtype=float)
    ys = y.coords if isinstance(y, Point) else np.asarray(y, dtype=float)
    r = s + 1.0
    if u > 2.0 / measure_hitting_ball(d, r):
        warnings.warn("u exceeds the small-intensity regime of the two-sided bound", IntensityWarning, stacklevel=2)
    if np.allclose(xs, ys, rtol=0, atol=1e-14 * max(1.0, xs[0])):
        mu = measure_hitting_ball(d, r)
        est = MeasureEstimate(mu, 0.0, 0, seed_record(rng), 0)
    else:
        y0 = apply(_inverse_translation(xs), ys)
        est = estimate_measure_intersection(rng, Ball.at(origin(d), r), Ball.at(y0, r), r, n)
    return 1.0 - math.exp(-u * est.mean), est


def connect_depth(real, y, s=None, max_depth=None):
    """Fewest cylinders in a chain from one meeting B(o, 1) to one meeting B(y, 1).

    Returns math.inf when no chain exists inside the realization.
    """
    s = real.s if s is None else s
    if real.n_lines == 0:
        return math.inf
    c = math.cosh(s + 1.0) * (1 + 1e-12)
    src = np.nonzero(point_line_cosh(origin(real.d), real.P, real.V) <= c)[0]
    dst = point_line_cosh(y, real.P, real.V) <= c
    if len(src) == 0 or not dst.any():
        return math.inf
    if dst[src].any():
        return 1
    thr = math.cosh(2 * s + 1e-9)
    seen = np.zeros(real.n_lines, dtype=bool)
    seen[src] = True
    frontier = src
    depth = 1
    while len(frontier) and (max_depth is None or depth < max_depth):
        depth += 1
        ch = line_line_cosh_matrix(real.P[frontier], real.V[frontier], real.P, real.V)
        nxt = np.nonzero((ch <= thr).any(axis=0) & ~seen)[0]
        if dst[nxt].any():
            return depth
        seen[nxt] = True
        frontier = nxt
    return math.inf


def estimate_connect_prob_msteps(rng, d, u, R, m, margin=2.0, reps=1000, s=1.0, workers=1):
    """P[B(o,1) and B(y,1) are joined by a chain of at most m cylinders], d(o,y) = R.

    Chains must lie in the window B(o, R + margin); for m <= 2 a margin of s+1
    loses nothing because every cylinder in such a chain meets B(o,s+1) or
    B(y,s+1).
    """
    if m < 1:
        raise ValueError("m must be at least 1")
    root = as_stream(rng)
    y = polar_point(float(R), np.eye(d)[0])

    def task(stream):
        real = realize(stream, u, d, R + margin, s)
        return float(connect_depth(real, y, s, max_depth=m) <= m)

    est = replicate(task, reps, root, workers)
    return MeasureEstimate(est.mean, est.stderr, reps, seed_record(root), int(round(est.mean * reps)))


def margin_sensitivity(rng, d, u, R, m, margin=2.0, reps=1000, s=1.0, workers=1):
    """Estimates at margin and margin+2 and a flag if they differ by more than 2 stderr."""
    root = as_stream(rng)
    a = estimate_connect_prob_msteps(root.child(0), d, u, R, m, margin, reps, s, workers)
    b = estimate_connect_prob_msteps(root.child(1), d, u, R, m, margin + 2.0, reps, s, workers)
    se = math.hypot(a.stderr, b.stderr)
    return {"margin": a, "margin_plus_2": b, "flagged": abs(a.mean - b.mean) > 2 * se}


# ---------------------------------------------------------------------------
# phase scan

PHASE_COLUMNS = ["u", "reps", "mean_components", "se_components", "largest_frac", "se_largest",
                 "pair_conn", "se_pair_conn"]


def _graph_stats(n, rows, cols):
    if n == 0:
        return 0.0, np.nan, np.nan
    adj = coo_matrix((np.ones(len(rows)), (rows, cols)), shape=(n, n))
    k, labels = connected_components(adj, directed=False)
    sizes = np.bincount(labels).astype(float)
    pairs = n * (n - 1) / 2
    pair_conn = float((sizes * (sizes - 1) / 2).sum() / pairs) if n > 1 else 1.0
    return float(k), float(sizes.max() / n), pair_conn


def phase_scan(rng, d, window_r, u_grid, reps, s=1.0, workers=1, max_expected=2e6):
    """Component statistics over an increasing intensity grid.

    Within a replication the grid is coupled by superposition: the process
    at u_{k+1} is the one at u_k plus an independent process of intensity
    u_{k+1} - u_k.
    """
    u_grid = [float(u) for u in u_grid]
    if any(b < a for a, b in zip(u_grid, u_grid[1:])) or (u_grid and u_grid[0] < 0):
        raise ValueError("u_grid must be nonnegative and nondecreasing")
    root = as_stream(rng)
    thr = 2 * s + 1e-9

    def one(i):
        g = root.child(i).generator
        P = np.zeros((0, d + 1))
        V = np.zeros((0, d + 1))
        rows = [np.zeros(0, dtype=np.int64)]
        cols = [np.zeros(0, dtype=np.int64)]
        prev = 0.0
        out = []
        for u in u_grid:
            k = poisson_count(g, u - prev, d, window_r, max_expected)
            Pn, Vn = sample_lines(g, d, window_r, k)
            if k:
                a, b = adjacency_pairs(Pn, Vn, thr)
                rows.append(a + len(P))
                cols.append(b + len(P))
                if len(P):
                    a, b = adjacency_pairs(Pn, Vn, thr, P, V)
                    rows.append(a + len(P))
                    cols.append(b)
                P = np.concatenate([P, Pn])
                V = np.concatenate([V, Vn])
            prev = u
            out.append(_graph_stats(len(P), np.concatenate(rows), np.concatenate(cols)))
        return out

    stats = np.array(run_parallel(one, range(reps), workers))  # (reps, grid, 3)
    table = []
    for j, u in enumerate(u_grid):
        row = {"u": u, "reps": reps}
        for name, se_name, col in (("mean_components", "se_components", 0), ("largest_frac", "se_largest", 1),
                                   ("pair_conn", "se_pair_conn", 2)):
            v = stats[:, j, col]
            v = v[np.isfinite(v)]
            row[name] = float(v.mean()) if len(v) else float("nan")
            row[se_name] = float(v.std(ddof=1) / math.sqrt(len(v))) if len(v) > 1 else float("nan")
        table.append(row)
    return table
