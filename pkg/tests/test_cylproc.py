import json
import math

import numpy as np
import pytest
from scipy import optimize, stats

from hypcyl import cylproc as cp
from hypcyl import hypgeo as hg
from hypcyl import linemeasure as lm
from hypcyl.hypgeo import Geodesic
from hypcyl.mc import RngStream


def perp_to_axis(t, d=2):
    """Line orthogonal to the e1 diameter, crossing it at signed distance t."""
    omega = np.eye(d)[0] * (1 if t >= 0 else -1)
    return Geodesic.from_foot(abs(t), omega, np.eye(d)[1])


def planted_triangle():
    a, b = perp_to_axis(0.5), perp_to_axis(-0.5)

    def gap(rho):
        return hg.dist_geodesics(Geodesic.from_foot(rho, [0, 1], [1, 0]), a) - 5.0

    c = Geodesic.from_foot(optimize.brentq(gap, 0.1, 10), [0, 1], [1, 0])
    return [a, b, c]


def test_planted_distances_and_components():
    lines = planted_triangle()
    d = [hg.dist_geodesics(lines[i], lines[j]) for i, j in ((0, 1), (0, 2), (1, 2))]
    assert d == pytest.approx([1.0, 5.0, 5.0], abs=1e-9)
    g = cp.build_graph(cp.from_lines(lines, s=1.0))
    assert g.n_components == 2
    assert sorted(g.component_sizes()) == [1, 2]


def test_single_line_and_crossing_diameters():
    g = cp.build_graph(cp.from_lines([perp_to_axis(0.0)]))
    assert g.n_components == 1
    L1 = Geodesic.from_foot(0.0, [1, 0], [0, 1])
    L2 = Geodesic.from_foot(0.0, [0, 1], [1, 0])
    assert cp.build_graph(cp.from_lines([L1, L2])).n_components == 1


def test_planted_chain_cdist():
    lines = [perp_to_axis(t) for t in (0.0, 1.5, 3.0, 4.5)]
    g = cp.build_graph(cp.from_lines(lines))
    assert cp.cdist(g, 0, 0) == 0
    assert cp.cdist(g, 0, 1) == 0
    assert cp.cdist(g, 0, 3) == 2
    assert cp.diam_hat(g) == 2
    for a in range(4):
        for b in range(4):
            for c in range(4):
                assert cp.cdist(g, a, c) <= cp.cdist(g, a, b) + cp.cdist(g, b, c) + 1


def test_disconnected_pair_infinite():
    g = cp.build_graph(cp.from_lines([perp_to_axis(0.0), perp_to_axis(4.0)]))
    assert cp.cdist(g, 0, 1) == math.inf


def test_adjacency_boundary_tie_counts():
    lines = [perp_to_axis(0.0), perp_to_axis(2.0)]
    assert cp.build_graph(cp.from_lines(lines)).n_components == 1


def test_graph_symmetric_and_labels_stable():
    real = cp.realize(RngStream(1), 0.5, 2, 4.0)
    g = cp.build_graph(real)
    A = g._adj.toarray()
    assert np.array_equal(A, A.T)
    g2 = cp.build_graph(real)
    assert np.array_equal(g.component_labels, g2.component_labels)
    assert json.loads(g.to_json())["n_nodes"] == real.n_lines
    # edges agree with the scalar distance
    for i, j in g.edges[:50]:
        L = real.lines
        assert hg.dist_geodesics(L[i], L[j]) <= 2.0 + 1e-6


def test_realize_edge_cases():
    real = cp.realize(RngStream(1), 0.0, 2, 3.0)
    assert real.n_lines == 0
    assert cp.build_graph(real).n_components == 0
    assert not cp.covers_point(real, hg.origin(2))
    a = cp.realize(RngStream(5), 0.3, 3, 3.0)
    b = cp.realize(RngStream(5), 0.3, 3, 3.0)
    assert np.array_equal(a.P, b.P) and np.array_equal(a.V, b.V)
    assert json.loads(a.to_json())["seed"] == [5]


def test_realize_mean_count():
    root = RngStream(2)
    counts = [cp.realize(root.child(i), 0.1, 2, 5.0).n_lines for i in range(1000)]
    lam = 0.1 * lm.measure_hitting_ball(2, 5.0)
    assert abs(np.mean(counts) - lam) <= 3 * np.std(counts, ddof=1) / math.sqrt(1000)


def test_coverage():
    real = cp.realize(RngStream(3), 0.5, 2, 4.0)
    P = real.P[0]
    assert cp.covers_point(real, P)
    dense = cp.realize(RngStream(4), 5.0, 2, 4.0)
    g = np.random.default_rng(0)
    X = hg.sample_volume(g, 2, 2.0, 1000)
    assert cp.covered_mask(dense, X).mean() >= 0.99
    with pytest.warns(cp.EdgeEffectWarning):
        cp.covers_point(dense, hg.polar_point(3.5, np.array([1.0, 0.0])))


def test_closest_point_process():
    real = cp.realize(RngStream(6), 1.0, 2, 3.0)
    pts = cp.closest_point_process(real)
    for p, L in zip(pts[:20], real.lines):
        assert hg.dist_point_geodesic(p, L)[1] == pytest.approx(0, abs=1e-9)
    root = RngStream(7)
    rho = np.concatenate([hg.radius_of(cp.realize(root.child(i), 1.0, 2, 3.0).P) for i in range(300)])
    assert stats.kstest(rho, lambda x: np.sinh(x) / math.sinh(3.0)).pvalue > 0.01
    assert cp.closest_point_process(cp.realize(RngStream(1), 0.0, 2, 3.0)) == []


def test_one_step_examples():
    o = hg.origin(2)
    y = hg.polar_point(4.0, np.array([1.0, 0.0]))
    p, _ = cp.connect_prob_one_step(2, 0.0, o, y, 1000, RngStream(1))
    assert p == 0.0
    p, est = cp.connect_prob_one_step(2, 0.1, o, o, 10, RngStream(1))
    assert p == pytest.approx(0.8561656, abs=1e-7)
    assert est.stderr == 0.0


def test_one_step_decay_shape():
    vals = []
    for R in (4.0, 6.0, 8.0):
        y = hg.polar_point(R, np.array([1.0, 0.0]))
        p, _ = cp.connect_prob_one_step(2, 0.01, hg.origin(2), y, 10**6, RngStream(8, int(R)))
        vals.append(p * math.exp(R) / 0.01)
    assert max(vals) / min(vals) <= 2.0


def test_one_step_offcenter_pair_matches_centered():
    # isometry invariance: only the distance between the balls matters
    x = hg.polar_point(2.0, np.array([0.0, 1.0]))
    M = hg.translation_to(x)
    y = hg.apply(M, hg.polar_point(3.0, np.array([1.0, 0.0])))
    p1, e1 = cp.connect_prob_one_step(2, 0.05, x, y, 400_000, RngStream(9))
    p2, e2 = cp.connect_prob_one_step(2, 0.05, hg.origin(2), hg.polar_point(3.0, np.array([1.0, 0.0])),
                                      400_000, RngStream(10))
    assert abs(e1.mean - e2.mean) <= 3 * math.hypot(e1.stderr, e2.stderr)


def test_one_step_warns_outside_small_u():
    with pytest.warns(cp.IntensityWarning):
        cp.connect_prob_one_step(2, 1.0, hg.origin(2), hg.polar_point(1.0, np.array([1.0, 0.0])), 100,
                                 RngStream(1))


def test_connect_depth_monotone_in_m():
    y = hg.polar_point(4.0, np.array([1.0, 0.0]))
    root = RngStream(11)
    for i in range(30):
        real = cp.realize(root.child(i), 0.2, 2, 6.0)
        hits = [cp.connect_depth(real, y, max_depth=m) <= m for m in range(1, 6)]
        assert all(a <= b for a, b in zip(hits, hits[1:]))


def test_connect_m_edge_cases():
    est = cp.estimate_connect_prob_msteps(RngStream(1), 2, 1e-12, 3.0, 2, reps=20)
    assert est.mean == 0.0
    with pytest.raises(ValueError):
        cp.estimate_connect_prob_msteps(RngStream(1), 2, 0.1, 3.0, 0, reps=20)


def test_margin_sensitivity_reports():
    out = cp.margin_sensitivity(RngStream(12), 2, 0.05, 3.0, 2, reps=300)
    assert set(out) == {"margin", "margin_plus_2", "flagged"}
    assert not out["flagged"]


def test_superposition_keeps_connections():
    g = RngStream(13).generator
    d, r = 2, 4.0
    P1, V1 = lm.sample_lines(g, d, r, g.poisson(0.3 * lm.measure_hitting_ball(d, r)))
    P2, V2 = lm.sample_lines(g, d, r, g.poisson(0.3 * lm.measure_hitting_ball(d, r)))
    small = cp.build_graph(cp.CylinderProcessRealization(d, 0.3, r, 1.0, P1, V1))
    big = cp.build_graph(cp.CylinderProcessRealization(d, 0.6, r, 1.0, np.concatenate([P1, P2]),
                                                       np.concatenate([V1, V2])))
    n = len(P1)
    same_small = small.component_labels[:, None] == small.component_labels[None, :]
    same_big = big.component_labels[:n, None] == big.component_labels[None, :n]
    assert np.all(same_big[same_small])


def test_phase_scan_shape_and_monotone():
    rows = cp.phase_scan(RngStream(14), 2, 6.0, [0.0, 0.05, 0.2, 0.5, 1.0, 2.0, 5.0], reps=20)
    assert rows[0]["mean_components"] == 0
    frac = [r["largest_frac"] for r in rows[1:]]
    se = [r["se_largest"] for r in rows[1:]]
    for k in range(1, len(frac)):
        assert frac[k] >= frac[k - 1] - 2 * math.hypot(se[k], se[k - 1])
    assert rows[1]["largest_frac"] < 0.5
    assert rows[-1]["mean_components"] == 1.0


def test_phase_scan_rejects_decreasing_grid():
    with pytest.raises(ValueError):
        cp.phase_scan(RngStream(1), 2, 3.0, [1.0, 0.5], reps=2)
