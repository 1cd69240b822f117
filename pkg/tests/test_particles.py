import math

import numpy as np
import pytest
from scipy import stats

from hypcyl import branching as br
from hypcyl import hypgeo as hg
from hypcyl import particles as pt
from hypcyl.mc import RngStream


# ---------------------------------------------------------------------------
# offspring of the reference kernel

def test_offspring_zero_intensity():
    assert len(pt.sample_offspring_mu(RngStream(1), 2.0, 0.0, 10.0)) == 0


def test_offspring_from_zero_is_uniform_rate_u():
    g = RngStream(2).generator
    idx, ys = pt._mu_sample(g, np.zeros(100_000), 0.3, 5.0)
    counts = np.bincount(idx, minlength=100_000)
    lam = 0.3 * 5.0
    assert abs(counts.mean() - lam) <= 3 * math.sqrt(lam / 1e5)
    assert stats.kstest(ys, "uniform", args=(0, 5.0)).pvalue > 0.01


def test_offspring_above_zero_mean_and_split():
    g = RngStream(3).generator
    n = 100_000
    idx, ys = pt._mu_sample(g, np.full(n, 2.0), 1.0, 10.0)
    counts = np.bincount(idx, minlength=n)
    mean = (1 - math.exp(-2)) + 8
    assert abs(counts.mean() - mean) <= 3 * math.sqrt(mean / n)
    below = np.mean(ys < 2.0)
    p = (1 - math.exp(-2)) / mean
    assert p == pytest.approx((1 - math.exp(-2)) / 8.8647, rel=1e-4)
    assert abs(below - p) <= 3 * math.sqrt(p * (1 - p) / len(ys))
    # backward part has density proportional to e^{y-2} on [0, 2)
    back = ys[ys < 2.0]
    cdf = lambda y: (np.exp(y - 2) - math.exp(-2)) / (1 - math.exp(-2))
    assert stats.kstest(back, cdf).pvalue > 0.01


def test_offspring_sorted_and_capped():
    ys = pt.sample_offspring_mu(RngStream(4), 1.0, 2.0, 6.0)
    assert np.all(np.diff(ys) >= 0)
    assert ys.max() <= 6.0 and ys.min() >= 0
    with pytest.raises(ValueError):
        pt.sample_offspring_mu(RngStream(4), 3.0, 1.0, 2.0)


def test_count_sampler_matches_full_sampler():
    g1, g2 = RngStream(5).generator, RngStream(6).generator
    xs = np.full(50_000, 3.0)
    c = pt._mu_count(g1, xs, 0.5, 2.0)
    idx, ys = pt._mu_sample(g2, xs, 0.5, 20.0)
    full = np.bincount(idx[ys <= 2.0], minlength=len(xs))
    assert abs(c.mean() - full.mean()) <= 3 * math.hypot(c.std(), full.std()) / math.sqrt(len(xs))
    assert c.mean() == pytest.approx(pt.mu_bin_mass(3.0, 0.0, 2.0, 0.5), rel=0.02)


def test_bin_mass_closed_form():
    from scipy import integrate

    for x, lo, hi in [(0.0, 0, 1), (2.5, 0, 1), (2.5, 2, 3), (2.5, 3, 4), (1.0, 0.5, 5)]:
        q, _ = integrate.quad(lambda y: 0.7 * math.exp(-max(x - y, 0.0)), lo, hi, points=[x])
        assert pt.mu_bin_mass(x, lo, hi, 0.7) == pytest.approx(q, rel=1e-10)


# ---------------------------------------------------------------------------
# generation counts

def test_generation_one_poisson():
    gc = pt.zeta_counts(RngStream(7), 0.1, 2, 2.0, 10**5)
    c = gc.counts[:, 1]
    assert abs(c.mean() - 0.2) <= 3 * c.std(ddof=1) / math.sqrt(len(c))
    # Poisson: variance equals the mean
    se_var = math.sqrt(2 * 0.2 ** 2 / len(c) + 0.2 / len(c))
    assert abs(c.var(ddof=1) - 0.2) <= 3 * se_var


def test_generation_two_mean():
    e = pt.zeta_counts(RngStream(8), 0.1, 2, 2.0, 10**5).estimate(2)
    assert abs(e.mean - 0.04) <= 3 * e.stderr


@pytest.mark.parametrize("u,R", [(0.05, 1.0), (0.1, 2.0)])
def test_counts_match_closed_form(u, R):
    gc = pt.zeta_counts(RngStream(9, int(100 * u + R)), u, 4, R, 10**5)
    for n in range(1, 5):
        e = gc.estimate(n)
        assert abs(e.mean - br.F_n(n, R, u)) <= 3 * max(e.stderr, 1e-12)
        assert gc.truncation_bias[n] < 1e-10


def test_intensity_scaling():
    R = 1.0
    hi = pt.zeta_counts(RngStream(10), 1.0, 2, R, 20_000).estimate(2)
    lo = pt.zeta_counts(RngStream(11), 0.1, 2, R, 10**5).estimate(2)
    assert br.F_n(2, R, 0.1) == pytest.approx(0.01 * br.F_n(2, R, 1.0))
    assert abs(lo.mean - 0.01 * hi.mean) <= 3 * math.hypot(lo.stderr, 0.01 * hi.stderr)


def test_zero_intensity_only_root():
    gens = pt.simulate_zeta(RngStream(12), 0.0, 3, 2.0)
    assert len(gens[0]) == 1 and all(len(g) == 0 for g in gens[1:])


def test_simulate_zeta_structure():
    gens = pt.simulate_zeta(RngStream(13), 0.1, 3, 2.0)
    assert [g.generation_index for g in gens] == [0, 1, 2, 3]
    for g in gens:
        assert np.all(np.diff(g.types) >= 0)
        assert g.truncated_mass < 1e-10
    assert gens[0].count(0, 0) == 1


def test_population_cap():
    with pytest.raises(pt.PopulationCapError):
        pt.zeta_counts(RngStream(14), 2.0, 4, 5.0, 1000, pop_cap=10_000)


def test_kernel_generation_one_uniform():
    types = np.concatenate([pt.simulate_kernel(RngStream(15, i), pt.mu_kernel(0.2), 1, 2.0, 12.0)[1].types
                            for i in range(3000)])
    assert stats.kstest(types, "uniform", args=(0, 12.0)).pvalue > 0.01


def test_worker_independence():
    a = pt.zeta_counts(RngStream(16), 0.1, 3, 2.0, 30_000, batch=7000, workers=1)
    b = pt.zeta_counts(RngStream(16), 0.1, 3, 2.0, 30_000, batch=7000, workers=4)
    assert np.array_equal(a.counts, b.counts)


# ---------------------------------------------------------------------------
# domination constant

def test_domination_of_reference_kernel():
    c = pt.kernel_domination_constant(pt.mu_kernel(0.5), 6, 6)
    assert 1.0 <= c <= math.e + 1e-12
    assert c == pytest.approx(math.e, rel=1e-12)
    c2 = pt.kernel_domination_constant(pt.scaled_kernel(pt.mu_kernel(0.5), 2.0), 6, 6)
    assert c2 == pytest.approx(2 * c, rel=1e-12)


def test_domination_refines_to_one():
    vals = [pt.kernel_domination_constant(pt.mu_kernel(1.0), int(6 / w), int(6 / w), width=w)
            for w in (1.0, 0.5, 0.25, 0.1)]
    assert all(a > b for a, b in zip(vals, vals[1:]))
    assert vals[-1] < 1.11


def test_zero_atom_rejected():
    mu = pt.mu_kernel(0.1)
    with pytest.raises(ValueError):
        pt.OffspringKernel(mu.bin_mass, mu.sampler, mu.count_sampler, "bad", zero_atom=0.1)


def test_damped_kernel_dominated():
    u = 0.1
    nu = pt.scaled_kernel(pt.mu_kernel(u), 0.5)
    c = pt.kernel_domination_constant(nu, 8, 8)
    assert c == pytest.approx(0.5 * math.e, rel=1e-12)
    for R in (1.0, 2.0, 3.0):
        gc = pt.kernel_counts(RngStream(17, int(R)), nu, 3, R, 50_000)
        for n in range(1, 4):
            e = gc.estimate(n)
            assert e.mean <= c ** n * br.F_n(n, R, u) + 3 * e.stderr
            # and the thinning really halves each generation
            assert abs(e.mean - 0.5 ** n * br.F_n(n, R, u)) <= 3 * max(e.stderr, 1e-12)


# ---------------------------------------------------------------------------
# closest-point kernel

def test_tau_bins_zero_intensity():
    for _, e in pt.estimate_tau_bins(RngStream(1), 2, 0.0, 2.0, 4, 2000):
        assert e.mean == 0.0


def test_tau_bins_window_check():
    with pytest.raises(ValueError):
        pt.estimate_tau_bins(RngStream(1), 2, 1.0, 2.0, 5, 100, window_r=3.0)


def test_tau_bins_decay_from_far_line():
    x = 6.0
    bins = pt.estimate_tau_bins(RngStream(18), 2, 1.0, x, 5, 600_000)
    q = [e.mean * math.exp(x - l) for l, e in bins]
    se = [e.stderr * math.exp(x - l) for l, e in bins]
    assert max(q) / min(q) <= 10
    assert all(v > 0 for v in q)
    assert max(s / v for s, v in zip(se, q)) < 0.2


def test_tau_bins_flat_beyond_reference():
    bins = pt.estimate_tau_bins(RngStream(19), 2, 1.0, 1.0, 7, 400_000)
    far = np.array([e.mean for l, e in bins if l >= 2])
    assert far.max() / far.min() <= 1.5


def test_tau_first_bin_exact_for_line_through_origin():
    # every line with rho <= 1 is within 2 of a line through o, so the bin is the whole shell
    from hypcyl.linemeasure import measure_shell

    bins = dict(pt.estimate_tau_bins(RngStream(20), 2, 0.7, 0.0, 2, 30_000))
    assert bins[0].mean == pytest.approx(0.7 * measure_shell(2, 0.0, 1.0), rel=1e-12)
    assert bins[0].stderr == 0.0


def test_tau_kernel_sampler_consistent_with_table():
    nu = pt.tau_kernel(RngStream(21), 2, 1.0, 3, 2, n_per_bin=5000)
    g = RngStream(22).generator
    par, ys = nu.sampler(g, np.full(20_000, 1.0), 10.0)
    counts = np.bincount(np.floor(ys).astype(int), minlength=4)[:4] / 20_000
    expect = [nu.bin_mass(1.0, k, k + 1) for k in range(4)]
    assert np.allclose(counts, expect, rtol=0.1, atol=0.05)
    with pytest.raises(ValueError):
        nu.bin_mass(0.33333, 0, 1)


# ---------------------------------------------------------------------------
# eta

def test_eta_zero_intensity():
    eta = pt.simulate_eta(RngStream(1), 0.0, 2, 3, 5.0)
    assert eta.count_within(0, 1.0) == 1
    assert eta.cumulative_within(10.0) == 1


def test_eta_offspring_meet_parent():
    eta = pt.simulate_eta(RngStream(23), 0.1, 2, 3, 5.0)
    assert eta.n_gens >= 1
    for n in range(1, len(eta.lines)):
        P, V = eta.lines[n]
        Pp, Vp = eta.lines[n - 1]
        par = eta.parents[n]
        ch = hg.line_line_cosh(P, V, Pp[par], Vp[par])
        assert np.all(ch <= math.cosh(2.0) * (1 + 1e-12))
        assert np.all(np.diff(eta.rho(n)) >= 0)


def test_eta_generation_one_grows_with_R():
    counts = pt.eta_generation_counts(RngStream(24), 0.05, 2, 1, 7.0, [1.0, 2.0, 3.0], 2000)
    m = counts[:, 1, :].mean(axis=0)
    assert m[0] < m[1] < m[2]


def test_eta_line_cap():
    with pytest.raises(pt.LineCapError):
        pt.simulate_eta(RngStream(25), 1.0, 2, 3, 6.0, line_cap=200)


def test_eta_worker_independence():
    a = pt.eta_generation_counts(RngStream(26), 0.05, 2, 2, 6.0, [2.0, 4.0], 40, workers=1)
    b = pt.eta_generation_counts(RngStream(26), 0.05, 2, 2, 6.0, [2.0, 4.0], 40, workers=4)
    assert np.array_equal(a, b)


# ---------------------------------------------------------------------------
# growth comparison

def test_growth_zero_intensity():
    rep = pt.growth_rate_comparison(RngStream(27), 2, 0.0, [2, 3, 4], gens=2, reps=20, n_boot=50)
    assert rep.eta_rate == 0.0


def test_growth_needs_range():
    with pytest.raises(ValueError):
        pt.growth_rate_comparison(RngStream(1), 2, 0.01, [2, 3], gens=2, reps=10)


def test_growth_warns_outside_regime():
    with pytest.warns(UserWarning):
        pt.growth_rate_comparison(RngStream(28), 2, 0.01, [2, 3, 4], gens=1, reps=20, n_boot=50, c_hat=50.0)
