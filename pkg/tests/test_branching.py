import math
from fractions import Fraction

import pytest
from hypothesis import given
from hypothesis import strategies as st

from hypcyl import branching as br
from hypcyl.branching import ExpPolynomial, UnsupportedFormError


def test_catalan_examples():
    assert br.catalan(0, 0) == 1
    assert br.catalan(0, 1) == 1
    assert br.catalan(1, 1) == 1
    assert br.catalan(1, 3) == 5
    assert all(br.catalan(n, n) == 1 for n in range(51))
    with pytest.raises(ValueError):
        br.catalan(4, 3)


def test_catalan_recursion_matches_closed_form():
    rows = br.catalan_rows(50)
    for n in range(51):
        for k in range(n + 1):
            assert rows[n][k] == br.catalan(k, n)
            assert rows[n][k] <= 4 ** n


def test_catalan_pascal_type_identity():
    for n in range(1, 51):
        for k in range(1, n):
            assert br.catalan(k, n) == br.catalan(k - 1, n - 1) + br.catalan(k + 1, n)


def test_catalan_first_column_is_catalan_numbers():
    for n in range(20):
        assert br.catalan(0, n) == math.comb(2 * n, n) // (n + 1)


def test_g_examples():
    assert br.g_poly(0).poly == (1,)
    assert br.g_poly(1).poly == (1, 1)
    assert br.g_poly(2)(2.0) == 8.0
    assert br.g_poly(2).exact(2) == 8


def test_T_iterates_exactly():
    g = br.g_poly(0)
    assert br.apply_T(g) == br.g_poly(1)
    for n in range(1, 21):
        g = br.apply_T(g)
        assert g == br.g_poly(n)


def test_eigenfunction():
    g = br.eigenfunction()
    assert br.apply_T(g) == g.scale(4)
    assert br.eigen_residual() <= 1e-10


def test_apply_T_mixed_and_errors():
    mixed = br.g_poly(3) + br.eigenfunction().scale(Fraction(1, 3))
    out = br.apply_T(mixed)
    assert out == br.g_poly(4) + br.eigenfunction().scale(Fraction(4, 3))
    with pytest.raises(UnsupportedFormError):
        br.apply_T(lambda x: x)
    with pytest.raises(UnsupportedFormError):
        br.apply_T(ExpPolynomial((), (1,), 2))


@pytest.mark.parametrize("x", [0.5, 2.0, 10.0])
def test_quadrature_matches_closed_form(x):
    val, rem = br.apply_T_numeric(br.g_poly(5), x)
    assert val == pytest.approx(br.g_poly(6)(x), rel=1e-8)
    assert rem < 1e-15 * val


@given(st.fractions(min_value=Fraction(1, 10), max_value=Fraction(9, 10), max_denominator=20),
       st.floats(0.0, 5.0))
def test_apply_T_exponential_rates(a, x):
    p = ExpPolynomial((1,), (1, 2), a)
    exact = br.apply_T(p)(x)
    num, _ = br.apply_T_numeric(p, x, tail=60.0 / float(1 - a))
    assert exact == pytest.approx(num, rel=1e-8)


def test_f_and_F_examples():
    for R in (0.0, 1.0, 7.5):
        assert br.f_n(1, R, 0.3) == pytest.approx(0.3)
        assert br.F_n(1, R, 0.3) == pytest.approx(0.3 * R)
    assert br.f_n(2, 2.0, 0.1) == pytest.approx(0.03, rel=1e-14)
    assert br.f_n(3, 2.0, 0.0) == 0.0
    assert br.F_n(2, 2.0, 0.1) == pytest.approx(0.04, rel=1e-14)
    assert br.F_n(3, 2.0, 0.1) == pytest.approx(0.009333333333333333, rel=1e-14)
    assert br.F_n_exact(3, 2, Fraction(1, 10)) == Fraction(7, 750)


@given(st.integers(1, 60), st.fractions(min_value=0, max_value=5, max_denominator=8),
       st.fractions(min_value=Fraction(1, 100), max_value=Fraction(1, 2), max_denominator=100))
def test_F_float_matches_exact(n, R, u):
    exact = br.F_n_exact(n, R, u)
    if exact == 0:
        assert br.F_n(n, float(R), float(u)) == 0
    else:
        assert br.F_n(n, float(R), float(u)) == pytest.approx(float(exact), rel=1e-10)


def test_log_space_agrees_at_large_n():
    for n in (61, 100, 200):
        direct = float(br.F_n_exact(n, 3, Fraction(3, 10)))
        assert br.log_F_n(n, 3.0, 0.3) == pytest.approx(math.log(direct), rel=1e-12)


def test_F_is_integral_of_f():
    from scipy import integrate

    for n in (1, 2, 5):
        q, _ = integrate.quad(lambda x: br.f_n(n, x, 0.2), 0, 3.0)
        assert q == pytest.approx(br.F_n(n, 3.0, 0.2), rel=1e-10)


def test_subcritical_bound():
    assert br.subcritical_bound(0.0, 0.2) == pytest.approx(1.0)
    assert br.subcritical_bound(3.0, 1e-12) == pytest.approx(0.0, abs=1e-11)
    with pytest.raises(ValueError):
        br.subcritical_bound(1.0, 0.25)
    for x in range(11):
        partial = math.fsum(br.f_n(n, x, 0.2) for n in range(1, 201))
        assert partial <= br.subcritical_bound(x, 0.2)
    assert math.fsum(br.F_n(n, 3.0, 0.2) for n in range(1, 201)) <= br.subcritical_sum_bound(3.0, 0.2)


def test_subcritical_partial_sums_cauchy():
    tail = [math.fsum(br.F_n(n, 1.0, 0.2) for n in range(N, N + 50)) for N in (50, 100, 150)]
    assert tail[0] > tail[1] > tail[2]
    assert tail[2] < 1e-6


def test_supercritical():
    for n in range(61):
        assert br.log_F_n(n + 1, 1.0, 0.3) >= br.log_supercritical_lower(n, 1.0, 0.3)
    assert any(br.log_F_n(n, 1.0, 0.3) > math.log(1e6) for n in range(1, 201))
    slopes = [br.log_supercritical_lower(n + 1, 1.0, 0.3) - br.log_supercritical_lower(n, 1.0, 0.3)
              for n in (100, 200, 400)]
    assert slopes[-1] == pytest.approx(math.log(1.2), abs=1e-2)
    crit = [br.supercritical_lower(n, 1.0, 0.25) for n in (10, 100, 1000)]
    assert crit[0] > crit[1] > crit[2]


def test_regime_labels():
    assert br.regime(0.1) == "subcritical"
    assert br.regime(0.3) == "supercritical"
    assert "no claim" in br.regime(0.25)


def test_table_and_csv():
    rows = br.branching_table(0.1, 2.0, 5)
    assert [r["n"] for r in rows] == [1, 2, 3, 4, 5]
    assert rows[0]["F_n"] == pytest.approx(0.2)
    text = br.table_csv(rows)
    assert text.splitlines()[0] == ",".join(br.TABLE_COLUMNS)
    assert "0.009333333333" in text
    sup = br.branching_table(0.3, 1.0, 3)
    assert math.isnan(sup[0]["subcritical_bound"])
