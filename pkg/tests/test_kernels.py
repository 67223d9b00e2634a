import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from helpers import atomic_pairs, classical, free_measures, two_site
from kreinfeller.kernels import (KernelError, brute_force_diagonal, coefficient_growth,
                                 diagonal_tables, extrapolate_to_zero, maclaurin_eval,
                                 remainder_bound, secular_coefficients)
from kreinfeller.measure import LEFT, RIGHT, evaluate


def test_two_atom_hand_values():
    W, V = two_site()
    t = diagonal_tables(W, V, 4)
    assert t.F_at_1[2] == 0.75
    assert t.G_at_1[2] == 0.25
    assert t.F_at_1[4] + t.G_at_1[4] == 1 / 16
    assert t.F_at_1[3] == 0.125
    # two interleaved pairs: nothing beyond order 2
    assert t.termination_order() == 3
    np.testing.assert_array_equal(secular_coefficients(t)[:4], [0.0, -1.0, 1 / 16, 0.0])


def test_classical_kernels_at_8192():
    # (2n)! F_2n(1,1) = 1 - n/N + O(1/N^2) under midpoint binning
    W, V = classical(8192)
    t = diagonal_tables(W, V, 5)
    for n in range(1, 6):
        assert abs(t.F_at_1[2 * n] * math.factorial(2 * n) - 1) < 1e-3


def test_classical_binned_closed_form():
    # the exact chain count gives F_2n = C(N+n-1, 2n) / N^2n
    N = 50
    W, V = classical(N)
    t = diagonal_tables(W, V, 6)
    for n in range(1, 7):
        assert math.isclose(t.F_at_1[2 * n], math.comb(N + n - 1, 2 * n) / N ** (2 * n), rel_tol=1e-12)
        assert math.isclose(t.G_at_1[2 * n], math.comb(N + n, 2 * n) / N ** (2 * n), rel_tol=1e-12)


@given(free_measures(RIGHT), free_measures(LEFT))
def test_first_order_is_the_measure(W, V):
    t = diagonal_tables(W, V, 2)
    g = t.grid
    np.testing.assert_allclose(t.F(1, g), evaluate(W, g), rtol=1e-14, atol=1e-15)
    np.testing.assert_allclose(t.G(1, g), evaluate(V, g), rtol=1e-14, atol=1e-15)


@given(free_measures(RIGHT), free_measures(LEFT))
def test_n1_identity(W, V):
    t = diagonal_tables(W, V, 1)
    assert math.isclose(t.F_at_1[2] + t.G_at_1[2], W.total_mass * V.total_mass, rel_tol=1e-13)
    assert math.isclose(secular_coefficients(t)[1], -W.total_mass * V.total_mass, rel_tol=1e-13)


@given(free_measures(RIGHT, 6), free_measures(LEFT, 6), st.floats(0, 1))
def test_brute_force_agreement(W, V, x):
    t = diagonal_tables(W, V, 2)
    for n in range(1, 4):
        for which, fn in (("F", t.F), ("G", t.G)):
            want = brute_force_diagonal(W, V, n, x, which)
            got = float(fn(n, x))
            assert math.isclose(got, want, rel_tol=1e-12, abs_tol=1e-14)


@given(atomic_pairs(1, 10))
def test_table_invariants(pair):
    W, V = pair
    K = 12
    t = diagonal_tables(W, V, K)
    assert np.all(t.F_cum >= 0) and np.all(t.G_cum >= 0)
    # monotone in x at fixed order
    assert np.all(np.diff(t.F_cum, axis=1) >= 0)
    assert np.all(np.diff(t.G_cum, axis=1) >= 0)
    F2 = t.F_at_1[2]
    for n in range(1, K + 1):
        assert t.F_at_1[2 * n] <= F2 ** n / math.factorial(n) * (1 + 1e-12)
    # exact termination beyond the interleaving capacity
    cap = min(W.n, V.n)
    for n in range(cap + 1, K + 1):
        assert t.F_at_1[2 * n] == 0.0 and t.G_at_1[2 * n] == 0.0
    a = secular_coefficients(t)
    nz = a[1:][a[1:] != 0]
    assert np.all(np.sign(nz) == (-1.0) ** np.arange(1, nz.size + 1))


def test_remainder_bound_examples():
    W, V = classical(1024)
    t = diagonal_tables(W, V, 20)
    b = [remainder_bound(t, 1.0, n) for n in range(1, 15)]
    assert all(x > y for x, y in zip(b, b[1:]))
    # dominates the cosine truncation error at order n
    for n in range(1, 15):
        partial = sum((-1) ** m / math.factorial(2 * m) for m in range(n))
        assert b[n - 1] >= abs(math.cos(1.0) - partial)
    assert remainder_bound(t, 0.0, 3) == 0.0
    Wa, Va = two_site()
    ta = diagonal_tables(Wa, Va, 5)
    assert remainder_bound(ta, 10.0, 3) == 0.0
    with pytest.raises(KernelError):
        remainder_bound(t, -1.0, 2)


def test_maclaurin_examples():
    W, V = classical(2048)
    t = diagonal_tables(W, V, 12)
    x = float(W.positions[1000])
    assert maclaurin_eval([0, 1], t, x) == float(evaluate(W, x))
    # all-ones coefficients give the exponential in the continuum; the binned
    # kernels carry an O(1/N) error
    assert abs(maclaurin_eval(np.ones(26), t, 1.0) - math.e) < 5e-3
    with pytest.raises(KernelError):
        maclaurin_eval(np.full(60, 1e30), t, 0.5)


def test_maclaurin_sine_pattern():
    from kreinfeller.gentrig import trig_eval
    W, V = two_site()
    t = diagonal_tables(W, V, 4)
    a = 1.7
    d = np.zeros(10)
    d[1::2] = [(-1) ** n * a ** (2 * n + 1) for n in range(5)]
    assert math.isclose(maclaurin_eval(d, t, 1.0), trig_eval(t, a, 1.0).s_wv, rel_tol=1e-14)


def test_errors():
    W, V = two_site()
    with pytest.raises(KernelError):
        diagonal_tables(W, V, 0)
    with pytest.raises(KernelError):
        diagonal_tables(V, W, 2)


def test_csv_export(tmp_path):
    W, V = two_site()
    t = diagonal_tables(W, V, 3)
    t.to_csv(tmp_path / "k.csv")
    rows = (tmp_path / "k.csv").read_text().splitlines()
    assert rows[0] == "n,F2n,F2n+1,G2n,G2n+1" and len(rows) == 5


def test_extrapolation_recovers_polynomial_limit():
    h = np.array([0.1, 0.05, 0.02, 0.01])
    y = 3.0 - 2.0 * h + 5.0 * h ** 2 - h ** 3
    assert math.isclose(extrapolate_to_zero(h, y), 3.0, rel_tol=1e-13)
    with pytest.raises(KernelError):
        extrapolate_to_zero([0.1, 0.1], [1.0, 2.0])


def test_coefficient_growth_classical_continuum():
    # (F+G)(N) (2n)!/2 is an even polynomial of degree 2n in 1/N; n+1 resolutions pin it
    nmax = 6
    Ns = [64 * (i + 1) for i in range(nmax + 1)]
    vals = np.array([coefficient_growth(diagonal_tables(*classical(N), nmax)) for N in Ns])
    for n in range(1, nmax + 1):
        lim = extrapolate_to_zero([1 / N ** 2 for N in Ns[: n + 1]], vals[: n + 1, n - 1])
        want = 2 * math.factorial(n) ** 2 / math.factorial(2 * n)
        assert math.isclose(lim, want, rel_tol=1e-10)
