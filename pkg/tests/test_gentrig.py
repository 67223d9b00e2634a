import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from helpers import atomic_pairs, cantor_pair, classical, two_site
from kreinfeller.gentrig import (EventList, _series_terms, derivative_relation_residual,
                                 pythagorean_residual, series_trig, trig_eval)
from kreinfeller.kernels import KernelError, diagonal_tables
from kreinfeller.spectrum import solve_spectrum


@pytest.fixture(scope="module")
def classical_table():
    W, V = classical(1024)
    return diagonal_tables(W, V, 120)


def test_alpha_zero_exact(classical_table):
    for method in ("auto", "series", "transfer"):
        r = trig_eval(classical_table, 0.0, 0.3, method=method)
        assert (r.c_wv, r.s_wv, r.c_vw, r.s_vw) == (1.0, 0.0, 1.0, 0.0)
    assert pythagorean_residual(classical_table, 0.0, 0.7) == 0.0


@pytest.mark.parametrize("method", ["series", "transfer"])
def test_classical_pi(classical_table, method):
    r = trig_eval(classical_table, math.pi, 1.0, method=method)
    # binning at N = 1024 moves the values by O(1/N^2) for C and O(1/N^2) for S here
    np.testing.assert_allclose([r.c_wv, r.s_wv, r.c_vw, r.s_vw], [-1, 0, -1, 0], atol=1e-5)


def test_classical_matches_cos_sin(classical_table):
    W = classical_table.W
    for x in (0.25, 0.5, 0.75):
        xg = float(W.positions[np.searchsorted(W.positions, x)])
        r = trig_eval(classical_table, 2.0, xg)
        assert abs(r.c_wv - math.cos(2 * xg)) < 5e-3
        assert abs(r.s_wv - math.sin(2 * xg)) < 5e-3


def test_series_and_transfer_agree(classical_table):
    for a in (0.5, 3.0, 6.0):
        s = trig_eval(classical_table, a, 0.61, method="series")
        t = trig_eval(classical_table, a, 0.61, method="transfer")
        for u, v in zip(s.as_row()[2:6], t.as_row()[2:6]):
            assert abs(u - v) <= s.err_bound + t.err_bound + 1e-13


def test_pythagorean_classical_random(classical_table):
    rng = np.random.default_rng(11)
    for a, x in zip(rng.uniform(0, 20, 100), rng.uniform(0, 1, 100)):
        r = trig_eval(classical_table, a, x)
        assert abs(r.c_wv * r.c_vw + r.s_wv * r.s_vw - 1) <= 2 * r.err_bound


@given(atomic_pairs(1, 8), st.floats(0, 20), st.floats(0, 1))
def test_pythagorean_atomic(pair, a, x):
    W, V = pair
    t = diagonal_tables(W, V, 10)
    assert pythagorean_residual(t, a, x) <= 1e-10


@given(atomic_pairs(2, 8), st.floats(0, 20))
def test_derivative_relations_atomic(pair, a):
    W, V = pair
    t = diagonal_tables(W, V, 10)
    assert derivative_relation_residual(t, W, V, a) <= 1e-9 * max(1.0, a) ** 2


def test_derivative_relations_classical():
    # the relations hold exactly for the binned data, at every resolution
    for n in (512, 1024, 4096):
        W, V = classical(n)
        t = diagonal_tables(W, V, 2)
        assert derivative_relation_residual(t, W, V, 0.0) == 0.0
        assert derivative_relation_residual(t, W, V, 2 * math.pi) <= 1e-9


def test_err_bound_is_a_bound():
    W, V = cantor_pair(6, 256)
    short = diagonal_tables(W, V, 30)
    long = diagonal_tables(W, V, 60)
    for a in (1.0, 2.0, 3.0):
        r1 = series_trig(short, a, 1.0, 1e-9)
        r2 = series_trig(long, a, 1.0, 1e-9)
        for u, v in zip(r1.as_row()[2:6], r2.as_row()[2:6]):
            assert abs(u - v) <= r1.err_bound + r2.err_bound


def test_parity_structure(classical_table):
    for a in (0.7, 2.5):
        plus = _series_terms(classical_table, a, 0.8, 12)
        minus = _series_terms(classical_table, -a, 0.8, 12)
        np.testing.assert_array_equal(plus[0], minus[0])     # C_WV even
        np.testing.assert_array_equal(plus[2], minus[2])     # C_VW even
        np.testing.assert_array_equal(plus[1], -minus[1])    # S_WV odd
        np.testing.assert_array_equal(plus[3], -minus[3])    # S_VW odd


def test_boundary_consistency_at_eigenvalues():
    W, V = cantor_pair(5, 256)
    t = diagonal_tables(W, V, 4)
    spec = solve_spectrum(t, "periodic", 12)
    ev = EventList.build(W, V)
    for lam in spec.eigenvalues[1:]:
        r = trig_eval(t, math.sqrt(lam), 1.0, method="transfer", events=ev)
        scale = max(1.0, abs(r.c_wv) + abs(r.c_vw))
        assert abs(r.c_wv + r.c_vw - 2) <= 1e-9 * scale


def test_two_site_secular_polynomial():
    W, V = two_site()
    t = diagonal_tables(W, V, 4)
    for lam in (3.0, 16.0, 40.0):
        r = trig_eval(t, math.sqrt(lam), 1.0, method="series", tol=1e-14)
        assert math.isclose(r.c_wv + r.c_vw - 2, -lam + lam ** 2 / 16, rel_tol=1e-12, abs_tol=1e-12)


def test_errors(classical_table):
    with pytest.raises(KernelError):
        trig_eval(classical_table, -1.0, 0.5)
    with pytest.raises(KernelError):
        trig_eval(classical_table, 1.0, 1.5)
    with pytest.raises(KernelError):
        trig_eval(classical_table, 1.0, 0.5, method="nope")
    W, V = classical(256)
    shallow = diagonal_tables(W, V, 2)
    with pytest.raises(KernelError):
        series_trig(shallow, 20.0, 1.0, 1e-12)
