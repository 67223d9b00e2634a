import json
import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from helpers import classical, free_measures
from kreinfeller.measure import (LEFT, RIGHT, AtomicMeasure, MeasureError, MeasureSpec,
                                 cantor_spec, compensated_cumsum, compile_measure,
                                 discrete_derivative, evaluate, from_atoms, interval_mass,
                                 read_csv, stieltjes_sum, uniform_spec, write_csv)

CLOSURES = ("left_open_right_closed", "left_closed_right_open", "closed", "open")


def test_uniform_resolution_4():
    m = compile_measure(uniform_spec(), 4)
    np.testing.assert_array_equal(m.positions, [1 / 8, 3 / 8, 5 / 8, 7 / 8])
    np.testing.assert_array_equal(m.masses, [0.25] * 4)
    assert m.resolution == 4 and m.origin_spec_digest


def test_pure_atoms_unchanged():
    spec = MeasureSpec([{"kind": "atoms", "atoms": [[0.25, 0.5], [0.75, 0.5]]}], RIGHT)
    m = compile_measure(spec, 7)
    np.testing.assert_array_equal(m.positions, [0.25, 0.75])
    np.testing.assert_array_equal(m.masses, [0.5, 0.5])


def test_cantor_depth_3():
    m = compile_measure(cantor_spec(3), 1)
    # left endpoints of the depth-3 triadic intervals, in units of 1/27
    lefts = np.array([0, 2, 6, 8, 18, 20, 24, 26]) / 27
    np.testing.assert_allclose(m.positions, lefts + 1 / 54, rtol=0, atol=1e-15)
    np.testing.assert_array_equal(m.masses, [1 / 8] * 8)


def test_piecewise_linear_mass_and_bins():
    spec = MeasureSpec([{"kind": "piecewise_linear", "breakpoints": [0, 0.5, 1],
                         "slopes": [1.0, 3.0]}], RIGHT)
    m = compile_measure(spec, 8)
    assert math.isclose(m.total_mass, 2.0)
    # four bins of mass 1/4 fall in [0, 0.5), four in [0.5, 1)
    assert np.sum(m.positions < 0.5) == 2 and np.sum(m.positions >= 0.5) == 6


def test_coinciding_atoms_merge():
    spec = MeasureSpec([{"kind": "uniform"}, {"kind": "atoms", "atoms": [[0.125, 1.0]]}], RIGHT)
    m = compile_measure(spec, 4)
    assert m.n == 4
    assert m.masses[0] == 1.25


@pytest.mark.parametrize("spec", [
    {"components": [{"kind": "atoms", "atoms": [[0.2, 0.0]]}]},
    {"components": [{"kind": "atoms", "atoms": [[0.2, 1.0], [0.2, 1.0]]}]},
    {"components": [{"kind": "atoms", "atoms": [[1.0, 1.0]]}]},
    {"components": [{"kind": "ifs_self_similar", "ratios": [1.2, 0.3], "weights": [1, 1], "depth": 2}]},
    {"components": [{"kind": "piecewise_linear", "breakpoints": [0, 0.7, 0.5, 1], "slopes": [1, 1, 1]}]},
    {"components": [{"kind": "uniform", "mass": -1}]},
    {"components": []},
    {"components": [{"kind": "atoms", "atoms": [[0.0, 1.0]]}], "chirality": RIGHT},
    {"components": [{"kind": "blob"}]},
])
def test_invalid_specs(spec):
    with pytest.raises(MeasureError):
        compile_measure(MeasureSpec.from_dict(spec), 4)


def test_bad_resolution():
    with pytest.raises(MeasureError):
        compile_measure(uniform_spec(), 0)


def test_atom_at_origin_allowed_for_v():
    spec = MeasureSpec([{"kind": "atoms", "atoms": [[0.0, 1.0]]}], LEFT)
    m = compile_measure(spec, 1)
    assert evaluate(m, 0.0) == 0.0 and evaluate(m, 0.0, "opposite_limit") == 1.0


def test_eval_single_atom():
    m = from_atoms([0.5], [1.0], RIGHT)
    assert evaluate(m, 0.5) == 1.0
    assert evaluate(m, 0.5, "opposite_limit") == 0.0
    v = from_atoms([0.5], [1.0], LEFT)
    assert evaluate(v, 0.5) == 0.0
    assert evaluate(v, 0.5, "opposite_limit") == 1.0
    assert evaluate(m, 0.0) == 0.0 and evaluate(m, 1.0) == 1.0


@pytest.mark.parametrize("n", [1, 7, 64, 1000])
def test_uniform_eval_error(n):
    m = compile_measure(uniform_spec(), n)
    x = np.linspace(0, 1, 2001)
    assert np.max(np.abs(evaluate(m, x) - x)) <= 1 / (2 * n) + 1e-15


def test_periodic_extension_increment():
    m = compile_measure(cantor_spec(4), 1)
    x = np.linspace(0, 1, 33)
    unrolled = lambda t: math.floor(t) * m.total_mass + evaluate(m, t - math.floor(t))  # noqa: E731
    for t in x:
        assert math.isclose(unrolled(t + 1) - unrolled(t), m.total_mass, rel_tol=1e-15)


def test_interval_mass_examples():
    m = from_atoms([0.5], [1.0], RIGHT)
    assert interval_mass(m, 0.4, 0.5, "left_open_right_closed") == 1.0
    assert interval_mass(m, 0.5, 0.6, "left_closed_right_open") == 1.0
    assert interval_mass(m, 0.5, 0.6, "left_open_right_closed") == 0.0
    assert interval_mass(m, 0.5, 0.5, "open") == 0.0
    assert interval_mass(m, 0.5, 0.5, "closed") == 1.0
    with pytest.raises(MeasureError):
        interval_mass(m, 0.6, 0.5)


@given(free_measures(RIGHT), st.floats(0, 1), st.floats(0, 1), st.floats(0, 1))
def test_interval_mass_additive(m, a, b, c):
    a, b, c = sorted((a, b, c))
    # (a, b] + (b, c] = (a, c], and [a, b) + [b, c) = [a, c), bitwise on the masked atoms
    lhs = np.concatenate([m.masses[(m.positions > a) & (m.positions <= b)],
                          m.masses[(m.positions > b) & (m.positions <= c)]])
    assert math.fsum(lhs.tolist()) == interval_mass(m, a, c, "left_open_right_closed")
    s1 = interval_mass(m, a, b, "left_closed_right_open") + interval_mass(m, b, c, "left_closed_right_open")
    assert math.isclose(s1, interval_mass(m, a, c, "left_closed_right_open"), rel_tol=1e-15, abs_tol=1e-15)


@given(free_measures(RIGHT), free_measures(LEFT))
def test_eval_monotone_and_one_sided(w, v):
    for m in (w, v):
        pts = np.sort(np.concatenate([m.positions, (m.positions[:-1] + m.positions[1:]) / 2, [0, 1]]))
        vals = evaluate(m, pts)
        assert np.all(np.diff(vals) >= 0)
    # right continuity of W at its atoms: value equals the limit from the right
    assert np.all(evaluate(w, w.positions) == evaluate(w, np.nextafter(w.positions, 1)))
    assert np.all(evaluate(v, v.positions) == evaluate(v, np.nextafter(v.positions, 0)))


@given(st.integers(1, 400))
def test_refinement_sup_norm(n):
    a = compile_measure(uniform_spec(), n)
    b = compile_measure(uniform_spec(), 2 * n)
    x = np.concatenate([a.positions, b.positions, np.linspace(0, 1, 101)])
    assert np.max(np.abs(evaluate(a, x) - evaluate(b, x))) <= 1 / (2 * n) + 1e-15


def test_stieltjes_examples():
    W, V = classical(512)
    assert math.isclose(stieltjes_sum(np.ones(W.n), W, 0, 1), 1.0, rel_tol=1e-15)
    # int_(0,1] V dW -> 1/2
    assert abs(stieltjes_sum(evaluate(V, W.positions), W) - 0.5) <= 1 / (2 * 512)
    with pytest.raises(MeasureError):
        stieltjes_sum(np.ones(3), W)


@given(free_measures(RIGHT), st.floats(0, 1), st.floats(0, 1), st.floats(0, 1))
def test_stieltjes_additive(m, a, b, c):
    a, b, c = sorted((a, b, c))
    f = np.sin(7 * m.positions) + 2
    s = stieltjes_sum(f, m, a, b) + stieltjes_sum(f, m, b, c)
    assert math.isclose(s, stieltjes_sum(f, m, a, c), rel_tol=1e-14, abs_tol=1e-14)


@given(free_measures(RIGHT), free_measures(LEFT), st.data())
def test_integration_by_parts(w, v, data):
    # f jumps at V atoms (left continuous), g jumps at W atoms (right continuous)
    dv = np.array(data.draw(st.lists(st.floats(-3, 3), min_size=v.n, max_size=v.n)))
    dw = np.array(data.draw(st.lists(st.floats(-3, 3), min_size=w.n, max_size=w.n)))
    f0, g0 = 0.7, -1.3
    a, b = sorted(data.draw(st.tuples(st.floats(0, 1), st.floats(0, 1))))
    f = lambda x: f0 + np.sum(dv[v.positions < x])   # noqa: E731
    g = lambda x: g0 + np.sum(dw[w.positions <= x])  # noqa: E731
    g_at_v = np.array([g(y) for y in v.positions])
    f_at_w = np.array([f(u) for u in w.positions])
    lhs = stieltjes_sum(g_at_v * dv / v.masses, v, a, b)
    rhs = stieltjes_sum(f_at_w * dw / w.masses, w, a, b)
    resid = lhs - (f(b) * g(b) - f(a) * g(a)) + rhs
    assert abs(resid) <= 1e-12 * (1 + np.sum(np.abs(dv)) + np.sum(np.abs(dw))) ** 2


def test_discrete_derivative_examples():
    W = compile_measure(cantor_spec(5), 1)
    np.testing.assert_allclose(discrete_derivative(evaluate(W, W.positions), W, boundary=0.0), 1.0)
    assert np.all(discrete_derivative(np.full(W.n, 3.0), W) == 0.0)
    with pytest.raises(MeasureError):
        discrete_derivative([1.0], from_atoms([0.5], [1.0]))


def test_csv_round_trip(tmp_path):
    m = compile_measure(cantor_spec(4, LEFT), 1)
    write_csv(m, tmp_path / "m.csv")
    r = read_csv(tmp_path / "m.csv")
    np.testing.assert_array_equal(r.positions, m.positions)
    np.testing.assert_array_equal(r.masses, m.masses)
    assert r.chirality == LEFT and r.origin_spec_digest == m.origin_spec_digest


def test_spec_json_round_trip_and_digest():
    spec = cantor_spec(6)
    again = MeasureSpec.from_json(spec.to_json())
    assert again.digest() == spec.digest()
    reordered = json.loads(spec.to_json())
    reordered = {k: reordered[k] for k in sorted(reordered, reverse=True)}
    assert MeasureSpec.from_dict(reordered).digest() == spec.digest()


def test_atomic_measure_rejects_bad_input():
    with pytest.raises(MeasureError):
        AtomicMeasure(np.array([0.5, 0.2]), np.array([1.0, 1.0]), RIGHT)
    with pytest.raises(MeasureError):
        AtomicMeasure(np.array([0.0]), np.array([1.0]), RIGHT)
    with pytest.raises(MeasureError):
        AtomicMeasure(np.array([0.5]), np.array([-1.0]), LEFT)


def test_compensated_cumsum_exact_on_cancellation():
    vals = [1e16, 1.0, -1e16, 1.0]
    assert compensated_cumsum(vals)[-1] == 2.0


@given(free_measures(RIGHT))
def test_total_mass_is_sum(m):
    assert m.total_mass == math.fsum(m.masses.tolist())
    assert evaluate(m, 1.0) == pytest.approx(m.total_mass, rel=1e-15)
