"""Generalized trigonometric functions C_WV, S_WV, C_VW, S_VW.

    C_WV(a, x) = sum_n (-1)^n a^(2n)   F_2n(x, x)
    S_WV(a, x) = sum_n (-1)^n a^(2n+1) F_2n+1(x, x)

and C_VW, S_VW with G in place of F.

Two evaluation routes share one result type. The series route sums the
kernel table with a certified tail. For atomic data the series is a finite
sum, and the same finite sum can be reorganised as a product of 2x2 shear
matrices, one per atom (the "transfer" route). Its rounding stays at
machine precision when the alternating series would cancel
catastrophically (large alpha^2 F_2).
"""
from __future__ import annotations

import math
from fractions import Fraction
from dataclasses import dataclass

import numpy as np

from .kernels import KernelError, KernelTable, remainder_bound
from .measure import AtomicMeasure, discrete_derivative

EPS = np.finfo(float).eps


@dataclass(frozen=True)
class TrigEval:
    alpha: float
    x: float
    c_wv: float
    s_wv: float
    c_vw: float
    s_vw: float
    err_bound: float
    terms_used: int
    method: str = "series"

    def as_row(self):
        return (self.alpha, self.x, self.c_wv, self.s_wv, self.c_vw, self.s_vw, self.err_bound)


def default_tol(t: KernelTable, alpha: float) -> float:
    return 1e-12 * max(1.0, alpha * alpha * t.F2_total)


# ---------------------------------------------------------------- transfer route

@dataclass(frozen=True, eq=False)
class EventList:
    """W and V atoms merged into one sweep order; W before V on ties."""
    pos: np.ndarray
    mass: np.ndarray
    is_w: np.ndarray

    @classmethod
    def build(cls, W: AtomicMeasure, V: AtomicMeasure) -> "EventList":
        pos = np.concatenate([W.positions, V.positions])
        mass = np.concatenate([W.masses, V.masses])
        kind = np.concatenate([np.zeros(W.n, int), np.ones(V.n, int)])
        order = np.lexsort((kind, pos))
        return cls(pos[order], mass[order], kind[order] == 0)

    def cutoff(self, x) -> np.ndarray:
        """Number of events that determine the four functions at x: all atoms
        below x plus a W atom sitting exactly at x."""
        x = np.atleast_1d(np.asarray(x, float))
        k = np.searchsorted(self.pos, x, side="left")
        kk = np.minimum(k, self.pos.size - 1)
        at_x = (k < self.pos.size) & (self.pos[kk] == x) & self.is_w[kk]
        return k + at_x


def _shear_matrices(ev: EventList, alphas: np.ndarray) -> np.ndarray:
    """Step matrices T_k of shape (B, E, 2, 2) acting on the state
    [[C_WV, S_WV], [S_VW, -C_VW]] by left multiplication."""
    B, E = alphas.size, ev.pos.size
    h = alphas[:, None] * ev.mass[None, :]
    T = np.zeros((B, E, 2, 2))
    T[..., 0, 0] = 1.0
    T[..., 1, 1] = 1.0
    T[:, ev.is_w, 0, 1] = -h[:, ev.is_w]
    T[:, ~ev.is_w, 1, 0] = h[:, ~ev.is_w]
    return T


def monodromy(ev: EventList, alphas) -> np.ndarray:
    """Ordered product T_E ... T_1 for each alpha, by pairwise reduction."""
    alphas = np.atleast_1d(np.asarray(alphas, float))
    T = _shear_matrices(ev, alphas)
    while T.shape[1] > 1:
        if T.shape[1] % 2:
            eye = np.broadcast_to(np.eye(2), (T.shape[0], 1, 2, 2))
            T = np.concatenate([T, eye], axis=1)
        T = T[:, 1::2] @ T[:, 0::2]
    return T[:, 0]


def transfer_values(ev: EventList, alphas, xs):
    """Four functions at every (alpha, x): arrays of shape (B, Q), plus a
    rounding bound on the Pythagorean combination."""
    alphas = np.atleast_1d(np.asarray(alphas, float))
    xs = np.atleast_1d(np.asarray(xs, float))
    cuts = ev.cutoff(xs)
    order = np.argsort(cuts, kind="stable")
    B, Q = alphas.size, xs.size
    out = np.zeros((4, B, Q))
    rnd = np.zeros((B, Q))
    # state rows: (c_wv, s_wv) and (s_vw, -c_vw)
    a0 = np.ones(B)
    a1 = np.zeros(B)
    b0 = np.zeros(B)
    b1 = -np.ones(B)
    acc = np.zeros(B)
    qi = 0
    E = ev.pos.size
    mass = ev.mass.tolist()
    isw = ev.is_w.tolist()
    for k in range(E + 1):
        while qi < Q and cuts[order[qi]] == k:
            q = order[qi]
            out[0, :, q], out[1, :, q], out[2, :, q], out[3, :, q] = a0, a1, -b1, b0
            rnd[:, q] = acc
            qi += 1
        if k == E:
            break
        h = alphas * mass[k]
        if isw[k]:
            a0 = a0 - h * b0
            a1 = a1 - h * b1
        else:
            b0 = b0 + h * a0
            b1 = b1 + h * a1
        acc = acc + (1.0 + h) * (a0 * a0 + a1 * a1 + b0 * b0 + b1 * b1)
    return out[0], out[1], out[2], out[3], 4.0 * EPS * rnd


def state_at_v_atoms(ev: EventList, alphas):
    """S_WV and C_WV at every V atom (right-continuous values) and at x = 1,
    used for oscillation counting and eigenfunction sampling."""
    alphas = np.atleast_1d(np.asarray(alphas, float))
    B = alphas.size
    nv = int((~ev.is_w).sum())
    c_at = np.zeros((B, nv))
    s_at = np.zeros((B, nv))
    a0 = np.ones(B)
    a1 = np.zeros(B)
    b0 = np.zeros(B)
    b1 = -np.ones(B)
    j = 0
    mass = ev.mass.tolist()
    for k, w in enumerate(ev.is_w.tolist()):
        h = alphas * mass[k]
        if w:
            a0 = a0 - h * b0
            a1 = a1 - h * b1
        else:
            c_at[:, j] = a0
            s_at[:, j] = a1
            j += 1
            b0 = b0 + h * a0
            b1 = b1 + h * a1
    return c_at, s_at, a0, a1, b0, -b1


# ------------------------------------------------------------------ series route

def _series_terms(t: KernelTable, alpha: float, x: float, nterms: int):
    n = np.arange(nterms)
    sign = (-1.0) ** n
    with np.errstate(over="ignore", invalid="ignore"):
        p_even = alpha ** (2 * n)
        p_odd = alpha ** (2 * n + 1)
    Fe = np.array([t.F(2 * k, x) for k in n], float)
    Fo = np.array([t.F(2 * k + 1, x) for k in n], float)
    Ge = np.array([t.G(2 * k, x) for k in n], float)
    Go = np.array([t.G(2 * k + 1, x) for k in n], float)
    return [sign * p_even * Fe, sign * p_odd * Fo, sign * p_even * Ge, sign * p_odd * Go]


def _series_rounding(terms) -> float:
    # each term carries O((2m+2) eps) relative error from powers and prefix sums
    weight = 4.0 * EPS * (2.0 * np.arange(terms[0].size) + 2.0)
    return max(float(np.sum(np.abs(tm) * weight)) for tm in terms)


def series_trig(t: KernelTable, alpha: float, x: float, tol: float) -> TrigEval:
    if alpha == 0.0:
        return TrigEval(0.0, x, 1.0, 0.0, 1.0, 0.0, 0.0, 1, "series")
    stop = None
    for n in range(1, t.order + 2):
        if remainder_bound(t, alpha, n) < tol:
            stop = n
            break
    if stop is None:
        raise KernelError(f"table order {t.order} too small for alpha={alpha}, tol={tol}")
    terms = _series_terms(t, alpha, x, stop)
    tail = remainder_bound(t, alpha, stop)
    vals = [math.fsum(tm.tolist()) for tm in terms]
    err = tail + _series_rounding(terms)
    return TrigEval(alpha, x, vals[0], vals[1], vals[2], vals[3], err, stop, "series")


def _series_cost(t: KernelTable, alpha: float, tol: float):
    """(order needed, rounding estimate) using the envelope instead of the
    table, to decide whether the series route can meet tol."""
    for n in range(1, t.order + 2):
        if remainder_bound(t, alpha, n) < tol:
            break
    else:
        return None, math.inf
    B = max(t.F2_total, t.G2_total)
    y = alpha * alpha * B
    # sum_m |term_m| is at most (1+alpha c1) e^y; weight grows like 2m+2
    return n, 4.0 * EPS * (2.0 * n + 2.0) * math.exp(min(y, 700.0)) * (1.0 + alpha * max(t.w_total, t.v_total, 1.0))


def trig_eval(t: KernelTable, alpha: float, x: float, tol: float | None = None,
              method: str = "auto", events: EventList | None = None) -> TrigEval:
    """The four generalized trig functions at (alpha, x).

    method: "series" (kernel table, certified tail), "transfer" (exact finite
    product over atoms) or "auto" (series when its tail and cancellation
    estimate both meet tol and the table does not terminate, transfer
    otherwise).
    """
    if alpha < 0:
        raise KernelError("alpha must be nonnegative")
    if not 0.0 <= x <= 1.0:
        raise KernelError("x must lie in [0, 1]")
    tol = default_tol(t, alpha) if tol is None else tol
    if alpha == 0.0:
        return TrigEval(0.0, x, 1.0, 0.0, 1.0, 0.0, 0.0, 1, "exact")
    if method == "auto":
        # a terminated table is exact either way; the atom product rounds less
        n, rnd = _series_cost(t, alpha, tol)
        exact = t.termination_order() is not None
        method = "series" if n is not None and rnd < tol and not exact else "transfer"
    if method == "series":
        return series_trig(t, alpha, x, tol)
    if method != "transfer":
        raise KernelError(f"unknown method {method!r}")
    ev = events or EventList.build(t.W, t.V)
    c1, s1, c2, s2, rnd = transfer_values(ev, [alpha], [x])
    return TrigEval(alpha, x, float(c1[0, 0]), float(s1[0, 0]), float(c2[0, 0]),
                    float(s2[0, 0]), float(rnd[0, 0]), int(ev.cutoff([x])[0]), "transfer")


def pythagorean_residual(t: KernelTable, alpha: float, x: float, **kw) -> float:
    r = trig_eval(t, alpha, x, **kw)
    # exact combination: the products alone can be ~|C|^2 ulp off
    s = Fraction(r.c_wv) * Fraction(r.c_vw) + Fraction(r.s_wv) * Fraction(r.s_vw) - 1
    return abs(float(s))


def derivative_relation_residual(t: KernelTable, W: AtomicMeasure, V: AtomicMeasure,
                                 alpha: float) -> float:
    """Max violation of D_W^- C_WV = -a S_VW, D_W^- S_WV = a C_VW,
    D_V^+ C_VW = -a S_WV, D_V^+ S_VW = a C_WV over the atoms."""
    if alpha == 0.0:
        return 0.0
    ev = EventList.build(W, V)
    cw, sw, cv, sv, _ = transfer_values(ev, [alpha], W.positions)
    cwv, swv, cvw, svw = cw[0], sw[0], cv[0], sv[0]
    r1 = discrete_derivative(cwv, W, boundary=1.0) + alpha * svw
    r2 = discrete_derivative(swv, W, boundary=0.0) - alpha * cvw
    cw, sw, cv, sv, _ = transfer_values(ev, [alpha], V.positions)
    cwv, swv, cvw, svw = cw[0], sw[0], cv[0], sv[0]
    end = trig_eval(t, alpha, 1.0, method="transfer", events=ev)
    r3 = discrete_derivative(cvw, V, boundary=end.c_vw) + alpha * swv
    r4 = discrete_derivative(svw, V, boundary=end.s_vw) - alpha * cwv
    return float(max(np.max(np.abs(r)) for r in (r1, r2, r3, r4)))
