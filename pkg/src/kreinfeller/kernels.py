"""Diagonal kernel sequences F_n(x, x), G_n(x, x) and their envelopes.

The diagonals obey the coupled one-step recursion

    F_n(x) = int_{(0,x]} G_{n-1} dW,    G_n(x) = int_{[0,x)} F_{n-1} dV,

with F_0 = G_0 = 1, so that F_1 = W and G_1 = V. Two steps of it give the
alternating double integral p_{n+1}(x) = int_{(0,x]} int_{[0,s)} p_n dV dW for
p_n = F_{2n}. Every F_n is a right-continuous step function with jumps at
W atoms, every G_n a left-continuous one with jumps at V atoms, so a table
stores the running sums at the atoms and evaluates exactly anywhere.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.special import gammainc

from .measure import LEFT, RIGHT, AtomicMeasure, MeasureError, compensated_cumsum


class KernelError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class KernelTable:
    order: int
    W: AtomicMeasure
    V: AtomicMeasure
    # F_cum[n, k] = F_n at (just after) the k-th W atom, with a leading 0 column
    F_cum: np.ndarray
    # G_cum[n, j] = G_n just after the j-th V atom, with a leading 0 column
    G_cum: np.ndarray
    F_at_1: np.ndarray
    G_at_1: np.ndarray

    @property
    def w_total(self) -> float:
        return self.W.total_mass

    @property
    def v_total(self) -> float:
        return self.V.total_mass

    @property
    def F2_total(self) -> float:
        return float(self.F_at_1[2])

    @property
    def G2_total(self) -> float:
        return float(self.G_at_1[2])

    @property
    def grid(self) -> np.ndarray:
        return np.union1d(np.union1d(self.W.positions, self.V.positions), [1.0])

    def F(self, n: int, x):
        """F_n(x, x), exact for the step data."""
        return self.F_cum[n][np.searchsorted(self.W.positions, x, side="right")]

    def G(self, n: int, x):
        """G_n(x, x), exact for the step data."""
        return self.G_cum[n][np.searchsorted(self.V.positions, x, side="left")]

    def F_even(self, x=None):
        x = self.grid if x is None else x
        return np.array([self.F(2 * n, x) for n in range(self.order + 1)])

    def F_odd(self, x=None):
        x = self.grid if x is None else x
        return np.array([self.F(2 * n + 1, x) for n in range(self.order + 1)])

    def G_even(self, x=None):
        x = self.grid if x is None else x
        return np.array([self.G(2 * n, x) for n in range(self.order + 1)])

    def G_odd(self, x=None):
        x = self.grid if x is None else x
        return np.array([self.G(2 * n + 1, x) for n in range(self.order + 1)])

    def termination_order(self) -> int | None:
        """Smallest n with F_{2n}(1,1) = G_{2n}(1,1) = 0, after which every
        diagonal vanishes identically; None if not reached within the table."""
        for n in range(1, self.order + 1):
            if self.F_at_1[2 * n] == 0.0 and self.G_at_1[2 * n] == 0.0:
                return n
        return None

    def to_csv(self, path) -> None:
        rows = ["n,F2n,F2n+1,G2n,G2n+1"]
        for n in range(self.order + 1):
            rows.append(f"{n},{self.F_at_1[2*n]!r},{self.F_at_1[2*n+1]!r},"
                        f"{self.G_at_1[2*n]!r},{self.G_at_1[2*n+1]!r}")
        Path(path).write_text("\n".join(rows) + "\n")


def diagonal_tables(W: AtomicMeasure, V: AtomicMeasure, K: int) -> KernelTable:
    """Diagonals F_k, G_k for k <= 2K+1 by prefix sums over the atoms."""
    if W.chirality != RIGHT or V.chirality != LEFT:
        raise KernelError("W must be right_continuous and V left_continuous")
    if K < 1:
        raise KernelError("order K must be at least 1")
    wp, wm = W.positions, W.masses
    vp, vm = V.positions, V.masses
    nmax = 2 * K + 1
    # where each V atom sits among W atoms (W atoms <= y) and vice versa (V atoms < w)
    w_before_v = np.searchsorted(wp, vp, side="right")
    v_before_w = np.searchsorted(vp, wp, side="left")

    F_cum = np.zeros((nmax + 1, wp.size + 1))
    G_cum = np.zeros((nmax + 1, vp.size + 1))
    F_cum[0] = 1.0
    G_cum[0] = 1.0
    F_at_1 = np.zeros(nmax + 1)
    G_at_1 = np.zeros(nmax + 1)
    F_at_1[0] = G_at_1[0] = 1.0

    G_on_w = np.ones(wp.size)   # G_{n-1} at W atoms (left limit convention)
    F_on_v = np.ones(vp.size)   # F_{n-1} at V atoms (right-continuous value)
    for n in range(1, nmax + 1):
        F_cum[n, 1:] = compensated_cumsum(G_on_w * wm)
        G_cum[n, 1:] = compensated_cumsum(F_on_v * vm)
        F_at_1[n] = math.fsum((G_on_w * wm).tolist())
        G_at_1[n] = math.fsum((F_on_v * vm).tolist())
        F_on_v = F_cum[n][w_before_v]
        G_on_w = G_cum[n][v_before_w]
    return KernelTable(K, W, V, F_cum, G_cum, F_at_1, G_at_1)


def secular_coefficients(t: KernelTable) -> np.ndarray:
    """a_n = (-1)^n (F_2n(1,1) + G_2n(1,1)) for n = 0..K, with a_0 = 0."""
    n = np.arange(t.order + 1)
    a = (-1.0) ** n * (t.F_at_1[0::2][: t.order + 1] + t.G_at_1[0::2][: t.order + 1])
    a[0] = 0.0
    return a


def envelope_base(t: KernelTable) -> tuple[float, float]:
    """(B, c1): F_2m, G_2m <= B^m/m! and F_2m+1, G_2m+1 <= c1 B^m/m! on [0,1]."""
    B = max(t.F2_total, t.G2_total)
    c1 = max(t.w_total, t.v_total, t.w_total * t.v_total)
    return B, c1


def remainder_bound(t: KernelTable, alpha: float, n: int) -> float:
    """Tail of the four trig series beyond order n (terms m >= n).

    Uses sum_{m>=n} (alpha^2 B)^m / m! * (1 + alpha*c1) with the regularized
    incomplete gamma function for the exponential remainder.
    """
    if alpha < 0:
        raise KernelError("alpha must be nonnegative")
    if n < 1:
        raise KernelError("n must be positive")
    stop = t.termination_order()
    if stop is not None and n >= stop:
        return 0.0
    if alpha == 0.0:
        return 0.0
    B, c1 = envelope_base(t)
    y = alpha * alpha * B
    if y == 0.0:
        return 0.0
    with np.errstate(over="ignore"):
        tail = math.exp(y) * float(gammainc(n, y)) if y < 700 else math.inf
    return tail * (1.0 + alpha * c1)


def term_envelope(t: KernelTable, k: int) -> float:
    B, c1 = envelope_base(t)
    m = k // 2
    base = math.exp(m * math.log(B) - math.lgamma(m + 1)) if B > 0 else float(m == 0)
    return base if k % 2 == 0 else c1 * base


def maclaurin_eval(d, t: KernelTable, x: float, tol: float = 1e-12) -> float:
    """d_0 + sum_k d_k F_k(x, x), truncated once the envelope tail is below tol."""
    d = np.asarray(d, dtype=float)
    kmax = 2 * t.order + 1
    env = np.array([term_envelope(t, k) for k in range(max(d.size, 1))])
    weighted = np.abs(d) * env
    # tail[k] = sum_{j >= k} |d_j| env_j
    tail = np.concatenate([np.cumsum(weighted[::-1])[::-1], [0.0]])
    if d.size > kmax + 1 and tail[kmax + 1] >= tol:
        raise KernelError("coefficients not summable to tol within the table order")
    stop = next((k for k in range(1, min(d.size, kmax + 1) + 1) if tail[k] < tol),
                min(d.size, kmax + 1))
    terms = [d[0]] + [d[k] * float(t.F(k, x)) for k in range(1, stop)]
    return math.fsum(terms)


def brute_force_diagonal(W: AtomicMeasure, V: AtomicMeasure, n: int, x: float, which="F"):
    """Direct evaluation of F_n(x, x) or G_n(x, x) from the two-variable
    definitions, by nested sums over atoms (exponential cost; tests only)."""
    from functools import lru_cache

    wp, wm = W.positions.tolist(), W.masses.tolist()
    vp, vm = V.positions.tolist(), V.masses.tolist()

    def W_(s):
        return math.fsum(m for p, m in zip(wp, wm) if p <= s)

    def V_(s):
        return math.fsum(m for p, m in zip(vp, vm) if p < s)

    @lru_cache(maxsize=None)
    def F(k, s):
        if k == 0:
            return 1.0
        if k == 1:
            return W_(s)
        if k % 2 == 0:
            return math.fsum((F(k - 1, x) - F(k - 1, p)) * m for p, m in zip(vp, vm) if p < s)
        return math.fsum((F(k - 1, x) - F(k - 1, p)) * m for p, m in zip(wp, wm) if 0 < p <= s)

    @lru_cache(maxsize=None)
    def G(k, s):
        if k == 0:
            return 1.0
        if k == 1:
            return V_(s)
        if k % 2 == 0:
            return math.fsum((G(k - 1, x) - G(k - 1, p)) * m for p, m in zip(wp, wm) if 0 < p <= s)
        return math.fsum((G(k - 1, x) - G(k - 1, p)) * m for p, m in zip(vp, vm) if p < s)

    return F(n, x) if which == "F" else G(n, x)


def extrapolate_to_zero(h, values) -> float:
    """Value at h = 0 of the polynomial through (h_i, values_i) (Neville).

    Used to pass from a family of binned measures to their continuum limit,
    e.g. with h = 1/N^2 for uniform binning at resolution N.
    """
    h = np.asarray(h, float)
    P = np.array(values, dtype=float)
    n = h.size
    if P.shape != h.shape or n == 0:
        raise KernelError("need matching, nonempty node and value arrays")
    if np.unique(h).size != n:
        raise KernelError("extrapolation nodes must be distinct")
    for k in range(1, n):
        P[: n - k] = (h[k:] * P[: n - k] - h[: n - k] * P[1 : n - k + 1]) / (h[k:] - h[: n - k])
    return float(P[0])


def coefficient_growth(t: KernelTable) -> np.ndarray:
    """(n!)^2 |F_2n(1,1) + G_2n(1,1)| for n = 1..K (zero once the series ends)."""
    n = np.arange(1, t.order + 1)
    lf = np.array([math.lgamma(k + 1) for k in n])
    a = np.abs(secular_coefficients(t)[1:])
    with np.errstate(divide="ignore"):
        return np.where(a > 0, np.exp(2.0 * lf + np.log(np.where(a > 0, a, 1.0))), 0.0)


def growth_slope(t: KernelTable) -> float:
    """Least-squares slope of ln((n!)^2 |a_n|) against n over the nonzero terms."""
    g = coefficient_growth(t)
    n = np.arange(1, g.size + 1)
    keep = g > 0
    if keep.sum() < 2:
        raise KernelError("fewer than two nonzero coefficients")
    return float(np.polyfit(n[keep], np.log(g[keep]), 1)[0])
