"""Green kernel of the operator pinned at the origin, and its trace.

The kernel is the covariance of the W-Brownian bridge,

    k(t, s) = W(t ^ s) - W(t) W(s) / W(1),

and K f(t) = int k(t, s) f(s) dV(s) inverts minus the pinned Laplacian, so
tr K = sum_j k(y_j, y_j) v_j equals the sum of reciprocal Dirichlet
eigenvalues.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .measure import LEFT, RIGHT, AtomicMeasure, evaluate


class DirichletError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class BridgeKernel:
    W: AtomicMeasure

    def __post_init__(self):
        if self.W.chirality != RIGHT:
            raise DirichletError("the bridge kernel needs a right_continuous W")
        if not self.W_total > 0:
            raise DirichletError("W must carry positive mass")

    @property
    def W_total(self) -> float:
        return self.W.total_mass


def bridge_kernel(k: BridgeKernel, t, s):
    """W(t ^ s) - W(t) W(s) / W(1), with cadlag evaluation of W."""
    t = np.asarray(t, float)
    s = np.asarray(s, float)
    Wt = evaluate(k.W, t)
    Ws = evaluate(k.W, s)
    # W is monotone, so W(min(t, s)) = min(W(t), W(s)); written this way the
    # formula is symmetric in its arguments bit for bit
    out = np.minimum(Wt, Ws) - Wt * Ws / k.W_total
    return float(out) if out.ndim == 0 else out


def _check_v(V: AtomicMeasure):
    if V.chirality != LEFT:
        raise DirichletError("V must be left_continuous")


def green_matrix(k: BridgeKernel, V: AtomicMeasure) -> np.ndarray:
    """k(y_j, y_l) over the V atoms."""
    _check_v(V)
    y = V.positions
    return bridge_kernel(k, y[:, None], y[None, :])


def green_apply(k: BridgeKernel, V: AtomicMeasure, f, dense_limit: int = 4096) -> np.ndarray:
    """(K f)(y_j) = sum_l k(y_j, y_l) f(y_l) v_l.

    Dense up to `dense_limit` atoms, by prefix sums beyond:
    K f(t) = sum_{s<=t} W(s) f v + W(t) sum_{s>t} f v - W(t)/W(1) sum W(s) f v.
    """
    _check_v(V)
    f = np.asarray(f, float)
    if f.shape != (V.n,):
        raise DirichletError(f"f has shape {f.shape}, expected ({V.n},)")
    fv = f * V.masses
    if V.n <= dense_limit:
        return green_matrix(k, V) @ fv
    Wy = evaluate(k.W, V.positions)
    below = np.cumsum(Wy * fv)
    above = np.concatenate([np.cumsum(fv[::-1])[::-1][1:], [0.0]])
    return below + Wy * above - Wy / k.W_total * below[-1]


def trace(k: BridgeKernel, V: AtomicMeasure) -> float:
    """sum_j (W(y_j) - W(y_j)^2 / W(1)) v_j."""
    _check_v(V)
    Wy = evaluate(k.W, V.positions)
    return math.fsum(((Wy - Wy * Wy / k.W_total) * V.masses).tolist())


def trace_report(k: BridgeKernel, V: AtomicMeasure, eigenvalues) -> dict:
    """Trace against the reciprocal eigenvalue sum of a (possibly partial)
    Dirichlet spectrum."""
    lam = np.asarray(eigenvalues, float)
    if np.any(lam <= 0):
        raise DirichletError("Dirichlet eigenvalues must be positive")
    tr = trace(k, V)
    partial = math.fsum((1.0 / lam).tolist())
    return {"trace_integral": tr, "partial_eigen_sum": partial,
            "relative_gap": abs(tr - partial) / tr}


def _sorted_values(spec_or_values):
    lam = getattr(spec_or_values, "eigenvalues", spec_or_values)
    return np.sort(np.asarray(lam, float))


def minmax_check(periodic, dirich, rtol: float = 1e-9) -> dict:
    """k-th smallest periodic eigenvalue (counting lam_0 = 0) against the k-th
    smallest Dirichlet one, for every k available in both lists.

    Accepts Spectrum objects (then both must come from the same measures) or
    plain eigenvalue arrays. Comparisons allow a relative slack `rtol` for
    cases of equality such as the classical 4 pi^2 <= 4 pi^2.
    """
    dp = getattr(periodic, "measure_digest", None)
    dd = getattr(dirich, "measure_digest", None)
    if dp and dd and dp != dd:
        raise DirichletError("spectra come from different measures")
    lp = _sorted_values(periodic)
    ld = _sorted_values(dirich)
    n = min(lp.size, ld.size)
    slack = rtol * np.maximum(np.abs(ld[:n]), 1.0)
    holds = lp[:n] <= ld[:n] + slack
    return {"n": int(n), "holds": holds.tolist(), "all_hold": bool(holds.all()),
            "worst_margin": float(np.min(ld[:n] - lp[:n])) if n else 0.0}
