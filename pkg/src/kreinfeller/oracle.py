"""Finite mass/conductance model used as an independent eigenvalue oracle.

For atomic W and V the eigenproblem reduces to a weighted cycle: sites at
the V atoms y_j with masses v_j, and conductance c_j = 1 / dW((y_j, y_{j+1}])
between neighbours. The Dirichlet variant pins the origin, which turns the
edge through 0 into two grounded conductances.
"""
from __future__ import annotations

import math
from fractions import Fraction
from dataclasses import dataclass

import numpy as np

from .measure import AtomicMeasure, interval_mass


class OracleError(ValueError):
    pass


class ConvergenceError(RuntimeError):
    pass


@dataclass(frozen=True, eq=False)
class CycleOperator:
    v: np.ndarray
    c: np.ndarray
    bc: str = "periodic"
    # grounded conductances at the first and last site (dirichlet only)
    ground: tuple[float, float] = (0.0, 0.0)
    # indices of the V atoms carried as sites; None means all of them
    sites: np.ndarray | None = None
    n_atoms: int | None = None

    @property
    def n(self) -> int:
        return int(self.v.size)

    def embed(self, F: np.ndarray) -> np.ndarray:
        """Eigenvector columns on all V atoms; pinned atoms carry 0."""
        if self.sites is None:
            return F
        out = np.zeros((self.n_atoms, F.shape[1]))
        out[self.sites] = F
        return out

    def stiffness(self) -> np.ndarray:
        n = self.n
        A = np.zeros((n, n))
        edges = n if self.bc == "periodic" else n - 1
        for j in range(edges):
            k = (j + 1) % n
            c = self.c[j]
            A[j, j] += c
            A[k, k] += c
            A[j, k] -= c
            A[k, j] -= c
        if self.bc == "dirichlet":
            A[0, 0] += self.ground[0]
            A[-1, -1] += self.ground[1]
        return A

    def symmetrized(self) -> np.ndarray:
        s = 1.0 / np.sqrt(self.v)
        return self.stiffness() * s[:, None] * s[None, :]


def assemble_cycle(W: AtomicMeasure, V: AtomicMeasure, bc: str = "periodic") -> CycleOperator:
    """Sites at V atoms, conductances from the W mass of each gap.

    For the Dirichlet problem a V atom with no W mass between it and the
    pinned origin (either way round) has to carry the value 0, so it is
    eliminated; `sites` records which atoms remain.
    """
    if bc not in ("periodic", "dirichlet"):
        raise OracleError(f"bc must be periodic or dirichlet, got {bc!r}")
    y = V.positions
    keep = np.arange(y.size)
    if bc == "dirichlet":
        left = np.array([interval_mass(W, 0.0, x) for x in y])     # (0, y_j]
        right = np.array([interval_mass(W, x, 1.0) for x in y])    # (y_j, 1)
        keep = np.flatnonzero((left > 0) & (right > 0))
        if keep.size == 0:
            raise OracleError("every V atom is pinned: no W mass separates them from the origin")
    ys = y[keep]
    gaps = [interval_mass(W, ys[j], ys[j + 1]) for j in range(ys.size - 1)]
    head = interval_mass(W, 0.0, ys[0])         # (0, y_1]
    tail = interval_mass(W, ys[-1], 1.0)        # (y_N, 1)
    if bc == "periodic":
        gaps.append(head + tail)
    gaps = np.array(gaps, float)
    if np.any(gaps <= 0):
        j = int(np.argmin(gaps))
        raise OracleError(f"V-gap {j} carries no W mass; merge the adjacent V atoms")
    if bc == "dirichlet":
        sites = None if keep.size == y.size else keep
        return CycleOperator(V.masses[keep].copy(), 1.0 / gaps, bc, (1.0 / head, 1.0 / tail),
                             sites, int(y.size))
    return CycleOperator(V.masses.copy(), 1.0 / gaps, bc)


def _round_robin(n: int):
    """Rounds of disjoint index pairs covering every pair once (circle method)."""
    m = n + (n % 2)
    players = list(range(m))
    rounds = []
    for _ in range(m - 1):
        pairs = [(players[i], players[m - 1 - i]) for i in range(m // 2)]
        pairs = [(min(p), max(p)) for p in pairs if max(p) < n]
        rounds.append(pairs)
        players = [players[0], players[-1]] + players[1:-1]
    return rounds


def _offdiag_norm(A: np.ndarray) -> float:
    return float(np.sqrt(2.0 * np.sum(np.triu(A, 1) ** 2)))


def jacobi_eigh(S: np.ndarray, max_sweeps: int = 30, tol: float = 1e-15):
    """Eigen-decomposition of a symmetric matrix by cyclic Jacobi rotations.

    Rotations act on disjoint pairs simultaneously (round-robin ordering),
    so each round is a handful of vectorised row/column updates.
    Returns ascending eigenvalues and orthonormal eigenvectors (columns).
    """
    A = np.array(S, dtype=float, copy=True)
    n = A.shape[0]
    if A.shape != (n, n):
        raise OracleError("matrix must be square")
    Qt = np.eye(n)
    if n == 1:
        return A.diagonal().copy(), Qt
    scale = max(np.linalg.norm(A), np.finfo(float).tiny)
    rounds = [(np.array([p for p, _ in r]), np.array([q for _, q in r])) for r in _round_robin(n)]
    off = math.inf
    sweeps = 0
    for sweeps in range(max_sweeps):
        off = _offdiag_norm(A)
        if off <= tol * scale:
            break
        for p, q in rounds:
            apq = A[p, q]
            app = A[p, p]
            aqq = A[q, q]
            active = np.abs(apq) > 1e-300
            tau = np.where(active, (aqq - app) / (2.0 * np.where(active, apq, 1.0)), 0.0)
            t = np.where(tau >= 0, 1.0, -1.0) / (np.abs(tau) + np.sqrt(1.0 + tau * tau))
            t = np.where(active, t, 0.0)
            c = 1.0 / np.sqrt(1.0 + t * t)
            s = t * c
            # A <- J^T A J with J = [[c, s], [-s, c]] on each (p, q); since A is
            # symmetric this is a row update, a transpose, and the same row update
            for _half in range(2):
                rp, rq = A[p, :], A[q, :]
                A[p, :], A[q, :] = c[:, None] * rp - s[:, None] * rq, s[:, None] * rp + c[:, None] * rq
                A = A.T.copy()
            A[p, q] = 0.0
            A[q, p] = 0.0
            vp, vq = Qt[p, :], Qt[q, :]
            Qt[p, :], Qt[q, :] = c[:, None] * vp - s[:, None] * vq, s[:, None] * vp + c[:, None] * vq
    else:
        off = _offdiag_norm(A)
        if off > tol * scale * 1e3:
            raise ConvergenceError(f"Jacobi did not converge: off-diagonal norm {off:.3e}")
    w = A.diagonal().copy()
    order = np.argsort(w, kind="stable")
    return w[order], Qt.T[:, order]


def dense_spectrum(op: CycleOperator, max_sweeps: int = 30):
    """All eigenpairs of A f = lam M f; eigenvectors are M-orthonormal columns."""
    if op.n == 1 and op.bc == "periodic":
        # a single site on a cycle: only the constant mode
        return np.zeros(1), np.full((1, 1), 1.0 / math.sqrt(op.v[0]))
    w, X = jacobi_eigh(op.symmetrized(), max_sweeps=max_sweeps)
    F = X / np.sqrt(op.v)[:, None]
    return w, F


def _spd_inverse(S: np.ndarray) -> np.ndarray:
    """Inverse of a symmetric positive definite matrix through a Cholesky
    factor; a non-positive pivot means the operator is singular."""
    n = S.shape[0]
    L = np.zeros_like(S)
    for j in range(n):
        d = S[j, j] - L[j, :j] @ L[j, :j]
        if not d > 1e-14 * abs(S[j, j]):
            raise OracleError(f"singular operator: pivot {d:.3e} at row {j}")
        L[j, j] = math.sqrt(d)
        L[j + 1:, j] = (S[j + 1:, j] - L[j + 1:, :j] @ L[j, :j]) / L[j, j]
    Linv = np.zeros_like(S)
    for i in range(n):
        e = np.zeros(n)
        e[i] = 1.0
        for r in range(i, n):
            e[r] = (e[r] - L[r, i:r] @ e[i:r]) / L[r, r]
        Linv[:, i] = e
    G = Linv.T @ Linv
    return (G + G.T) / 2


def green_matrix(op: CycleOperator) -> np.ndarray:
    """Symmetrized Green operator M^{1/2} A^{-1} M^{1/2}; for periodic data the
    pseudo-inverse on the complement of constants."""
    S = op.symmetrized()
    if op.bc == "dirichlet":
        return _spd_inverse(S)
    q = np.sqrt(op.v)
    q = q / math.sqrt(float(q @ q))
    P = np.outer(q, q)
    return _spd_inverse(S + P) - P


def _power_traces(G: np.ndarray) -> list[Fraction]:
    # every double is an integer times a power of two, so the traces of G^m
    # can be formed exactly with Python integers
    n = G.shape[0]
    nz = G[G != 0]
    e0 = (int(np.frexp(nz)[1].min()) if nz.size else 0) - 53
    Gi = np.array([[int(np.ldexp(x, -e0)) for x in row] for row in G], dtype=object)
    P = np.eye(n, dtype=int).astype(object)
    p = [Fraction(0)]
    for m in range(1, n + 1):
        P = P.dot(Gi)
        p.append(Fraction(int(np.trace(P))) * Fraction(2) ** (m * e0))
    return p


def fredholm_coefficients(op: CycleOperator, exact: bool = False):
    """Coefficients c_0..c_N of det(I - z G) from the power traces tr(G^m)
    through Newton's identities (c_k = (-1)^k e_k).

    The identities cancel heavily, so the traces and the recursion run in
    exact rational arithmetic on the floating point entries of G. With
    exact=True the coefficients come back as Fractions; rounding them to
    doubles costs several digits in the roots once N is in the teens.
    """
    G = green_matrix(op)
    if op.bc == "periodic":
        # drop the constant direction; G is zero on it
        Q = _complement_basis(op.v)
        G = Q.T @ G @ Q
        G = (G + G.T) / 2
    n = G.shape[0]
    p = _power_traces(G)
    e = [Fraction(1)] + [Fraction(0)] * n
    for k in range(1, n + 1):
        e[k] = sum(((-1) ** (i - 1)) * e[k - i] * p[i] for i in range(1, k + 1)) / k
    coeffs = [(-1) ** k * e[k] for k in range(n + 1)]
    if exact:
        return coeffs
    return np.array([float(c) for c in coeffs])


def _complement_basis(v: np.ndarray) -> np.ndarray:
    """Orthonormal basis (columns) of the complement of sqrt(v), built from a
    Householder reflection that maps sqrt(v)/|sqrt(v)| to the first axis."""
    q = np.sqrt(v)
    q = q / math.sqrt(float(q @ q))
    u = q.copy()
    u[0] += 1.0 if q[0] >= 0 else -1.0
    H = np.eye(q.size) - 2.0 * np.outer(u, u) / float(u @ u)
    return H[:, 1:]


def _poly_exact(c, z: Fraction) -> tuple[Fraction, Fraction]:
    f = Fraction(0)
    d = Fraction(0)
    for ck in reversed(c):
        d = d * z + f
        f = f * z + ck
    return f, d


def fredholm_roots(coeffs, polish: int = 6, simple: bool = True) -> np.ndarray:
    """Zeros z of sum_k c_k z^k, i.e. the eigenvalues lam = 1/g, ascending.

    Starting points come from numpy's companion-matrix roots; each is then
    polished by Newton steps evaluated exactly. Dirichlet chains have simple
    spectra; with simple=True every root must bracket a sign change of the
    polynomial, so a lost or duplicated root is reported rather than
    returned. Periodic data can carry double roots: pass simple=False.
    """
    c = [x if isinstance(x, Fraction) else Fraction(float(x)) for x in coeffs]
    while len(c) > 1 and c[-1] == 0:
        c.pop()
    if len(c) == 1:
        return np.zeros(0)
    start = np.roots(np.array([float(x) for x in c[::-1]]))
    out = []
    for z0 in np.sort(start.real):
        z = Fraction(float(z0))
        for _ in range(polish):
            f, d = _poly_exact(c, z)
            if f == 0 or d == 0:
                break
            z = Fraction(float(z - f / d))
        out.append(float(z))
    out = np.sort(np.array(out))
    if not simple:
        return out
    for z in out:
        lo = _poly_exact(c, Fraction(float(z) * (1 - 1e-9)))[0]
        hi = _poly_exact(c, Fraction(float(z) * (1 + 1e-9)))[0]
        if lo * hi > 0 and _poly_exact(c, Fraction(float(z)))[0] != 0:
            raise OracleError(f"root {z!r} does not bracket a sign change")
    if np.any(np.diff(out) <= 1e-12 * np.abs(out[1:])):
        raise OracleError("Newton polishing merged two roots")
    return out


def compare_spectra(series_eigs, oracle_eigs, series_vecs=None, oracle_vecs=None,
                    v=None, zero_tol: float = 1e-6) -> dict:
    """Match two ascending eigenvalue lists one-to-one.

    Relative gaps use max(|lam|, zero_tol * max|lam|) as the scale so a
    periodic zero eigenvalue compares absolutely. With eigenvectors (columns
    sampled at V atoms) and masses v, reports the smallest cosine between
    each series vector and the oracle eigenspace of its eigenvalue.
    """
    a = np.sort(np.asarray(series_eigs, float))
    b = np.sort(np.asarray(oracle_eigs, float))
    n = min(a.size, b.size)
    top = max(np.max(np.abs(b)) if b.size else 1.0, 1.0)
    scale = np.maximum(np.abs(b[:n]), zero_tol * top)
    gaps = np.abs(a[:n] - b[:n]) / scale
    report = {"n": int(n), "max_rel_gap": float(gaps.max()) if n else 0.0,
              "count_series": int(a.size), "count_oracle": int(b.size),
              "min_cosine": None}
    if series_vecs is not None and oracle_vecs is not None and v is not None:
        X = np.asarray(series_vecs, float)
        Y = np.asarray(oracle_vecs, float)
        cos = []
        for k in range(min(X.shape[1], Y.shape[1])):
            lam = a[k]
            near = np.abs(b - lam) <= 1e-6 * max(abs(lam), zero_tol * top)
            basis = Y[:, near] if near.any() else Y[:, [k]]
            proj = basis.T @ (v * X[:, k])
            nx = math.sqrt(float(np.sum(v * X[:, k] ** 2)))
            cos.append(float(np.linalg.norm(proj)) / nx)
        report["min_cosine"] = float(min(cos)) if cos else None
    return report
