"""Eigenvalues of the Krein-Feller operator from secular-function roots.

Periodic:   C_WV(sqrt(lam), 1) + C_VW(sqrt(lam), 1) - 2 = 0
Dirichlet:  S_WV(sqrt(lam), 1) = 0   (solution pinned at the origin)

Dirichlet roots are simple. They are bracketed with an oscillation count:
the number of sign changes of S_WV(sqrt(lam), .) over the V atoms (followed
by its value at 1) equals the number of Dirichlet eigenvalues below lam.
Each bracket is then bisected on the secular function. Periodic eigenvalues
interlace as lam_{k-1} <= mu_k <= lam_k, so the k-th one is searched in
[mu_k, mu_{k+1}]. A double eigenvalue sits exactly at a Dirichlet root where
the whole boundary system vanishes.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .gentrig import EPS, EventList, monodromy, state_at_v_atoms, trig_eval
from .kernels import KernelTable

BCS = ("periodic", "dirichlet")


class SpectrumError(RuntimeError):
    pass


@dataclass(frozen=True)
class EigenPair:
    lam: float
    a: float
    b: float
    values: np.ndarray
    multiplicity: int
    secular_residual: float
    bc: str


@dataclass
class Spectrum:
    bc: str
    pairs: list
    count_requested: int
    lambda_max_scanned: float
    diagnostics: dict = field(default_factory=dict)
    measure_digest: str = ""

    @property
    def eigenvalues(self) -> np.ndarray:
        return np.array([p.lam for p in self.pairs])

    @property
    def multiplicities(self) -> np.ndarray:
        return np.array([p.multiplicity for p in self.pairs], int)

    @property
    def gamma(self) -> np.ndarray:
        return 1.0 + self.eigenvalues

    def vectors(self) -> np.ndarray:
        return np.column_stack([p.values for p in self.pairs])

    def nonzero(self) -> np.ndarray:
        lam = self.eigenvalues
        return lam[lam > 0]

    def to_dict(self, growth: "GrowthEstimate | None" = None) -> dict:
        d = {"bc": self.bc,
             "eigenvalues": [float(x) for x in self.eigenvalues],
             "multiplicities": [int(m) for m in self.multiplicities],
             "residuals": [float(p.secular_residual) for p in self.pairs],
             "count_requested": self.count_requested,
             "lambda_max_scanned": self.lambda_max_scanned,
             "measure_digest": self.measure_digest}
        if growth is not None:
            d["rho_coeff"] = growth.rho_coeff
            d["rho_fit"] = growth.rho_fit
            d["fit_constant"] = growth.fit_constant
        return d

    def write_json(self, path, growth=None) -> None:
        Path(path).write_text(json.dumps(self.to_dict(growth), indent=2, sort_keys=True) + "\n")

    def write_csv(self, path) -> None:
        rows = ["index,lambda,multiplicity"]
        rows += [f"{i},{p.lam!r},{p.multiplicity}" for i, p in enumerate(self.pairs)]
        Path(path).write_text("\n".join(rows) + "\n")


# ------------------------------------------------------------------ secular maps

def _boundary(T: np.ndarray, lam: np.ndarray):
    """Monodromy entries -> (C_WV, S_WV, S_VW, C_VW) at x = 1."""
    return T[:, 0, 0], -T[:, 0, 1], T[:, 1, 0], T[:, 1, 1]


def secular_values(ev: EventList, lams, bc: str) -> np.ndarray:
    lams = np.atleast_1d(np.asarray(lams, float))
    T = monodromy(ev, np.sqrt(lams))
    cwv, swv, svw, cvw = _boundary(T, lams)
    if bc == "periodic":
        return cwv + cvw - 2.0
    return swv


def secular(t: KernelTable, lam: float, bc: str = "periodic") -> float:
    if bc not in BCS:
        raise SpectrumError(f"bc must be one of {BCS}")
    if lam < 0:
        raise SpectrumError("lambda must be nonnegative")
    r = trig_eval(t, math.sqrt(lam), 1.0)
    return r.c_wv + r.c_vw - 2.0 if bc == "periodic" else r.s_wv


def boundary_rows(ev: EventList, lams) -> np.ndarray:
    """Rows of the 2x2 periodic boundary system at each lam: shape (B, 2, 2)."""
    lams = np.atleast_1d(np.asarray(lams, float))
    al = np.sqrt(lams)
    cwv, swv, svw, cvw = _boundary(monodromy(ev, al), lams)
    R = np.empty((lams.size, 2, 2))
    R[:, 0, 0] = cwv - 1.0
    R[:, 0, 1] = swv / al
    R[:, 1, 0] = svw / al
    R[:, 1, 1] = -(cvw - 1.0) / lams
    return R


def is_double(ev: EventList, lam: float, rel: float = 1e-8) -> bool:
    """Both boundary rows null relative to their size at lam/2."""
    R = boundary_rows(ev, [lam, lam / 2.0])
    n_here = np.linalg.norm(R[0], axis=1)
    n_ref = np.linalg.norm(R[1], axis=1)
    return bool(np.all(n_here < rel * n_ref))


def effective_sites(ev: EventList) -> tuple[int, int]:
    """(Dirichlet, periodic) number of independent sites: runs of V atoms not
    separated by W mass behave as one site, and runs with no W mass between
    them and the pinned origin carry the boundary value 0."""
    runs = []          # per V run: (W atom before it in sweep?, W atom after it?)
    seen_w = False
    in_run = False
    for w in ev.is_w.tolist():
        if w:
            if in_run:
                runs[-1][1] = True
                in_run = False
            seen_w = True
        elif not in_run:
            runs.append([seen_w, False])
            in_run = True
    n_d = sum(1 for before, after in runs if before and after)
    n_p = len(runs)
    if n_p > 1 and not runs[0][0] and not runs[-1][1]:
        n_p -= 1       # first and last run touch across the origin
    if not ev.is_w.any():
        n_p = 0
    return n_d, n_p


def dirichlet_count(ev: EventList, lams) -> np.ndarray:
    """Number of Dirichlet eigenvalues strictly below each lam."""
    lams = np.atleast_1d(np.asarray(lams, float))
    _, s_at, _, s_end, _, _ = state_at_v_atoms(ev, np.sqrt(lams))
    seq = np.concatenate([s_at, s_end[:, None]], axis=1)
    sgn = np.where(seq < 0, -1, 1)
    return np.sum(sgn[:, 1:] != sgn[:, :-1], axis=1)


# ---------------------------------------------------------------- root finding

def _bisect_sign(fun, lo: np.ndarray, hi: np.ndarray, rtol: float, max_iter: int = 2000,
                 signs=None):
    """Batched bisection on sign changes of fun over [lo, hi].

    signs: optional known (sign at lo, sign at hi) used instead of evaluating
    fun at the ends.
    """
    lo = lo.astype(float).copy()
    hi = hi.astype(float).copy()
    if signs is None:
        flo = fun(lo)
        fhi = fun(hi)
    else:
        flo = np.asarray(signs[0], float).copy()
        fhi = np.asarray(signs[1], float).copy()
    if np.any(np.sign(flo) * np.sign(fhi) > 0):
        bad = np.flatnonzero(np.sign(flo) * np.sign(fhi) > 0)
        raise SpectrumError(f"no sign change in brackets {bad.tolist()}")
    for _ in range(max_iter):
        mid = 0.5 * (lo + hi)
        active = ((hi - lo) > rtol * np.abs(hi)) & (mid > lo) & (mid < hi)
        if not active.any():
            break
        fm = fun(mid)
        left = np.sign(fm) == np.sign(flo)
        lo = np.where(active & left, mid, lo)
        flo = np.where(active & left, fm, flo)
        hi = np.where(active & ~left, mid, hi)
        fhi = np.where(active & ~left, fm, fhi)
    else:
        raise SpectrumError("bracket refinement did not converge")
    return np.where(np.abs(flo) <= np.abs(fhi), lo, hi)


def dirichlet_roots(ev: EventList, count: int, rtol: float = 1e-14,
                    rho_prior: float = 0.5, max_doublings: int = 200):
    """First `count` Dirichlet eigenvalues and scan diagnostics."""
    n_d, _ = effective_sites(ev)
    if count > n_d:
        raise SpectrumError(f"scan exhausted: only {n_d} Dirichlet eigenvalues exist, "
                            f"{count} requested")
    lam_hi = (2.0 * count) ** (1.0 / rho_prior)
    doublings = 0
    while dirichlet_count(ev, [lam_hi])[0] < count:
        lam_hi *= 2.0
        doublings += 1
        if doublings > max_doublings:
            raise SpectrumError(f"scan exhausted below lambda={lam_hi:.3e} before {count} roots")
    k = np.arange(1, count + 1)
    lo = np.zeros(count)
    hi = np.full(count, lam_hi)
    clo = np.zeros(count, int)
    chi = np.full(count, dirichlet_count(ev, [lam_hi])[0])
    iters = 0
    while True:
        todo = ~((clo == k - 1) & (chi == k))
        if not todo.any():
            break
        iters += 1
        if iters > 400:
            raise SpectrumError("could not isolate Dirichlet roots")
        l, h = lo[todo], hi[todo]
        mid = np.where((l > 0) & (h > 4.0 * l), np.sqrt(l * h), 0.5 * (l + h))
        cm = dirichlet_count(ev, mid)
        kk = k[todo]
        up = cm >= kk
        lo[todo] = np.where(up, l, mid)
        clo[todo] = np.where(up, clo[todo], cm)
        hi[todo] = np.where(up, mid, h)
        chi[todo] = np.where(up, cm, chi[todo])
    # S_WV vanishes trivially at lam = 0; start the first bracket just above it
    lo = np.where(lo == 0.0, 1e-300, lo)
    roots = _bisect_sign(lambda x: secular_values(ev, x, "dirichlet"), lo, hi, rtol)
    return roots, {"lambda_max": lam_hi, "doublings": doublings, "isolation_iters": iters}


def solve_spectrum(t: KernelTable, bc: str, count: int, rtol: float = 1e-14) -> Spectrum:
    """At least `count` eigenvalues (with multiplicity) and eigenfunctions."""
    if bc not in BCS:
        raise SpectrumError(f"bc must be one of {BCS}")
    if count < 1:
        raise SpectrumError("count must be positive")
    ev = EventList.build(t.W, t.V)
    n_d, n_p = effective_sites(ev)
    if bc == "periodic" and count > n_p:
        raise SpectrumError(f"scan exhausted: only {n_p} periodic eigenvalues exist, "
                            f"{count} requested")
    if bc == "dirichlet" and count > n_d:
        raise SpectrumError(f"scan exhausted: only {n_d} Dirichlet eigenvalues exist, "
                            f"{count} requested")
    mu, diag = dirichlet_roots(ev, min(count, n_d), rtol)
    if bc == "dirichlet":
        lams = list(mu)
        mults = [1] * count
    else:
        lams, mults = _periodic_from_dirichlet(ev, mu, count, rtol, diag)
    pairs = _eigenpairs(t, ev, np.array(lams), mults, bc)
    pairs, defect = _orthonormalize(pairs, t.V.masses)
    diag["orthogonality_defect"] = defect
    digest = t.W.digest() + t.V.digest()
    return Spectrum(bc, pairs, count, diag["lambda_max"], diag, digest)


def _periodic_from_dirichlet(ev, mu, count, rtol, diag):
    lam = {0: 0.0}
    mult = {0: 1}
    doubles = []
    for j in range(2, mu.size + 1):
        if is_double(ev, mu[j - 1]):
            lam[j - 1] = lam[j] = mu[j - 1]
            mult[j - 1] = mult[j] = 2
            doubles.append(j)
    todo = [k for k in range(1, count) if k not in lam]
    if todo:
        # D = C_WV + C_VW - 2 is <= 0 on bands (lam_2j, lam_2j+1) and >= 0 on
        # gaps; mu_k lies in [lam_k-1, lam_k], so sign D(mu_k) = (-1)^k. The
        # computed sign can flip when a root sits within rounding of mu_k, so
        # the bracket ends use the known signs and bisection settles there.
        ks = np.array(todo)
        lo = np.array([mu[k - 1] for k in todo])
        hi = np.array([mu[k] if k < mu.size else _open_end(ev, mu[k - 1], (-1.0) ** k) for k in todo])
        s_lo = np.where(ks % 2 == 1, -1.0, 1.0)
        roots = _bisect_sign(lambda x: secular_values(ev, x, "periodic"), lo, hi, rtol,
                             signs=(s_lo, -s_lo))
        for k, r in zip(ks, roots):
            lam[int(k)] = float(r)
            mult[int(k)] = 1
    diag["double_at_dirichlet_index"] = doubles
    keys = sorted(lam)
    return [lam[k] for k in keys], [mult[k] for k in keys]


def _open_end(ev: EventList, lo: float, d0: float, max_doublings: int = 200) -> float:
    """Upper bracket for the last periodic root beyond the last Dirichlet
    root, where the discriminant has sign d0."""
    hi = 2.0 * lo
    for _ in range(max_doublings):
        if np.sign(secular_values(ev, [hi], "periodic")[0]) != d0:
            return hi
        hi *= 2.0
    raise SpectrumError("no sign change above the last Dirichlet root")


def _sweep(ev: EventList, alphas: np.ndarray, u: np.ndarray, direction: int,
           jitter: np.ndarray | None = None) -> np.ndarray:
    """Solution values at the V atoms from state u, forward (+1) from 0 or
    backward (-1) from 1. jitter perturbs each step size relatively."""
    B = alphas.size
    mass = ev.mass if jitter is None else ev.mass * (1.0 + jitter)
    mass = mass.tolist()
    isw = ev.is_w.tolist()
    nv = len(isw) - sum(isw)
    vals = np.zeros((B, nv))
    f = u[:, 0].copy()
    g = u[:, 1].copy()
    if direction == 1:
        j = 0
        for k, w in enumerate(isw):
            h = alphas * mass[k]
            if w:
                f = f - h * g
            else:
                vals[:, j] = f
                g = g + h * f
                j += 1
    else:
        j = nv - 1
        for k in range(len(isw) - 1, -1, -1):
            h = alphas * mass[k]
            if isw[k]:
                f = f + h * g
            else:
                g = g - h * f
                vals[:, j] = f
                j -= 1
    return vals


def _shoot_two_sided(ev: EventList, alphas, u0, u1, rescale: bool = True) -> np.ndarray:
    """Solution values at the V atoms, shot forward from state u0 at 0 and
    backward from u1 at 1, keeping at each site the sweep with the smaller
    error estimate. Sites where neither estimate leaves a significant digit
    are set to zero.

    A solution that decays away from its peak is swamped by rounding in the
    growing direction when shot from one end only. The error of each sweep is
    estimated by rerunning it with step sizes jittered at rounding level.
    With rescale the backward sweep is first matched to the forward one where
    both are most accurate (u1 known only up to scale, as for Dirichlet data);
    without it both sweeps are taken to share one scale (u1 the exact
    continuation of u0, as for periodic data).
    Shapes: alphas (B,), u0, u1 (B, 2); returns (B, number of V atoms).
    """
    alphas = np.atleast_1d(np.asarray(alphas, float))
    u0 = np.atleast_2d(np.asarray(u0, float))
    u1 = np.atleast_2d(np.asarray(u1, float))
    eps = np.finfo(float).eps
    jitter = 8.0 * eps * np.random.default_rng(20240611).choice([-1.0, 1.0], ev.mass.size)
    swept = []
    for u, d in ((u0, 1), (u1, -1)):
        f = _sweep(ev, alphas, u, d)
        err = np.abs(f - _sweep(ev, alphas, u, d, jitter)) + 4.0 * eps * np.abs(f)
        swept.append((f, err))
    (ff, ef), (fb, eb) = swept
    if rescale:
        tiny = np.finfo(float).tiny
        rel = np.maximum(ef / np.maximum(np.abs(ff), tiny), eb / np.maximum(np.abs(fb), tiny))
        m = np.argmin(rel, axis=1)
        rows = np.arange(alphas.size)
        num, den = ff[rows, m], fb[rows, m]
        scale = np.where(den != 0.0, num / np.where(den != 0.0, den, 1.0), 1.0)
        fb = fb * scale[:, None]
        eb = eb * np.abs(scale)[:, None]
    f = np.where(ef <= eb, ff, fb)
    err = np.minimum(ef, eb)
    # neither sweep has a significant digit: both decay into this valley, so
    # the true value lies below the rounding floor of its neighbours
    return np.where(err > 1e-6 * np.abs(f), 0.0, f)


def _site_gaps(ev: EventList) -> np.ndarray:
    """W mass between consecutive V atoms, the last entry wrapping through 1."""
    cum = np.cumsum(np.where(ev.is_w, ev.mass, 0.0))
    at_v = cum[~ev.is_w]
    return np.append(np.diff(at_v), cum[-1] - at_v[-1] + at_v[0])


def cycle_residual(ev: EventList, lam: float, vals, v) -> float:
    """Relative residual of the periodic difference equation at the V atoms,

        (f_j - f_j-1)/w_j-1 - (f_j+1 - f_j)/w_j = lam v_j f_j,

    with w_j the W mass between sites j and j+1, as |r|_{1/v} / (lam |f|_v).
    Sites with no W mass between them must carry equal values and are merged.
    """
    f = np.asarray(vals, float)
    v = np.asarray(v, float)
    tiny = np.finfo(float).tiny
    gaps = _site_gaps(ev)
    zero = gaps <= 0.0
    jump = float(np.max(np.abs(f - np.roll(f, -1))[zero], initial=0.0))
    ends = np.flatnonzero(~zero)
    if ends.size == 0:
        return jump / max(float(np.max(np.abs(f))), tiny)
    n = f.size
    starts = np.roll(ends, 1) + 1
    mass = np.array([v[(s0 + np.arange((e - s0) % n + 1)) % n].sum()
                     for s0, e in zip(starts, ends)])
    fg = f[ends]
    flux = (np.roll(fg, -1) - fg) / gaps[ends]
    r = np.roll(flux, 1) - flux - lam * mass * fg
    nf = max(math.sqrt(float(np.sum(mass * fg * fg))), tiny)
    res = math.sqrt(float(np.sum(r * r / mass))) / max(lam * nf, tiny)
    return max(res, jump / nf)


def _cut_at_peak(ev: EventList, alphas: np.ndarray, sites) -> np.ndarray:
    """Periodic solutions at the V atoms, shot both ways around the cycle from
    the state just before V atom sites[b], where mode b peaks, so both sweeps
    start out in their decaying (stable) direction."""
    v_events = np.flatnonzero(~ev.is_w)
    out = np.zeros((alphas.size, v_events.size))
    for b, (al, site) in enumerate(zip(alphas, sites)):
        e0 = int(v_events[site])
        order = np.r_[e0:ev.pos.size, 0:e0]
        rot = EventList(ev.pos[order], ev.mass[order], ev.is_w[order])
        N = monodromy(rot, [al])[0] - np.eye(2)
        r = N[0] if np.linalg.norm(N[0]) >= np.linalg.norm(N[1]) else N[1]
        u = np.array([[r[1], -r[0]]]) / max(math.hypot(r[0], r[1]), np.finfo(float).tiny)
        out[b] = np.roll(_shoot_two_sided(rot, [al], u, u, rescale=False)[0], site)
    return out


def _l2v_normalize(vals, v):
    nrm = math.sqrt(math.fsum((v * vals * vals).tolist()))
    return vals / nrm, nrm


def _null_coefficients(ev: EventList, lams: np.ndarray) -> np.ndarray:
    """Unit (a, b) spanning the null space of the periodic boundary rows."""
    R = boundary_rows(ev, lams)
    big = np.linalg.norm(R[:, 0], axis=1) >= np.linalg.norm(R[:, 1], axis=1)
    r = np.where(big[:, None], R[:, 0], R[:, 1])
    ab = np.stack([r[:, 1], -r[:, 0]], axis=1)
    return ab / np.linalg.norm(ab, axis=1, keepdims=True)


def _periodic_simple_vectors(ev: EventList, lams: np.ndarray, v: np.ndarray):
    """Sampled eigenfunctions and (a, b) for simple periodic eigenvalues.

    Candidates: shot from the origin with the boundary-system coefficients
    (as is, and with the backward sweep rescaled), then shot from the peak of
    the better one. The candidate with the smallest residual in the
    difference equation wins."""
    al = np.sqrt(lams)
    ab = _null_coefficients(ev, lams)
    u0 = np.stack([ab[:, 0], -ab[:, 1] / al], axis=1)
    cands = [_shoot_two_sided(ev, al, u0, u0, rescale=r) for r in (False, True)]

    def residuals(X):
        return np.array([cycle_residual(ev, l, x, v) for l, x in zip(lams, X)])

    res = [residuals(X) for X in cands]
    best = np.where((res[0] <= res[1])[:, None], cands[0], cands[1])
    peaks = np.argmax(v * best * best, axis=1)
    cands.append(_cut_at_peak(ev, al, peaks))
    res.append(residuals(cands[2]))
    pick = np.argmin(np.stack(res), axis=0)
    X = np.stack(cands)[pick, np.arange(lams.size)]
    return X, ab


def _eigenpairs(t: KernelTable, ev: EventList, lams: np.ndarray, mults, bc: str):
    v = t.V.masses
    lams = np.asarray(lams, float)
    mults = list(mults)
    al = np.sqrt(lams)
    sec = np.abs(secular_values(ev, lams, bc))
    simple = np.array([l > 0 and m == 1 for l, m in zip(lams, mults)], bool)
    shot = {}
    if simple.any():
        idx = np.flatnonzero(simple)
        if bc == "dirichlet":
            # forward state (0, -1/alpha) is S_WV / alpha; f(1) = 0 going back
            u0 = np.stack([np.zeros(idx.size), -1.0 / al[idx]], axis=1)
            u1 = np.tile([0.0, 1.0], (idx.size, 1))
            X = _shoot_two_sided(ev, al[idx], u0, u1, rescale=True)
            ab = np.tile([0.0, 1.0], (idx.size, 1))
        else:
            X, ab = _periodic_simple_vectors(ev, lams[idx], v)
        shot = {int(i): (X[n], ab[n]) for n, i in enumerate(idx)}
    need_double = any(m == 2 for m in mults)
    if need_double:
        c_at, s_at, *_ = state_at_v_atoms(ev, al)
    pairs = []
    i = 0
    while i < lams.size:
        lam, m = float(lams[i]), mults[i]
        if lam == 0.0:
            vals, _ = _l2v_normalize(np.ones(v.size), v)
            pairs.append(EigenPair(0.0, 1.0, 0.0, vals, 1, float(sec[i]), bc))
            i += 1
            continue
        if m == 2:
            f1, n1 = _l2v_normalize(c_at[i].copy(), v)
            g = s_at[i] / al[i]
            proj = math.fsum((v * f1 * g).tolist())
            f2, n2 = _l2v_normalize(g - proj * f1, v)
            pairs.append(EigenPair(lam, 1.0 / n1, 0.0, f1, 2, float(sec[i]), bc))
            pairs.append(EigenPair(lam, -proj / (n1 * n2), 1.0 / n2, f2, 2, float(sec[i]), bc))
            i += 2
            continue
        raw, (a, b) = shot[i]
        vals, nrm = _l2v_normalize(raw, v)
        pairs.append(EigenPair(lam, float(a) / nrm, float(b) / nrm, vals, 1, float(sec[i]), bc))
        i += 1
    return pairs


def _orthonormalize(pairs: list, v: np.ndarray, max_defect: float = 1e-2):
    """Symmetric (Loewdin) re-orthonormalization in L^2_V.

    Shooting at the top of a strongly inhomogeneous spectrum leaves vectors
    that are orthogonal only to about 1e-5. X S^{-1/2}, with S the Gram
    matrix, is the orthonormal set closest to X; S^{-1/2} comes from a
    Newton-Schulz iteration, which converges because S is close to I. The
    boundary coefficients (a, b) are mixed with the same weights. Returns
    the new pairs and the defect max|S - I| measured before the correction.
    """
    X = np.column_stack([p.values for p in pairs])
    S = X.T @ (v[:, None] * X)
    S = (S + S.T) / 2
    I = np.eye(S.shape[0])
    defect = float(np.max(np.abs(S - I)))
    if defect == 0.0 or defect > max_defect:
        return pairs, defect
    Z = I.copy()
    for _ in range(50):
        Z_new = 0.5 * Z @ (3.0 * I - S @ Z @ Z)
        done = np.max(np.abs(Z_new - Z)) <= 4 * EPS
        Z = Z_new
        if done:
            break
    Xn = X @ Z
    ab = np.array([[p.a, p.b] for p in pairs]).T @ Z
    out = [replace(p, values=Xn[:, i], a=float(ab[0, i]), b=float(ab[1, i]))
           for i, p in enumerate(pairs)]
    return out, defect


def eigenvector(t: KernelTable, lam: float, bc: str = "periodic", tol: float = 1e-8) -> list:
    """Eigenfunction(s) at a claimed eigenvalue; two orthonormal pairs when the
    boundary system vanishes identically."""
    ev = EventList.build(t.W, t.V)
    scale = max(1.0, t.w_total * t.v_total * lam)
    res = abs(float(secular_values(ev, [lam], bc)[0])) if lam > 0 else 0.0
    if res > tol * scale:
        raise SpectrumError(f"boundary system nonsingular at lambda={lam} (secular {res:.3e})")
    if lam == 0.0:
        if bc == "dirichlet":
            raise SpectrumError("lambda=0 is not a Dirichlet eigenvalue")
        return _eigenpairs(t, ev, np.array([0.0]), [1], bc)
    m = 2 if bc == "periodic" and is_double(ev, lam) else 1
    return _eigenpairs(t, ev, np.array([lam] * m), [m] * m, bc)


# ------------------------------------------------------------------ growth order

@dataclass(frozen=True)
class GrowthEstimate:
    rho_coeff: float | None
    rho_fit: float | None
    n_used: int
    fit_constant: float | None
    ls_constant: float | None = None
    rho_coeff_by_n: tuple = ()


def growth_exponent(coeffs=None, eigenvalues=None, n_min: int = 5) -> GrowthEstimate:
    """rho_coeff = max_{n >= n_min} n ln n / (-ln |a_n|) over nonzero a_n;
    rho_fit = least-squares slope of ln n against ln lam_n (nonzero lam,
    numbered from 1). fit_constant is the largest C with lam_n >= C n^(1/rho)
    on the data; ls_constant comes from the regression intercept."""
    rho_c, by_n, n_used = None, (), 0
    if coeffs is not None:
        a = np.asarray(coeffs, float)
        ns = [n for n in range(max(n_min, 2), a.size) if a[n] != 0.0 and abs(a[n]) < 1.0]
        if len(ns) >= 1:
            vals = [n * math.log(n) / (-math.log(abs(a[n]))) for n in ns]
            by_n = tuple(zip(ns, vals))
            rho_c = max(vals)
            n_used = len(ns)
        elif eigenvalues is None:
            raise SpectrumError("coefficients vanish before n_min; pass eigenvalues instead")
    rho_f = C = C_ls = None
    if eigenvalues is not None:
        lam = np.sort(np.asarray(eigenvalues, float))
        lam = lam[lam > 0]
        if lam.size < 3:
            raise SpectrumError("need at least 3 nonzero eigenvalues for a fit")
        n = np.arange(1, lam.size + 1)
        X = np.log(lam)
        Y = np.log(n)
        slope, icpt = np.polyfit(X, Y, 1)
        rho_f = float(slope)
        C_ls = float(math.exp(-icpt / slope))
        # shaded by a few ulps so that C n^(1/rho) <= lam_n survives rounding
        C = float(np.min(lam / n ** (1.0 / slope))) * (1.0 - 8.0 * EPS)
        n_used = max(n_used, int(lam.size))
    if rho_c is None and rho_f is None:
        raise SpectrumError("nothing to estimate from")
    return GrowthEstimate(rho_c, rho_f, n_used, C, C_ls, by_n)


@dataclass(frozen=True)
class TailSum:
    partial: float
    remainder: float
    divergent: bool

    @property
    def total(self) -> float:
        return self.partial + self.remainder


def _tail_bound(N: int, s: float, rho: float, C: float) -> float:
    """sum_{n>N} (C n^(1/rho))^(-s) <= C^(-s) N^(1-s/rho) / (s/rho - 1)."""
    p = s / rho
    if p <= 1.0:
        return math.inf
    return C ** (-s) * N ** (1.0 - p) / (p - 1.0)


def tail_sum(spec: Spectrum, s: float, growth: GrowthEstimate | None = None) -> TailSum:
    """sum lam^(-s) over the computed nonzero eigenvalues plus a remainder
    from the fitted growth law lam_n >= C n^(1/rho)."""
    if s <= 0:
        raise SpectrumError("s must be positive")
    lam = spec.nonzero()
    g = growth or growth_exponent(eigenvalues=lam)
    partial = math.fsum((lam ** (-s)).tolist())
    if s <= g.rho_fit:
        return TailSum(partial, math.inf, True)
    return TailSum(partial, _tail_bound(lam.size, s, g.rho_fit, g.fit_constant), False)


def hs_sum(spec: Spectrum, n: float, m: float, growth: GrowthEstimate | None = None) -> TailSum:
    """sum_i gamma_i^(2(n-m)) with gamma_i = 1 + lam_i, plus a tail bound;
    finite exactly when 2(m-n) exceeds the growth order."""
    s = 2.0 * (m - n)
    lam = spec.eigenvalues
    g = growth or growth_exponent(eigenvalues=lam)
    partial = math.fsum(((1.0 + lam) ** (-s)).tolist())
    if s <= 0 or s <= g.rho_fit:
        return TailSum(partial, math.inf, True)
    nz = int(np.sum(lam > 0))
    return TailSum(partial, _tail_bound(nz, s, g.rho_fit, g.fit_constant), False)


# ------------------------------------------------------- fractional operations

def fractional_apply(spec: Spectrum, f_coeffs, s: float) -> np.ndarray:
    """Coefficients of (I - Delta)^s f: u_i = gamma_i^s f_i."""
    f = np.asarray(f_coeffs, float)
    return spec.gamma[: f.size] ** s * f


def fractional_solve(spec: Spectrum, f_coeffs, s: float) -> np.ndarray:
    """Coefficients of the solution of (I - Delta)^s u = f: u_i = gamma_i^-s f_i."""
    f = np.asarray(f_coeffs, float)
    return spec.gamma[: f.size] ** (-s) * f


def sobolev_norm(spec: Spectrum, f_coeffs, s: float) -> float:
    """Squared norm sum_i gamma_i^s alpha_i^2 (negative s gives the dual norm)."""
    f = np.asarray(f_coeffs, float)
    return math.fsum((spec.gamma[: f.size] ** s * f * f).tolist())


def project(spec: Spectrum, values, v) -> np.ndarray:
    """L^2_V coefficients of a function sampled at the V atoms."""
    return spec.vectors().T @ (np.asarray(v) * np.asarray(values, float))
