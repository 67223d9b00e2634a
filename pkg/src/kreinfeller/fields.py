"""Gaussian objects on the circle: W-Brownian motion and bridge, truncated
Whittle-Matern fields and the spectral Ornstein-Uhlenbeck SPDE.

Random numbers come from Philox streams keyed by (seed, stream, step), so a
chunk of samples is reproducible no matter which thread or order produced it.
"""
from __future__ import annotations

import math
import struct
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .dirichlet import BridgeKernel, bridge_kernel
from .measure import AtomicMeasure, evaluate
from .spectrum import GrowthEstimate, Spectrum, SpectrumError, _tail_bound, growth_exponent

CHUNK = 4096
BIN_MAGIC = b"KFFD"
BIN_VERSION = 1


class FieldError(ValueError):
    pass


def rng_for(seed: int, stream: int = 0, step: int = 0) -> np.random.Generator:
    ss = np.random.SeedSequence(int(seed) & (2**64 - 1), spawn_key=(int(stream), int(step)))
    return np.random.Generator(np.random.Philox(ss))


def _chunks(n: int, size: int = CHUNK):
    return [(i, min(size, n - i)) for i in range(0, n, size)]


def _map_chunks(fn, n: int, threads: int = 1):
    jobs = list(enumerate(_chunks(n)))
    if threads <= 1 or len(jobs) == 1:
        return [fn(k, start, m) for k, (start, m) in jobs]
    with ThreadPoolExecutor(threads) as pool:
        return list(pool.map(lambda j: fn(j[0], *j[1]), jobs))


# -------------------------------------------------------------- W-Brownian paths

def sample_w_brownian(W: AtomicMeasure, seed: int, n_paths: int = 1, stream: int = 0,
                      threads: int = 1) -> np.ndarray:
    """B_W(t) = B(W(t)) at the W atoms: shape (n_paths, W.n).

    Column k is the value just after the k-th atom, i.e. the cumulative sum
    of independent N(0, w_i) increments for i <= k.
    """
    if n_paths < 1:
        raise FieldError("n_paths must be positive")
    sd = np.sqrt(W.masses)

    def chunk(k, start, m):
        z = rng_for(seed, stream, k).standard_normal((m, W.n))
        return np.cumsum(z * sd, axis=1)

    return np.concatenate(_map_chunks(chunk, n_paths, threads), axis=0)


def path_at(W: AtomicMeasure, paths: np.ndarray, x) -> np.ndarray:
    """Evaluate step paths on the W atom grid at points x (cadlag)."""
    idx = np.searchsorted(W.positions, np.asarray(x, float), side="right")
    padded = np.concatenate([np.zeros((paths.shape[0], 1)), paths], axis=1)
    return padded[:, idx]


def _bridge_from(W: AtomicMeasure, paths: np.ndarray, x) -> np.ndarray:
    x = np.asarray(x, float)
    Wx = evaluate(W, x)
    return path_at(W, paths, x) - np.outer(paths[:, -1], Wx / W.total_mass)


def sample_bridge(W: AtomicMeasure, seed: int, n_paths: int = 1, at=None, stream: int = 0,
                  threads: int = 1) -> np.ndarray:
    """B_{W,0}(t) = B_W(t) - W(t)/W(1) B_W(1), pathwise, at the points `at`
    (default: the W atoms). Shape (n_paths, len(at))."""
    at = W.positions if at is None else np.atleast_1d(np.asarray(at, float))
    sd = np.sqrt(W.masses)

    def chunk(k, start, m):
        z = rng_for(seed, stream, k).standard_normal((m, W.n))
        return _bridge_from(W, np.cumsum(z * sd, axis=1), at)

    return np.concatenate(_map_chunks(chunk, n_paths, threads), axis=0)


def bridge_l2v_norms(W: AtomicMeasure, V: AtomicMeasure, seed: int, n_paths: int,
                     stream: int = 0, threads: int = 1) -> np.ndarray:
    """||B_{W,0}||^2 in L^2_V for each path, without holding all paths."""
    sd = np.sqrt(W.masses)
    y, v = V.positions, V.masses

    def chunk(k, start, m):
        z = rng_for(seed, stream, k).standard_normal((m, W.n))
        b = _bridge_from(W, np.cumsum(z * sd, axis=1), y)
        return (b * b) @ v

    return np.concatenate(_map_chunks(chunk, n_paths, threads))


def bridge_variance(W: AtomicMeasure, t) -> np.ndarray:
    return bridge_kernel(BridgeKernel(W), t, t)


# ---------------------------------------------------------------- Whittle-Matern

def _growth(spec: Spectrum, growth: GrowthEstimate | None) -> GrowthEstimate | None:
    if growth is not None:
        return growth
    try:
        return growth_exponent(eigenvalues=spec.nonzero())
    except SpectrumError:
        return None


@dataclass(frozen=True)
class FieldConfig:
    kappa: float = 1.0
    beta: float = 1.0
    modes: int = 32
    samples: int = 1000
    seed: int = 0

    def __post_init__(self):
        if not (self.kappa > 0 and self.beta > 0):
            raise FieldError("kappa and beta must be positive")
        if self.modes < 1 or self.samples < 1:
            raise FieldError("modes and samples must be positive")


@dataclass(frozen=True, eq=False)
class FieldSample:
    values: np.ndarray          # (M, number of V atoms)
    mode_weights: np.ndarray    # (K,)
    seed: int
    validity_flag: bool
    tail_mass: float
    rho_hat: float | None
    xi: np.ndarray | None = None  # (M, K) mode coefficients before weighting


def mode_weights(spec: Spectrum, cfg: FieldConfig) -> np.ndarray:
    lam = spec.eigenvalues[: cfg.modes]
    return (cfg.kappa ** 2 + lam) ** (-cfg.beta)


def truncation_tail(spec: Spectrum, cfg: FieldConfig, growth: GrowthEstimate | None = None) -> float:
    """sum_{i >= K} (kappa^2 + lam_i)^(-2 beta): computed modes past K, then a
    bound on the rest from lam_n >= C n^(1/rho)."""
    s = 2.0 * cfg.beta
    lam = spec.eigenvalues
    known = math.fsum(((cfg.kappa ** 2 + lam[cfg.modes:]) ** (-s)).tolist())
    g = _growth(spec, growth)
    if g is None or g.rho_fit is None or g.fit_constant is None:
        return math.inf
    if s <= g.rho_fit:
        return math.inf
    return known + _tail_bound(spec.nonzero().size, s, g.rho_fit, g.fit_constant)


def sample_whittle_matern(spec: Spectrum, cfg: FieldConfig, growth: GrowthEstimate | None = None,
                          stream: int = 0, threads: int = 1, keep_xi: bool = False) -> FieldSample:
    """u = sum_{i<K} xi_i (kappa^2 + lam_i)^(-beta) nu_i at the V atoms."""
    if cfg.modes > len(spec.pairs):
        raise FieldError(f"{cfg.modes} modes requested, spectrum has {len(spec.pairs)}")
    w = mode_weights(spec, cfg)
    basis = spec.vectors()[:, : cfg.modes] * w
    g = _growth(spec, growth)
    rho = None if g is None else g.rho_fit
    valid = rho is not None and 2.0 * cfg.beta > rho
    if rho is None:
        warnings.warn("too few eigenvalues to estimate rho; validity not established",
                      RuntimeWarning, stacklevel=2)
    elif not valid:
        warnings.warn(f"2*beta = {2 * cfg.beta} does not exceed rho = {rho:.4f}; "
                      "the field is not in L^2", RuntimeWarning, stacklevel=2)

    def chunk(k, start, m):
        return rng_for(cfg.seed, stream, k).standard_normal((m, cfg.modes))

    xi = np.concatenate(_map_chunks(chunk, cfg.samples, threads), axis=0)
    return FieldSample(xi @ basis.T, w, cfg.seed, bool(valid),
                       truncation_tail(spec, cfg, g), rho, xi if keep_xi else None)


def matern_covariance(spec: Spectrum, cfg: FieldConfig, i, j) -> np.ndarray:
    """Truncated covariance sum_{k<K} (kappa^2+lam_k)^(-2 beta) nu_k(y_i) nu_k(y_j)."""
    X = spec.vectors()[:, : cfg.modes]
    w2 = mode_weights(spec, cfg) ** 2
    return np.sum(X[np.asarray(i)] * X[np.asarray(j)] * w2, axis=-1)


def variance_partial_sums(spec: Spectrum, beta: float, kappa: float = 1.0) -> np.ndarray:
    """Cumulative sums of the mode variances (kappa^2 + lam_i)^(-2 beta)."""
    return np.cumsum((kappa ** 2 + spec.eigenvalues) ** (-2.0 * beta))


# ------------------------------------------------------------------ OU ensemble

@dataclass(frozen=True, eq=False)
class OUEnsemble:
    alpha: float
    beta: float
    dt: float
    T: float
    times: np.ndarray
    lambdas: np.ndarray
    paths: np.ndarray       # (n_paths, steps + 1, K)
    seed: int

    def mode(self, i: int) -> np.ndarray:
        return self.paths[:, :, i]


def _ou_coefficients(lam: np.ndarray, alpha: float, beta: float, dt: float):
    """Decay e^{-alpha lam dt} and the noise scale of one exact step."""
    rate = alpha * lam
    decay = np.exp(-rate * dt)
    with np.errstate(divide="ignore", invalid="ignore"):
        # lam (1 - e^{-2 rate dt}) / (2 rate) = -expm1(-2 rate dt) / (2 alpha)
        var = np.where(lam > 0, -np.expm1(-2.0 * rate * dt) / (2.0 * alpha), 0.0)
    return decay, beta * np.sqrt(var)


def evolve_parabolic(spec: Spectrum, alpha: float, beta: float, T: float, dt: float, K: int,
                     seed: int, y0=None, n_paths: int = 1, stream: int = 0) -> OUEnsemble:
    """Mode coefficients of dY = alpha Delta Y dt + beta dN by the exact
    Gaussian transition; a zero mode keeps its initial value."""
    if not dt > 0:
        raise FieldError("dt must be positive")
    if T < dt:
        raise FieldError("T must be at least dt")
    if not (alpha > 0 and beta > 0):
        raise FieldError("alpha and beta must be positive")
    if K > len(spec.pairs):
        raise FieldError(f"{K} modes requested, spectrum has {len(spec.pairs)}")
    lam = spec.eigenvalues[:K]
    steps = int(round(T / dt))
    if abs(steps * dt - T) > 1e-9 * T:
        raise FieldError("T must be an integer multiple of dt")
    decay, scale = _ou_coefficients(lam, alpha, beta, dt)
    paths = np.empty((n_paths, steps + 1, K))
    paths[:, 0] = 0.0 if y0 is None else np.broadcast_to(np.asarray(y0, float), (n_paths, K))
    for n in range(steps):
        zeta = rng_for(seed, stream, n).standard_normal((n_paths, K))
        paths[:, n + 1] = decay * paths[:, n] + scale * zeta
    times = np.arange(steps + 1) * dt
    return OUEnsemble(alpha, beta, dt, T, times, lam, paths, seed)


def ou_moments(lam, alpha: float, beta: float, y0, T: float, dt: float):
    """Mean and variance at time T obtained by iterating the one-step moment
    maps m <- e m, s <- e^2 s + q^2 with step dt."""
    lam = np.asarray(lam, float)
    steps = int(round(T / dt))
    decay, scale = _ou_coefficients(lam, alpha, beta, dt)
    m = np.broadcast_to(np.asarray(y0, float), lam.shape).copy()
    s = np.zeros_like(lam)
    for _ in range(steps):
        m = decay * m
        s = decay * decay * s + scale * scale
    return m, s


def ou_stationary_variance(alpha: float, beta: float) -> float:
    return beta * beta / (2.0 * alpha)


# ----------------------------------------------------------------------- writers

def write_ensemble_csv(path, values: np.ndarray, positions) -> None:
    values = np.asarray(values, float)
    pos = np.asarray(positions, float)
    if values.shape[1] != pos.size:
        raise FieldError("positions do not match the ensemble width")
    lines = ["sample_id,position,value"]
    for i, row in enumerate(values):
        lines.extend(f"{i},{p!r},{x!r}" for p, x in zip(pos.tolist(), row.tolist()))
    Path(path).write_text("\n".join(lines) + "\n")


def write_ensemble_binary(path, values: np.ndarray) -> None:
    """Header: 4-byte magic, uint32 version, uint64 M, uint64 N (little
    endian), followed by M*N little-endian float64 in row-major order."""
    values = np.ascontiguousarray(values, dtype="<f8")
    M, N = values.shape
    with open(path, "wb") as fh:
        fh.write(BIN_MAGIC + struct.pack("<IQQ", BIN_VERSION, M, N))
        fh.write(values.tobytes())


def read_ensemble_binary(path) -> np.ndarray:
    data = Path(path).read_bytes()
    if data[:4] != BIN_MAGIC:
        raise FieldError("not an ensemble file")
    version, M, N = struct.unpack("<IQQ", data[4:24])
    if version != BIN_VERSION:
        raise FieldError(f"unsupported version {version}")
    return np.frombuffer(data[24:], dtype="<f8", count=M * N).reshape(M, N).copy()
