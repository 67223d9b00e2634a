"""Monte Carlo checks of the bridge, Whittle-Matern and spectral OU samplers."""
import argparse
import math

import numpy as np

from kreinfeller.dirichlet import BridgeKernel, trace
from kreinfeller.fields import (FieldConfig, bridge_l2v_norms, evolve_parabolic,
                                matern_covariance, ou_stationary_variance, sample_whittle_matern)
from kreinfeller.kernels import diagonal_tables
from kreinfeller.measure import LEFT, RIGHT, cantor_spec, compile_measure, uniform_spec
from kreinfeller.spectrum import solve_spectrum


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--w", choices=["uniform", "cantor"], default="uniform")
    ap.add_argument("--resolution", type=int, default=256)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()
    wspec = uniform_spec(RIGHT) if args.w == "uniform" else cantor_spec(8, RIGHT)
    W = compile_measure(wspec, args.resolution)
    V = compile_measure(uniform_spec(LEFT), args.resolution)

    nrm = bridge_l2v_norms(W, V, seed=args.seed, n_paths=100_000)
    tr = trace(BridgeKernel(W), V)
    se = nrm.std(ddof=1) / math.sqrt(nrm.size)
    print(f"bridge: E|B|^2 {nrm.mean():.6f} +- {se:.1e}, trace {tr:.6f}")

    spec = solve_spectrum(diagonal_tables(W, V, 1), "periodic", 40)
    cfg = FieldConfig(kappa=6.0, beta=0.5, modes=30, samples=20_000, seed=args.seed)
    fs = sample_whittle_matern(spec, cfg)
    i = np.array([0, V.n // 4, V.n // 2])
    emp = np.mean(fs.values[:, i] * fs.values[:, i[::-1]], axis=0)
    print("matern cov:", np.round(emp, 5), "analytic:",
          np.round(matern_covariance(spec, cfg, i, i[::-1]), 5), "valid:", fs.validity_flag)

    ens = evolve_parabolic(spec, 0.5, 0.8, T=20.0, dt=0.05, K=6, seed=args.seed, n_paths=10_000,
                           y0=np.full(6, 0.5))
    var = ens.paths[:, -1, 1:].var(axis=0, ddof=1)
    print("OU mode variances:", np.round(var, 4), "target", ou_stationary_variance(0.5, 0.8),
          "zero mode constant:", bool(np.ptp(ens.mode(0)) == 0.0))


if __name__ == "__main__":
    main()
