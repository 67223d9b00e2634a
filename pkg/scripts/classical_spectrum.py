"""Periodic and Dirichlet spectra of the uniform pair against (2 pi n)^2 and (n pi)^2."""
import argparse
import math

import numpy as np

from kreinfeller.kernels import diagonal_tables
from kreinfeller.measure import LEFT, RIGHT, compile_measure, uniform_spec
from kreinfeller.spectrum import solve_spectrum


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--resolutions", type=int, nargs="+", default=[1024, 2048, 4096, 8192])
    ap.add_argument("--count", type=int, default=10)
    args = ap.parse_args()
    n = np.arange(1, args.count + 1)
    print("N      periodic max rel err   dirichlet max rel err")
    for N in args.resolutions:
        W = compile_measure(uniform_spec(RIGHT), N)
        V = compile_measure(uniform_spec(LEFT), N)
        t = diagonal_tables(W, V, 1)
        p = solve_spectrum(t, "periodic", 2 * args.count + 1)
        d = solve_spectrum(t, "dirichlet", args.count)
        want = (2 * math.pi * np.repeat(n, 2)) ** 2
        ep = np.max(np.abs(p.eigenvalues[1:2 * args.count + 1] / want - 1))
        ed = np.max(np.abs(d.eigenvalues[:args.count] / (n * math.pi) ** 2 - 1))
        print(f"{N:<6d} {ep:.3e}              {ed:.3e}")


if __name__ == "__main__":
    main()
