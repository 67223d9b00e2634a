"""Coefficient growth and eigenvalue growth exponent: uniform W vs Cantor W."""
import argparse

from kreinfeller.kernels import diagonal_tables, growth_slope, secular_coefficients
from kreinfeller.measure import LEFT, RIGHT, cantor_spec, compile_measure, uniform_spec
from kreinfeller.spectrum import growth_exponent, solve_spectrum


def run(name, W, V, orders, count):
    slopes = [growth_slope(diagonal_tables(W, V, K)) for K in orders]
    d = solve_spectrum(diagonal_tables(W, V, 1), "dirichlet", count)
    g = growth_exponent(eigenvalues=d.eigenvalues)
    a = secular_coefficients(diagonal_tables(W, V, max(orders)))
    rc = dict(growth_exponent(coeffs=a).rho_coeff_by_n)
    n = max(rc)
    print(f"{name:<10s} slopes {' '.join(f'{s:+.4f}' for s in slopes)}  "
          f"rho_fit {g.rho_fit:.4f}  rho_coeff(n={n}) {rc[n]:.4f}")


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--depth", type=int, default=8)
    ap.add_argument("--resolution", type=int, default=1024)
    ap.add_argument("--count", type=int, default=40)
    args = ap.parse_args()
    orders = (20, 30, 40)
    V = compile_measure(uniform_spec(LEFT), args.resolution)
    run("uniform", compile_measure(uniform_spec(RIGHT), args.resolution), V, orders, args.count)
    run(f"cantor({args.depth})", compile_measure(cantor_spec(args.depth, RIGHT), 1), V, orders,
        args.count)


if __name__ == "__main__":
    main()
