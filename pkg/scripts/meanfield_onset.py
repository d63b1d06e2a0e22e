"""Cavity occupation along U_l from the self-consistent mean field, with the onset estimate."""

import argparse

import numpy as np

from cavity_hubbard.meanfield import sweep_cavity


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--L", type=int, default=64)
    ap.add_argument("--t", type=float, default=1.0)
    ap.add_argument("--delta-abs", type=float, default=10.0)
    ap.add_argument("--kappa", type=float, default=1.0)
    ap.add_argument("--count", type=int, default=81)
    ap.add_argument("--variant", choices=["gauge", "literal"], default="gauge")
    args = ap.parse_args()
    U = np.linspace(-args.t, args.t, args.count)
    sols = sweep_cavity(U, args.L, args.L, args.t, args.delta_abs, args.kappa, variant=args.variant)
    n = np.array([s.best.photon_number for s in sols])
    for u, x, s in zip(U, n, sols):
        print(f"{u:8.4f} {x:14.6e}  fixed points: {len(s.fixed_points)}")
    lit = U[n > 1e-12]
    print("onset U_l/t:", lit.max() if lit.size else "none")


if __name__ == "__main__":
    main()
