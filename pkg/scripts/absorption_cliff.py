"""Absorption rate of the single-patch two-state chain across jbar, on both time scales.

    python3 scripts/absorption_cliff.py [--N 250 500 1000]

The printed generator runs N times slower than the site-level chain, so the
second column block multiplies by N to give rates per unit of simulated time.
"""
import argparse

import numpy as np

from vegdyn import qsd


def main(argv=None) -> None:
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--N", nargs="+", type=int, default=[250, 500, 1000])
    p.add_argument("--jbar", nargs="+", type=float, default=[0.2, 0.3, 0.4, 0.45, 0.5, 0.55, 0.6, 0.65, 0.8])
    args = p.parse_args(argv)
    table = qsd.qsd_sweep(args.N, args.jbar).rho_table()
    head = "jbar   " + "".join(f"  rho N={N:<7d}" for N in args.N) + "".join(f"  N*rho N={N:<5d}" for N in args.N)
    print(head)
    for i, jb in enumerate(args.jbar):
        printed = [table[N][1][i] for N in args.N]
        print(f"{jb:<6.3f} " + "".join(f"  {r:12.4e}" for r in printed)
              + "".join(f"  {N * r:12.4e}" for N, r in zip(args.N, printed)))
    if 0.45 in args.jbar and 0.65 in args.jbar:
        lo, hi = args.jbar.index(0.45), args.jbar.index(0.65)
        print("rho(0.45) / rho(0.65):", {N: f"{table[N][1][lo] / table[N][1][hi]:.3g}" for N in args.N})


if __name__ == "__main__":
    main()
