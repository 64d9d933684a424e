"""Run every named recipe (or a chosen subset) into one output directory per recipe.

    python3 scripts/run_recipes.py --out runs [--only fig2 fig4] [--seed 0]
"""
import argparse
import sys
import time
from pathlib import Path

from vegdyn.cli import RECIPES, run


def main(argv=None) -> int:
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--out", required=True, type=Path)
    p.add_argument("--only", nargs="*", choices=sorted(RECIPES), help="recipes to run (default: all)")
    p.add_argument("--seed", type=int)
    args = p.parse_args(argv)
    worst = 0
    for name in args.only or sorted(RECIPES):
        t0 = time.perf_counter()
        status = run(name, None, args.out / name, seed=args.seed)
        print(f"{name:14s} exit {status}  {time.perf_counter() - t0:7.1f} s  -> {args.out / name}")
        worst = max(worst, status)
    return worst


if __name__ == "__main__":
    sys.exit(main())
