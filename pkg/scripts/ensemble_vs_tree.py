"""Ensemble spectra against tree densities: adjacency and normalized
Laplacian for the 2x2 spec, adjacency for the house spec.

    python scripts/ensemble_vs_tree.py --out runs/ensemble_vs_tree [--size 1250] [--trials 20]

Each run directory holds eigenvalues.csv, cellstats.csv, density.csv,
treedensity.csv and comparison.json (see README for columns).
"""

import argparse
from pathlib import Path

from sregular.cli import main

SPECS = Path(__file__).resolve().parent.parent / "specs"


def run(args):
    out = Path(args.out)
    jobs = [
        ("two_cell_adjacency", "two_cell.json", ["--n", str(args.size), str(args.size)], "adjacency"),
        ("two_cell_normalized_laplacian", "two_cell.json", ["--n", str(args.size), str(args.size)],
         "normalized-laplacian"),
        ("house_adjacency", "house.json", ["--scale", str(2 * args.size // 5)], "adjacency"),
    ]
    for name, spec, sizes, matrix in jobs:
        code = main(["report", "--spec", str(SPECS / spec), *sizes, "--trials", str(args.trials),
                     "--seed", str(args.seed), "--matrix", matrix, "--workers", str(args.workers),
                     "--out", str(out / name)])
        if code:
            raise SystemExit(code)


if __name__ == "__main__":
    p = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    p.add_argument("--out", default="runs/ensemble_vs_tree")
    p.add_argument("--size", type=int, default=1250, help="cell size for the 2x2 spec")
    p.add_argument("--trials", type=int, default=20)
    p.add_argument("--seed", type=int, default=7)
    p.add_argument("--workers", type=int, default=1)
    run(p.parse_args())
