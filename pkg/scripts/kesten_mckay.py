"""Tree density for S=[d] against the closed form, as CSV.

    python scripts/kesten_mckay.py --degree 3 --points 581 > km.csv
"""

import argparse
import math
import sys

import numpy as np

from sregular.quotient import QuotientSpec
from sregular.treewalks import density_curve, kesten_mckay_density


def main():
    p = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    p.add_argument("--degree", type=int, default=3)
    p.add_argument("--points", type=int, default=581)
    a = p.parse_args()
    edge = 2 * math.sqrt(a.degree - 1)
    grid = np.linspace(-1.025 * edge, 1.025 * edge, a.points)
    curve = density_curve(QuotientSpec(np.array([[a.degree]])), grid)
    exact = kesten_mckay_density(a.degree, grid)
    print("lambda,tree,closed_form,abs_error")
    for x, f, g in zip(grid, curve.mu[:, 0], exact):
        print(f"{x:.17g},{f:.17g},{g:.17g},{abs(f - g):.17g}")
    away = np.abs(np.abs(grid) - edge) > 0.05
    print(f"sup error away from the edges: {np.max(np.abs(curve.mu[away, 0] - exact[away])):.3e}",
          file=sys.stderr)


if __name__ == "__main__":
    main()
