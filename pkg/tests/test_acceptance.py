"""Acceptance criteria, one check per criterion.

Each check prints a single ``criterion N: PASS|FAIL ...`` line. Run with
``pytest tests/test_acceptance.py -v -s`` or ``python tests/test_acceptance.py``.
"""

from __future__ import annotations

import functools
import math
import time

import numpy as np
import pytest

from sregular import bounds as bd
from sregular.graphs import cycle_scaling_experiment, sample_configuration_model, spawn_seeds
from sregular.matrices import assemble, cell_sum_squares, classify, j_matrix_check
from sregular.quotient import QuotientSpec, quotient_eigen
from sregular.treewalks import (
    brute_force_walk_series,
    density_curve,
    kesten_mckay_density,
    moment_check,
    stieltjes_line,
    evaluate_gf,
    walk_recurrence,
)

TWO_CELL = QuotientSpec(np.array([[14, 2], [2, 2]]), n=(1, 1))
HOUSE = QuotientSpec(np.array([[0, 1, 1, 0, 0], [1, 0, 1, 1, 0], [1, 1, 0, 0, 1],
                               [0, 1, 0, 0, 1], [0, 0, 1, 1, 0]]))
HOUSE_COARSE = QuotientSpec(np.array([[0, 2, 0], [1, 1, 1], [0, 1, 1]]))
D3 = QuotientSpec(np.array([[3]]))
D2 = QuotientSpec(np.array([[2]]))
BIREG = QuotientSpec(np.array([[0, 2], [3, 0]]))
ORACLE_SPECS = {"[3]": D3, "[2]": D2, "[[0,2],[3,0]]": BIREG, "[[14,2],[2,2]]": TWO_CELL,
                "house": HOUSE, "house-coarse": HOUSE_COARSE}

ENSEMBLE_SEED = 20240601
FUZZ_SEED = 99


def report(number: int, passed: bool, detail: str) -> str:
    line = f"criterion {number}: {'PASS' if passed else 'FAIL'} {detail}"
    print(line)
    return line


# --- shared data ---------------------------------------------------------------

@functools.lru_cache(maxsize=None)
def two_cell_curve():
    grid = np.linspace(-9.0, 9.0, 3601)
    return density_curve(TWO_CELL, grid)


@functools.lru_cache(maxsize=None)
def two_cell_ensemble():
    """20 adjacency samples at n = (600, 600): bulk eigenvalues, scaled cell
    sums, and the per-graph invariants needed later."""
    spec = TWO_CELL.with_sizes((600, 600))
    out = []
    for seed in spawn_seeds(ENSEMBLE_SEED, 20):
        g = sample_configuration_model(spec, (600, 600), seed=seed)
        cs = classify(assemble(g, spec, "adjacency"))
        stats = cell_sum_squares(cs.bulk_eigenvalues, cs.eigenvectors[:, cs.bulk_indices], g.tau, g.k)
        out.append((g, cs, stats))
    return out


# --- criteria --------------------------------------------------------------------

def check_oracle_equivalence():
    t0 = time.perf_counter()
    mismatches = []
    for name, spec in ORACLE_SPECS.items():
        table = walk_recurrence(spec, 12)
        for cell in range(spec.k):
            brute = brute_force_walk_series(spec, cell, 12, cap=3 * 10**7)
            if table.omega_i[cell] != brute:
                mismatches.append((name, cell))
    elapsed = time.perf_counter() - t0
    ok = not mismatches and elapsed < 30
    return ok, f"exact recurrence vs tree enumeration, l<=12, {len(ORACLE_SPECS)} specs, " \
               f"mismatches={mismatches}, {elapsed:.1f}s (limit 30s)"


def check_kesten_mckay():
    t0 = time.perf_counter()
    grid = np.linspace(-2.9, 2.9, 581)
    curve = density_curve(D3, grid)
    elapsed = time.perf_counter() - t0
    exact = kesten_mckay_density(3, grid)
    keep = np.abs(np.abs(grid) - 2 * math.sqrt(2)) > 0.05
    err = float(np.max(np.abs(curve.mu[keep, 0] - exact[keep])))
    missing = int(np.sum(curve.status != "ok"))
    ok = err <= 2e-3 and missing == 0 and elapsed < 120
    return ok, f"sup error {err:.3e} (tol 2e-3), missing={missing}, {elapsed:.1f}s (limit 120s)"


def check_moments():
    curve = two_cell_curve()
    table = walk_recurrence(TWO_CELL, 8)
    m = moment_check(curve, table, 8)
    even = [float(m.rel_err[l]) for l in range(0, 9, 2)]
    odd = [float(m.abs_err[l]) for l in range(1, 9, 2)]
    ok = max(even) <= 0.02 and max(odd) <= 1e-2
    return ok, f"max even relative error {max(even):.2e} (tol 2e-2), max odd abs error {max(odd):.2e} (tol 1e-2)"


def check_ks():
    t0 = time.perf_counter()
    ens = two_cell_ensemble()
    pooled = np.sort(np.concatenate([cs.bulk_eigenvalues for _, cs, _ in ens]))
    curve = two_cell_curve()
    F = curve.cdf(pooled)
    m = len(pooled)
    ks = float(max(np.max(np.arange(1, m + 1) / m - F), np.max(F - np.arange(m) / m)))
    elapsed = time.perf_counter() - t0
    ok = ks <= 0.05 and elapsed < 600
    return ok, f"KS distance {ks:.4f} over {m} bulk eigenvalues (tol 0.05), {elapsed:.1f}s (limit 600s)"


def check_cell_sums():
    ens = two_cell_ensemble()
    curve = two_cell_curve()
    hits = total = 0
    for _, cs, stats in ens:
        lam = stats.eigenvalues
        within = np.ones(len(lam), dtype=bool)
        for i in range(TWO_CELL.k):
            ratio = curve.ratio_at(lam, i)
            within &= np.isfinite(ratio) & (np.abs(stats.scaled[:, i] - ratio) <= 0.25 * ratio)
        hits += int(within.sum())
        total += len(lam)
    frac = hits / total
    return frac >= 0.9, f"{frac:.4f} of bulk eigenvalues within 25% of the ratio curve in every cell (need 0.90)"


def check_cycle_scaling():
    res = cycle_scaling_experiment(D3, [200, 400, 800, 1600, 3200], radius=2, trials=200, seed=6)
    ok = -1.3 <= res.slope <= -0.7
    means = ", ".join(f"{m:.4f}" for m in res.mean)
    return ok, f"log-log slope {res.slope:.3f} (need [-1.3, -0.7]); means {means}"


FUZZ_SPECS = [
    ("[3]", D3, (200,)),
    ("[[14,2],[2,2]]", TWO_CELL, (100, 100)),
    ("[[0,2],[3,0]]", BIREG, (120, 80)),
    ("house-coarse", HOUSE_COARSE, (60, 120, 120)),
]


@functools.lru_cache(maxsize=None)
def fuzz_results():
    t0 = time.perf_counter()
    counts = {}
    violations = []
    graphs = []
    seeds = spawn_seeds(FUZZ_SEED, 1000)
    ab_cache = {}
    for t, seed in enumerate(seeds):
        name, spec, n = FUZZ_SPECS[t % len(FUZZ_SPECS)]
        spec = spec.with_sizes(n)
        g_seed, set_seed = seed.spawn(2)
        g = sample_configuration_model(spec, n, seed=g_seed)
        rng = np.random.Generator(np.random.Philox(set_seed))
        sp = bd.adjacency_spectrum(g, spec)
        if name not in ab_cache:
            ab_cache[name] = bd.alon_boppana_lower(spec, n)
        B = bd.random_subset(g, rng)
        C = bd.random_subset(g, rng, proper=True)
        ell = int(rng.integers(0, 7))
        for r in bd.all_reports(g, spec, B, C, ell, sp, ab_cache[name]):
            counts[r.name] = counts.get(r.name, 0) + 1
            if not r.holds:
                violations.append((t, r.name, r.lhs, r.rhs))
        if t < 40:
            graphs.append((g, spec, sp))
    return counts, violations, graphs, time.perf_counter() - t0


def check_bounds():
    counts, violations, _, elapsed = fuzz_results()
    names = {"eml_classic", "eml_tight", "eml_scaled", "eml_neighbor_variance", "induced_complement",
             "walks_avoiding", "diameter", "alon_boppana"}
    covered = names <= set(counts)
    ok = not violations and covered and elapsed < 300
    return ok, f"{sum(counts.values())} reports over 1000 trials, {len(violations)} violations, " \
               f"all bound types present={covered}, {elapsed:.1f}s (limit 300s)"


def check_classification():
    worst_top = worst_sum = 0.0
    graphs = [(g, g.k, cs) for g, cs, _ in two_cell_ensemble()]
    graphs += [(g, g.k, sp) for g, _, sp in fuzz_results()[2]]
    for g, _, cs in graphs:
        worst_top = max(worst_top, abs(cs.eigenvalues[-1] - cs.lambda_S))
        worst_sum = max(worst_sum, cs.bulk_cell_sums().max() / math.sqrt(g.n_total))
    worst_j = 0.0
    for spec, n in [(TWO_CELL, (600, 600)), (D3, (200,)), (BIREG, (120, 80)), (HOUSE_COARSE, (60, 120, 120)),
                    (HOUSE, (1, 1, 1, 1, 1))]:
        for m in range(5):
            worst_j = max(worst_j, j_matrix_check(spec, n, m))
    ok = worst_top <= 1e-9 and worst_sum <= 1e-8 and worst_j <= 1e-10
    return ok, f"{len(graphs)} graphs: max |lambda_max - lambda_S| {worst_top:.1e} (tol 1e-9), " \
               f"max bulk cell sum / sqrt(n) {worst_sum:.1e} (tol 1e-8), max J deviation {worst_j:.1e} (tol 1e-10)"


def check_gf():
    rng = np.random.default_rng(2024)
    worst_series = 0.0
    herglotz_bad = 0
    worst_far = 0.0
    for spec in ORACLE_SPECS.values():
        lam = quotient_eigen(spec).lambda_S
        table = walk_recurrence(spec, 40, exact=False)
        coeffs = np.array([table.cell(i) for i in range(spec.k)])
        for _ in range(100):
            y = 0.3 / lam * math.sqrt(rng.random()) * np.exp(2j * np.pi * rng.random())
            X = evaluate_gf(spec, y).X_cell
            series = coeffs @ (y ** np.arange(41))
            worst_series = max(worst_series, float(np.abs(X - series).max()))
        for eps in (1e-2, 1e-1, 1.0):
            zs = np.linspace(-1.2 * lam, 1.2 * lam, 200) + 1j * eps
            R, good = stieltjes_line(spec, zs)
            herglotz_bad += int(np.sum(~good)) + int(np.sum(R[good].imag >= 0))
        for angle in np.linspace(0.1, 2 * np.pi - 0.1, 8):
            z = 1e6 * np.exp(1j * angle)
            X = evaluate_gf(spec, 1 / z).X_cell
            worst_far = max(worst_far, float(np.abs(X - 1).max()))   # z R(z) = X(1/z)
    ok = worst_series <= 1e-6 and herglotz_bad == 0 and worst_far <= 1e-5
    return ok, f"series vs Newton {worst_series:.1e} (tol 1e-6), Herglotz violations {herglotz_bad}, " \
               f"max |zR(z) - 1| at |z|=1e6 {worst_far:.1e} (tol 1e-5)"


CHECKS = {
    1: check_oracle_equivalence,
    2: check_kesten_mckay,
    3: check_moments,
    4: check_ks,
    5: check_cell_sums,
    6: check_cycle_scaling,
    7: check_bounds,
    8: check_classification,
    9: check_gf,
}


@pytest.mark.slow
@pytest.mark.parametrize("number", sorted(CHECKS))
def test_acceptance(number, capsys):
    ok, detail = CHECKS[number]()
    with capsys.disabled():
        print()
        report(number, ok, detail)
    assert ok, detail


if __name__ == "__main__":
    results = {k: fn() for k, fn in CHECKS.items()}
    for k, (ok, detail) in results.items():
        report(k, ok, detail)
    raise SystemExit(0 if all(ok for ok, _ in results.values()) else 1)
