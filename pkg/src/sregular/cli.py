"""Command-line front end.

Exit codes
    0   success
    1   the checked property fails (validation violations, bound violations)
    2   unreadable input (malformed JSON, bad flags, missing files)
    10  spec stage failed (spec invalid for the requested command)
    11  graph stage failed (construction or sampling)
    12  spectrum stage failed (assembly or classification)
    13  tree-density stage failed (continuation or walk counts)
    14  bounds stage failed
    15  output stage failed (cannot write files)

Per-trial seeds are the children of ``numpy.random.SeedSequence(seed)`` in
spawn order; trial t uses child t with a Philox bit generator.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import math
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import bounds as bnd
from .graphs import (
    SamplingError,
    ball_cycle_counts,
    construct_deterministic,
    read_graph,
    sample_configuration_model,
    spawn_seeds,
    write_graph,
)
from .matrices import PRESETS, assemble, cell_sum_squares, classify, preset_weights, spectral_density_histogram
from .quotient import QuotientError, QuotientSpec, minimal_cell_sizes, validate_quotient
from .treewalks import DEFAULT_EPSILONS, ContinuationError, density_curve, evaluate_gf, support_bound

log = logging.getLogger("sregular")

EXIT_OK, EXIT_FAIL, EXIT_INPUT = 0, 1, 2
EXIT_SPEC, EXIT_GRAPH, EXIT_SPECTRUM, EXIT_TREE, EXIT_BOUNDS, EXIT_OUTPUT = 10, 11, 12, 13, 14, 15


class StageError(Exception):
    def __init__(self, code: int, message: str):
        super().__init__(message)
        self.code = code


def fmt(x) -> str:
    """Locale-independent cell formatting; floats with 17 significant digits."""
    if isinstance(x, (bool, np.bool_)):
        return "true" if x else "false"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, (float, np.floating)):
        x = float(x)
        if math.isnan(x):
            return "nan"
        if math.isinf(x):
            return "inf" if x > 0 else "-inf"
        return format(x, ".17g")
    return str(x)


def write_csv(path: Path, header, rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for r in rows:
            w.writerow([fmt(x) for x in r])


def write_json(path: Path, obj) -> None:
    path.write_text(json.dumps(obj, indent=2, sort_keys=True, default=_jsonable) + "\n")


def _jsonable(x):
    if isinstance(x, np.generic):
        return x.item()
    if isinstance(x, np.ndarray):
        return x.tolist()
    raise TypeError(type(x))


# --- configuration -------------------------------------------------------------

@dataclass
class RunConfig:
    command: str
    spec_path: Path | None = None
    n: tuple[int, ...] | None = None
    scale: int | None = None
    seed: int | None = None
    trials: int = 1
    out: Path = Path(".")
    matrix: str = "adjacency"
    grid: tuple[float, float, int] | None = None
    eps: tuple[float, ...] = DEFAULT_EPSILONS
    radius: int | None = None
    bins: int = 100
    graph: Path | None = None
    ell: int = 4
    workers: int = 1
    method: str = "auto"
    extra: dict = field(default_factory=dict)


def parse_grid(text: str) -> tuple[float, float, int]:
    try:
        lo, hi, pts = text.split(":")
        lo, hi, pts = float(lo), float(hi), int(pts)
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"grid must be lo:hi:points, got {text!r}") from exc
    if not hi > lo or pts < 2:
        raise argparse.ArgumentTypeError("grid needs hi > lo and at least 2 points")
    return lo, hi, pts


def parse_eps(text: str) -> tuple[float, ...]:
    try:
        vals = tuple(float(t) for t in text.split(",") if t.strip())
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"eps must be comma-separated numbers, got {text!r}") from exc
    if not vals or any(v <= 0 for v in vals):
        raise argparse.ArgumentTypeError("eps values must be positive")
    return vals


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="sregular", description="Spectra of S-regular graphs and their tree limits.",
        epilog="Exit codes: 0 ok, 1 check failed, 2 bad input, 10-15 stage failures "
               "(spec, graph, spectrum, tree-density, bounds, output).")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, sampling=False):
        sp.add_argument("--spec", type=Path, required=True, help="quotient spec JSON")
        sp.add_argument("--n", type=int, nargs="+", help="cell sizes (default: spec's n, else minimal)")
        sp.add_argument("--scale", type=int, help="multiply the minimal cell sizes by this factor")
        sp.add_argument("--out", type=Path, default=Path("."), help="output directory")
        if sampling:
            sp.add_argument("--seed", type=int, required=True, help="master seed")
            sp.add_argument("--trials", type=int, default=1)
            sp.add_argument("--workers", type=int, default=1, help="process pool size for trials")
            sp.add_argument("--method", choices=("auto", "rejection", "sequential"), default="auto",
                            help="configuration-model pairing strategy")

    def matrix_flag(sp):
        sp.add_argument("--matrix", choices=PRESETS, default="adjacency")

    def tree_flags(sp):
        sp.add_argument("--grid", type=parse_grid, help="lambda grid lo:hi:points")
        sp.add_argument("--eps", type=parse_eps, default=DEFAULT_EPSILONS,
                        help="imaginary offsets e1,e2,... extrapolated to zero")

    sp = sub.add_parser("validate", help="check a quotient spec")
    sp.add_argument("--spec", type=Path, required=True)
    sp.add_argument("--out", type=Path, help="also write validation.json here")

    sp = sub.add_parser("construct", help="deterministic S-regular graph")
    common(sp)

    sp = sub.add_parser("sample", help="configuration-model samples")
    common(sp, sampling=True)
    sp.add_argument("--radius", type=int, help="also tabulate ball-cycle counts at this radius")

    sp = sub.add_parser("spectrum", help="classified spectrum of one graph")
    common(sp)
    matrix_flag(sp)
    sp.add_argument("--graph", type=Path, help="edge list (with .tau.json sidecar); default: sample")
    sp.add_argument("--seed", type=int, help="seed for sampling when --graph is absent")
    sp.add_argument("--bins", type=int, default=100)
    sp.add_argument("--grid", type=parse_grid, help="histogram range lo:hi:bins")

    sp = sub.add_parser("tree-density", help="limiting spectral densities on the tree")
    sp.add_argument("--spec", type=Path, required=True)
    sp.add_argument("--out", type=Path, default=Path("."))
    sp.add_argument("--n", type=int, nargs="+", help="cell sizes for the mixture weights")
    matrix_flag(sp)
    tree_flags(sp)

    sp = sub.add_parser("verify-bounds", help="evaluate every eigenvalue bound on sampled graphs")
    common(sp, sampling=True)
    sp.add_argument("--ell", type=int, default=4, help="largest walk length for walk-avoidance")

    sp = sub.add_parser("report", help="sampled ensemble against the tree limit")
    common(sp, sampling=True)
    matrix_flag(sp)
    tree_flags(sp)
    sp.add_argument("--bins", type=int, default=100)
    return p


def config_from_args(ns: argparse.Namespace) -> RunConfig:
    cfg = RunConfig(command=ns.command)
    for name in ("n", "scale", "seed", "trials", "out", "matrix", "grid", "eps", "radius", "bins",
                 "graph", "ell", "workers", "method"):
        if hasattr(ns, name) and getattr(ns, name) is not None:
            setattr(cfg, name, getattr(ns, name))
    cfg.spec_path = ns.spec
    if cfg.n is not None:
        cfg.n = tuple(cfg.n)
    return cfg


# --- helpers -----------------------------------------------------------------

def load_config_spec(cfg: RunConfig) -> QuotientSpec:
    try:
        data = json.loads(Path(cfg.spec_path).read_text())
    except OSError as exc:
        raise StageError(EXIT_INPUT, f"cannot read spec: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise StageError(EXIT_INPUT, f"malformed JSON in {cfg.spec_path}: {exc}") from exc
    try:
        return QuotientSpec.from_dict(data)
    except QuotientError as exc:
        raise StageError(EXIT_INPUT, str(exc)) from exc


def resolve_sizes(spec: QuotientSpec, cfg: RunConfig) -> tuple[int, ...]:
    report = validate_quotient(spec.with_sizes(cfg.n) if cfg.n else spec)
    if not report.ok:
        raise StageError(EXIT_SPEC, "invalid spec: " + ", ".join(report.codes))
    if cfg.n:
        if len(cfg.n) != spec.k:
            raise StageError(EXIT_SPEC, f"--n needs {spec.k} values")
        return tuple(cfg.n)
    base = tuple(spec.n) if spec.n is not None else minimal_cell_sizes(spec)
    factor = cfg.scale or 1
    return tuple(int(x) * factor for x in base)


def _ensure_out(cfg: RunConfig) -> Path:
    try:
        cfg.out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise StageError(EXIT_OUTPUT, f"cannot create {cfg.out}: {exc}") from exc
    return cfg.out


def _sample(spec, n, seed_seq, method):
    try:
        return sample_configuration_model(spec, n, seed=seed_seq, method=method)
    except (SamplingError, QuotientError) as exc:
        raise StageError(EXIT_GRAPH, f"sampling failed: {exc}") from exc


def _map(fn, items, workers: int):
    """Ordered map, optionally over a process pool."""
    if workers > 1 and len(items) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(fn, items))
    return [fn(x) for x in items]


def _classified(g, spec, preset):
    try:
        T = assemble(g, spec, preset=preset)
        return T, classify(T)
    except (QuotientError, np.linalg.LinAlgError) as exc:
        raise StageError(EXIT_SPECTRUM, f"spectrum stage: {exc}") from exc


def _tree_spec(spec: QuotientSpec, preset: str, n) -> QuotientSpec:
    weighted = preset_weights(spec, preset)
    return weighted.with_sizes(n) if n is not None else weighted


def _default_grid(spec: QuotientSpec, points: int = 1601) -> tuple[float, float, int]:
    r = support_bound(spec)
    return (-r, r, points)


def _tree_rows(curve):
    k = curve.k
    for p, lam in enumerate(curve.grid.tolist()):
        yield ([lam] + curve.mu[p].tolist() + [float(curve.mixture[p])]
               + curve.ratio[p].tolist() + [str(curve.status[p])])


def _tree_header(k):
    return (["lambda"] + [f"mu_{i + 1}" for i in range(k)] + ["mixture"]
            + [f"ratio_{i + 1}" for i in range(k)] + ["status"])


def _gf_debug(spec, grid, eps):
    """Debug evaluations at the grid ends and middle for every eps."""
    out = []
    picks = sorted({0, len(grid) // 2, len(grid) - 1})
    for e in eps:
        for p in picks:
            z = complex(grid[p], e)
            entry = {"z": [float(grid[p]), float(e)]}
            try:
                entry.update(evaluate_gf(spec, 1 / z).to_dict())
            except ContinuationError as exc:
                entry["error"] = str(exc)
            out.append(entry)
    return out


def _compute_curve(tspec, grid, eps):
    try:
        return density_curve(tspec, np.linspace(*grid), eps)
    except (ContinuationError, ValueError, np.linalg.LinAlgError) as exc:
        raise StageError(EXIT_TREE, f"tree density: {exc}") from exc


def ks_distance(sorted_values: np.ndarray, cdf) -> float:
    """Two-sided Kolmogorov-Smirnov distance between the empirical CDF of
    ``sorted_values`` and a continuous CDF."""
    m = len(sorted_values)
    if m == 0:
        return float("nan")
    F = cdf(sorted_values)
    hi = np.arange(1, m + 1) / m
    lo = np.arange(m) / m
    return float(max(np.max(hi - F), np.max(F - lo)))


# --- commands ----------------------------------------------------------------

def cmd_validate(cfg: RunConfig) -> int:
    try:
        data = json.loads(Path(cfg.spec_path).read_text())
    except OSError as exc:
        print(json.dumps({"ok": False, "error": f"cannot read: {exc}"}))
        return EXIT_INPUT
    except json.JSONDecodeError as exc:
        print(json.dumps({"ok": False, "error": "malformed JSON", "line": exc.lineno,
                          "column": exc.colno, "message": exc.msg}))
        return EXIT_INPUT
    try:
        spec = QuotientSpec.from_dict(data)
    except QuotientError as exc:
        print(json.dumps({"ok": False, "error": str(exc)}))
        return EXIT_INPUT
    report = validate_quotient(spec)
    doc = report.to_dict()
    print(json.dumps(doc, sort_keys=True))
    if cfg.out is not None and cfg.extra.get("write_out", False):
        write_json(_ensure_out(cfg) / "validation.json", doc)
    return EXIT_OK if report.ok else EXIT_FAIL


def cmd_construct(cfg: RunConfig) -> int:
    spec = load_config_spec(cfg)
    n = resolve_sizes(spec, cfg)
    try:
        g = construct_deterministic(spec, n)
    except QuotientError as exc:
        raise StageError(EXIT_GRAPH, f"construction failed: {exc}") from exc
    out = _ensure_out(cfg)
    write_graph(g, out / "graph.edges", out / "graph.tau.json")
    print(f"wrote graph with {g.n_total} vertices and {g.n_edges} edges to {out}")
    return EXIT_OK


def _sample_task(args):
    spec_dict, n, seed_seq, method, radius = args
    spec = QuotientSpec.from_dict(spec_dict)
    g = _sample(spec, n, seed_seq, method)
    cycles = None if radius is None else ball_cycle_counts(g, radius)
    return g, cycles


def cmd_sample(cfg: RunConfig) -> int:
    spec = load_config_spec(cfg)
    n = resolve_sizes(spec, cfg)
    seeds = spawn_seeds(cfg.seed, cfg.trials)
    tasks = [(spec.to_dict(), n, s, cfg.method, cfg.radius) for s in seeds]
    results = _map(_sample_task, tasks, cfg.workers)
    out = _ensure_out(cfg)
    rows = []
    for t, (g, cycles) in enumerate(results):
        write_graph(g, out / f"sample_{t:03d}.edges", out / f"sample_{t:03d}.tau.json")
        if cycles is not None:
            rows.append((t, g.n_total, cfg.radius, float(cycles.mean()), int(cycles.max())))
    if cfg.radius is not None:
        write_csv(out / "cycles.csv", ["trial", "n_total", "radius", "mean_cycles", "max_cycles"], rows)
    print(f"wrote {cfg.trials} sample(s) with cell sizes {n} to {out}")
    return EXIT_OK


def cmd_spectrum(cfg: RunConfig) -> int:
    spec = load_config_spec(cfg)
    if cfg.graph is not None:
        tau_path = cfg.graph.with_suffix(".tau.json")
        try:
            g = read_graph(cfg.graph, tau_path)
        except (OSError, ValueError, KeyError, json.JSONDecodeError) as exc:
            raise StageError(EXIT_INPUT, f"cannot read graph: {exc}") from exc
    else:
        if cfg.seed is None:
            raise StageError(EXIT_INPUT, "--seed is required when no --graph is given")
        n = resolve_sizes(spec, cfg)
        g = _sample(spec, n, spawn_seeds(cfg.seed, 1)[0], cfg.method)
    _, cs = _classified(g, spec, cfg.matrix)
    out = _ensure_out(cfg)
    labels = cs.labels()
    write_csv(out / "eigenvalues.csv", ["index", "value", "class"],
              ((i, v, labels[i]) for i, v in enumerate(cs.eigenvalues.tolist())))
    stats = cell_sum_squares(cs.eigenvalues, cs.eigenvectors, g.tau, g.k)
    write_csv(out / "cellstats.csv", ["lambda", "cell", "raw", "scaled", "cellsum"], stats.rows())
    lo, hi, bins = cfg.grid if cfg.grid else (*_pad(cs.eigenvalues), cfg.bins)
    hist = spectral_density_histogram(cs.eigenvalues, bins, (lo, hi))
    write_csv(out / "density.csv", ["bin_left", "bin_right", "mass"], hist.rows())
    print(f"lambda_S={fmt(cs.lambda_S)} lambda_B={fmt(cs.lambda_B)} n={g.n_total}")
    return EXIT_OK


def _pad(values, frac=0.02):
    lo, hi = float(np.min(values)), float(np.max(values))
    pad = max(frac * (hi - lo), 1e-9)
    return lo - pad, hi + pad


def cmd_tree_density(cfg: RunConfig) -> int:
    spec = load_config_spec(cfg)
    n = cfg.n if cfg.n else (spec.n if spec.n is not None else None)
    tspec = _tree_spec(spec, cfg.matrix, n)
    if tspec.n is None:
        try:
            tspec = tspec.with_sizes(minimal_cell_sizes(spec))
        except QuotientError as exc:
            raise StageError(EXIT_SPEC, str(exc)) from exc
    grid = cfg.grid or _default_grid(tspec)
    curve = _compute_curve(tspec, grid, cfg.eps)
    out = _ensure_out(cfg)
    write_csv(out / "treedensity.csv", _tree_header(tspec.k), _tree_rows(curve))
    write_json(out / "gf_debug.json", {
        "epsilons": list(curve.epsilons), "grid": list(grid), "clipped": curve.clipped,
        "missing_points": int(np.sum(curve.status != "ok")), "mass_on_grid": curve.mass(),
        "evaluations": _gf_debug(tspec, np.linspace(*grid), curve.epsilons)})
    print(f"tree density on {grid[2]} points; mass on grid {fmt(curve.mass())}")
    return EXIT_OK


def _bounds_task(args):
    spec_dict, n, seed_seq, method, ell_max = args
    spec = QuotientSpec.from_dict(spec_dict)
    child_graph, child_sets = seed_seq.spawn(2)
    g = _sample(spec, n, child_graph, method)
    rng = np.random.Generator(np.random.Philox(child_sets))
    try:
        spectrum = bnd.adjacency_spectrum(g, spec)
        B = bnd.random_subset(g, rng)
        C = bnd.random_subset(g, rng, proper=True)
        ell = int(rng.integers(0, ell_max + 1))
        return bnd.all_reports(g, spec, B, C, ell, spectrum)
    except (QuotientError, ValueError, AssertionError) as exc:
        raise StageError(EXIT_BOUNDS, f"bounds stage: {exc}") from exc


def cmd_bounds(cfg: RunConfig) -> int:
    spec = load_config_spec(cfg)
    n = resolve_sizes(spec, cfg)
    seeds = spawn_seeds(cfg.seed, cfg.trials)
    tasks = [(spec.to_dict(), n, s, cfg.method, cfg.ell) for s in seeds]
    results = _map(_bounds_task, tasks, cfg.workers)
    out = _ensure_out(cfg)
    rows = []
    failures = 0
    for t, reports in enumerate(results):
        for r in reports:
            name, lhs, rhs, slack, holds, ctx = r.row()
            rows.append((name, lhs, rhs, slack, holds, json.dumps({"trial": t, **json.loads(ctx)},
                                                                    sort_keys=True)))
            failures += not holds
    write_csv(out / "bounds.csv", ["name", "lhs", "rhs", "slack", "holds", "context"], rows)
    print(f"{len(rows)} bound evaluations, {failures} violations")
    return EXIT_OK if failures == 0 else EXIT_FAIL


def _report_task(args):
    spec_dict, n, seed_seq, method, preset = args
    spec = QuotientSpec.from_dict(spec_dict)
    g = _sample(spec, n, seed_seq, method)
    _, cs = _classified(g, spec, preset)
    stats = cell_sum_squares(cs.eigenvalues, cs.eigenvectors, g.tau, g.k)
    return cs.eigenvalues, cs.labels(), stats


def cmd_report(cfg: RunConfig) -> int:
    spec = load_config_spec(cfg)
    n = resolve_sizes(spec, cfg)
    seeds = spawn_seeds(cfg.seed, cfg.trials)
    tasks = [(spec.to_dict(), n, s, cfg.method, cfg.matrix) for s in seeds]
    results = _map(_report_task, tasks, cfg.workers)
    out = _ensure_out(cfg)

    eig_rows, cell_rows, bulk = [], [], []
    for t, (vals, labels, stats) in enumerate(results):
        for i, v in enumerate(vals.tolist()):
            eig_rows.append((i, v, labels[i], t))
        is_bulk = labels == "bulk"
        bulk.append(vals[is_bulk])
        for row, b in zip(_group(stats.rows(), stats.raw.shape[1]), is_bulk):
            for r in row:
                cell_rows.append((*r, "bulk" if b else "S", t))
    pooled = np.sort(np.concatenate(bulk))
    write_csv(out / "eigenvalues.csv", ["index", "value", "class", "trial"], eig_rows)
    write_csv(out / "cellstats.csv", ["lambda", "cell", "raw", "scaled", "cellsum", "class", "trial"],
              cell_rows)

    tspec = _tree_spec(spec, cfg.matrix, n)
    grid = cfg.grid or (*_pad(pooled, 0.05), 801)
    hist = spectral_density_histogram(pooled, cfg.bins, grid[:2])
    write_csv(out / "density.csv", ["bin_left", "bin_right", "mass"], hist.rows())

    curve = _compute_curve(tspec, grid, cfg.eps)
    write_csv(out / "treedensity.csv", _tree_header(tspec.k), _tree_rows(curve))

    ks = ks_distance(pooled, curve.cdf)
    scaled = np.concatenate([res[2].scaled[res[1] == "bulk"] for res in results])
    lam = np.concatenate([res[0][res[1] == "bulk"] for res in results])
    within = []
    for i in range(spec.k):
        ratio = curve.ratio_at(lam, i)
        ok = np.isfinite(ratio)
        within.append(float(np.mean(np.abs(scaled[ok, i] - ratio[ok]) <= 0.25 * ratio[ok])) if ok.any() else float("nan"))
    write_json(out / "comparison.json", {
        "matrix": cfg.matrix, "n": list(n), "trials": cfg.trials, "seed": cfg.seed,
        "bulk_eigenvalues": int(len(pooled)), "ks_distance": ks,
        "mass_on_grid": curve.mass(), "clipped": curve.clipped,
        "missing_points": int(np.sum(curve.status != "ok")),
        "cellsum_within_25pct": within, "grid": list(grid), "epsilons": list(curve.epsilons)})
    print(f"KS distance {fmt(ks)} over {len(pooled)} bulk eigenvalues")
    return EXIT_OK


def _group(rows, k):
    for i in range(0, len(rows), k):
        yield rows[i:i + k]


COMMANDS = {
    "validate": cmd_validate,
    "construct": cmd_construct,
    "sample": cmd_sample,
    "spectrum": cmd_spectrum,
    "tree-density": cmd_tree_density,
    "verify-bounds": cmd_bounds,
    "report": cmd_report,
}


def _join_negative_values(argv):
    """Let ``--grid -3:3:601`` through: argparse would read the value as a flag."""
    out = []
    it = iter(argv)
    for a in it:
        if a in ("--grid", "--eps"):
            nxt = next(it, None)
            out.append(a if nxt is None else f"{a}={nxt}")
        else:
            out.append(a)
    return out


def main(argv=None) -> int:
    parser = build_parser()
    argv = _join_negative_values(sys.argv[1:] if argv is None else list(argv))
    try:
        ns = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_INPUT
    logging.basicConfig(level=logging.INFO if ns.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    cfg = config_from_args(ns)
    if ns.command == "validate":
        cfg.out = ns.out
        cfg.extra["write_out"] = ns.out is not None
    try:
        return COMMANDS[ns.command](cfg)
    except StageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.code
    except OSError as exc:
        print(f"error: output stage: {exc}", file=sys.stderr)
        return EXIT_OUTPUT


if __name__ == "__main__":
    sys.exit(main())
