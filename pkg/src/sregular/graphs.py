"""Finite S-regular graphs: construction, configuration-model sampling,
verification, color refinement, ball statistics and truncated S-regular
trees.

Cells and vertices are 0-based throughout. Random streams come from
:func:`make_rng`, a Philox (counter-based) generator keyed by a
:class:`numpy.random.SeedSequence`; per-trial streams are derived with
:func:`spawn_seeds`, i.e. ``SeedSequence(seed).spawn(count)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property

import numpy as np
import scipy.sparse as sp
from scipy.sparse.csgraph import connected_components

from .quotient import (
    QuotientError,
    QuotientSpec,
    balance_solution,
    constructibility_problems,
    minimal_cell_sizes,
    scale_to_total,
)

DEFAULT_TREE_CAP = 10**7


def make_rng(seed) -> np.random.Generator:
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.Generator(np.random.Philox(seed))


def spawn_seeds(seed, count: int) -> list[np.random.SeedSequence]:
    if isinstance(seed, np.random.SeedSequence):
        return seed.spawn(count)
    return np.random.SeedSequence(seed).spawn(count)


# --- graph type -----------------------------------------------------------

@dataclass(frozen=True, eq=False)
class PartitionedGraph:
    """Simple undirected graph with a cell function ``tau``.

    ``edges`` is an (m, 2) array with ``u < v`` in each row, sorted
    lexicographically.
    """

    edges: np.ndarray
    tau: np.ndarray
    k: int

    @classmethod
    def from_edges(cls, n_total: int, edges, tau=None, k=None) -> "PartitionedGraph":
        e = np.asarray(edges, dtype=np.int64).reshape(-1, 2)
        if len(e) and (e.min() < 0 or e.max() >= n_total):
            raise ValueError("edge endpoint out of range")
        if np.any(e[:, 0] == e[:, 1]):
            raise ValueError("graph has a loop")
        e = np.sort(e, axis=1)
        order = np.lexsort((e[:, 1], e[:, 0]))
        e = e[order]
        if len(e) > 1 and np.any(np.all(e[1:] == e[:-1], axis=1)):
            raise ValueError("graph has parallel edges")
        tau = np.zeros(n_total, dtype=np.int64) if tau is None else np.asarray(tau, dtype=np.int64)
        if tau.shape != (n_total,):
            raise ValueError("tau must have one entry per vertex")
        if k is None:
            k = int(tau.max()) + 1 if n_total else 0
        if n_total and (tau.min() < 0 or tau.max() >= k):
            raise ValueError("cell index out of range")
        e.setflags(write=False)
        tau.setflags(write=False)
        return cls(e, tau, int(k))

    @property
    def n_total(self) -> int:
        return len(self.tau)

    @property
    def n_edges(self) -> int:
        return len(self.edges)

    @cached_property
    def cell_sizes(self) -> tuple[int, ...]:
        return tuple(int(x) for x in np.bincount(self.tau, minlength=self.k))

    @cached_property
    def adjacency(self) -> sp.csr_matrix:
        n = self.n_total
        u, v = self.edges[:, 0], self.edges[:, 1]
        data = np.ones(2 * len(u), dtype=np.int64)
        A = sp.csr_matrix((data, (np.concatenate([u, v]), np.concatenate([v, u]))), shape=(n, n))
        A.sort_indices()
        return A

    def neighbors(self, v: int) -> np.ndarray:
        A = self.adjacency
        return A.indices[A.indptr[v]:A.indptr[v + 1]]

    def cell_degrees(self) -> np.ndarray:
        """``counts[v, j] = |N(v) & V_j|``."""
        counts = np.zeros((self.n_total, self.k), dtype=np.int64)
        u, v = self.edges[:, 0], self.edges[:, 1]
        np.add.at(counts, (u, self.tau[v]), 1)
        np.add.at(counts, (v, self.tau[u]), 1)
        return counts

    def is_connected(self) -> bool:
        if self.n_total == 0:
            return True
        ncomp, _ = connected_components(self.adjacency, directed=False)
        return ncomp == 1

    def subgraph(self, vertices) -> "PartitionedGraph":
        """Induced subgraph, vertices relabelled in increasing order."""
        vertices = np.unique(np.asarray(vertices, dtype=np.int64))
        index = np.full(self.n_total, -1, dtype=np.int64)
        index[vertices] = np.arange(len(vertices))
        keep = (index[self.edges[:, 0]] >= 0) & (index[self.edges[:, 1]] >= 0)
        e = index[self.edges[keep]]
        return PartitionedGraph.from_edges(len(vertices), e, self.tau[vertices], self.k)


@dataclass(frozen=True)
class SRegularityViolation:
    vertex: int
    cell: int
    expected: int
    actual: int


def check_s_regular(g: PartitionedGraph, spec: QuotientSpec) -> SRegularityViolation | None:
    """First (vertex, cell) whose neighbour count differs from ``s_{tau(v), cell}``,
    or None when ``g`` is S-regular with respect to its partition."""
    if g.k != spec.k:
        raise ValueError(f"graph has {g.k} cells but spec has {spec.k}")
    counts = g.cell_degrees()
    expected = spec.S[g.tau]
    bad = np.argwhere(counts != expected)
    if len(bad) == 0:
        return None
    v, j = bad[0]
    return SRegularityViolation(int(v), int(j), int(expected[v, j]), int(counts[v, j]))


def _offsets(n) -> np.ndarray:
    return np.concatenate([[0], np.cumsum(n)])


# --- deterministic construction ------------------------------------------

def _circulant_edges(size: int, degree: int) -> list[tuple[int, int]]:
    edges = []
    for a in range(size):
        for t in range(1, degree // 2 + 1):
            edges.append((a, (a + t) % size))
        if degree % 2:
            # size is even here since size * degree is even
            if a < size // 2:
                edges.append((a, a + size // 2))
    return edges


def _biregular_edges(n_i: int, s_ij: int, n_j: int) -> list[tuple[int, int]]:
    """(s_ij, s_ji)-biregular bipartite graph: vertex a of V_i joins the block
    ``a*s_ij, ..., a*s_ij + s_ij - 1`` of V_j taken mod n_j. When
    ``s_ji | n_i`` this is a disjoint union of ``K_{s_ji, s_ij}``."""
    return [(a, (a * s_ij + t) % n_j) for a in range(n_i) for t in range(s_ij)]


def construct_deterministic(spec: QuotientSpec, n=None) -> PartitionedGraph:
    """Connected S-regular graph built from circulants inside cells and
    wrapped-block biregular graphs between cells; if that union is
    disconnected, the component of vertex 0 is returned."""
    n = tuple(n) if n is not None else (spec.n or minimal_cell_sizes(spec))
    S = spec.S
    if balance_solution(spec) is None:
        raise QuotientError("S has no positive balance solution")
    lhs = np.asarray(n)[:, None] * S
    if np.any(lhs != lhs.T):
        raise QuotientError(f"cell sizes {n} violate the balance equations")
    problems = constructibility_problems(S, n)
    if problems:
        raise QuotientError("; ".join(problems))
    off = _offsets(n)
    edges = []
    for i in range(spec.k):
        if S[i, i]:
            edges += [(off[i] + a, off[i] + c) for a, c in _circulant_edges(n[i], S[i, i])]
        for j in range(i + 1, spec.k):
            if S[i, j]:
                edges += [(off[i] + a, off[j] + c) for a, c in _biregular_edges(n[i], S[i, j], n[j])]
    tau = np.repeat(np.arange(spec.k), n)
    g = PartitionedGraph.from_edges(int(off[-1]), edges, tau, spec.k)
    _, labels = connected_components(g.adjacency, directed=False)
    if labels.max() > 0:
        g = g.subgraph(np.flatnonzero(labels == labels[0]))
    violation = check_s_regular(g, spec)
    if violation is not None:
        raise QuotientError(f"construction is not S-regular: {violation}")
    return g


# --- configuration model ---------------------------------------------------

class SamplingError(RuntimeError):
    def __init__(self, message, attempts):
        super().__init__(f"{message} after {attempts} attempts")
        self.attempts = attempts


# pieces whose estimated probability of a simple pairing is below this use
# sequential pairing instead of whole-piece rejection
REJECTION_FLOOR = 1e-3


def _simple_probability_within(d: int) -> float:
    return math.exp(-(d * d - 1) / 4)


def _simple_probability_between(a: int, b: int) -> float:
    return math.exp(-(a - 1) * (b - 1) / 2)


def _reject_within(size, d, rng, max_retries):
    stubs = np.repeat(np.arange(size, dtype=np.int64), d)
    for attempt in range(1, max_retries + 1):
        pairs = stubs[rng.permutation(len(stubs))].reshape(-1, 2)
        lo, hi = pairs.min(axis=1), pairs.max(axis=1)
        if np.any(lo == hi):
            continue
        if len(np.unique(lo * size + hi)) == len(lo):
            return np.column_stack([lo, hi]), attempt
    raise SamplingError(f"no simple {d}-regular pairing on {size} vertices", max_retries)


def _reject_between(n_i, a, n_j, b, rng, max_retries):
    left = np.repeat(np.arange(n_i, dtype=np.int64), a)
    right = np.repeat(np.arange(n_j, dtype=np.int64), b)
    for attempt in range(1, max_retries + 1):
        r = right[rng.permutation(len(right))]
        if len(np.unique(left * n_j + r)) == len(left):
            return np.column_stack([left, r]), attempt
    raise SamplingError(f"no simple ({a},{b})-biregular pairing", max_retries)


def _sequential_within(size, d, rng, max_retries):
    for attempt in range(1, max_retries + 1):
        edges = set()
        stubs = np.repeat(np.arange(size, dtype=np.int64), d)
        while len(stubs):
            rng.shuffle(stubs)
            left = []
            for u, v in stubs.reshape(-1, 2).tolist():
                if u > v:
                    u, v = v, u
                if u != v and (u, v) not in edges:
                    edges.add((u, v))
                else:
                    left += (u, v)
            if left and not any(
                u != v and (min(u, v), max(u, v)) not in edges
                for u in set(left) for v in set(left)
            ):
                break
            stubs = np.array(left, dtype=np.int64)
        else:
            return np.array(sorted(edges), dtype=np.int64).reshape(-1, 2), attempt
    raise SamplingError(f"sequential pairing failed for {d}-regular on {size}", max_retries)


def _sequential_between(n_i, a, n_j, b, rng, max_retries):
    for attempt in range(1, max_retries + 1):
        edges = set()
        left = np.repeat(np.arange(n_i, dtype=np.int64), a)
        right = np.repeat(np.arange(n_j, dtype=np.int64), b)
        while len(left):
            rng.shuffle(left)
            rng.shuffle(right)
            rest_l, rest_r = [], []
            for u, v in zip(left.tolist(), right.tolist()):
                if (u, v) not in edges:
                    edges.add((u, v))
                else:
                    rest_l.append(u)
                    rest_r.append(v)
            if rest_l and all((u, v) in edges for u in set(rest_l) for v in set(rest_r)):
                break
            left = np.array(rest_l, dtype=np.int64)
            right = np.array(rest_r, dtype=np.int64)
        else:
            return np.array(sorted(edges), dtype=np.int64).reshape(-1, 2), attempt
    raise SamplingError(f"sequential pairing failed for ({a},{b})-biregular", max_retries)


def sample_configuration_model(spec: QuotientSpec, n=None, seed=None,
                               max_retries: int = 1000, method: str = "auto") -> PartitionedGraph:
    """Random simple S-regular graph from the configuration model.

    Each piece (the ``s_ii``-regular graph inside a cell, the biregular
    graph between two cells) is paired independently and rejected until
    simple; the pieces are independent, so this equals rejecting the whole
    graph. Pieces whose chance of a simple pairing is below
    ``REJECTION_FLOOR`` (e.g. 14-regular) use sequential pairing, which is
    only asymptotically uniform. ``method`` forces ``"rejection"`` or
    ``"sequential"`` for every piece.
    """
    if method not in ("auto", "rejection", "sequential"):
        raise ValueError(f"unknown method {method!r}")
    n = tuple(n) if n is not None else (spec.n or minimal_cell_sizes(spec))
    S = spec.S
    lhs = np.asarray(n)[:, None] * S
    if np.any(lhs != lhs.T):
        raise QuotientError(f"cell sizes {n} violate the balance equations")
    problems = constructibility_problems(S, n)
    if problems:
        raise QuotientError("; ".join(problems))
    rng = make_rng(seed)
    off = _offsets(n)
    pieces = []
    for i in range(spec.k):
        d = int(S[i, i])
        if d:
            use_rejection = method == "rejection" or (
                method == "auto" and _simple_probability_within(d) >= REJECTION_FLOOR)
            fn = _reject_within if use_rejection else _sequential_within
            e, _ = fn(n[i], d, rng, max_retries)
            pieces.append(e + off[i])
        for j in range(i + 1, spec.k):
            a, b = int(S[i, j]), int(S[j, i])
            if a:
                use_rejection = method == "rejection" or (
                    method == "auto" and _simple_probability_between(a, b) >= REJECTION_FLOOR)
                fn = _reject_between if use_rejection else _sequential_between
                e, _ = fn(n[i], a, n[j], b, rng, max_retries)
                pieces.append(e + np.array([off[i], off[j]]))
    edges = np.concatenate(pieces) if pieces else np.zeros((0, 2), dtype=np.int64)
    tau = np.repeat(np.arange(spec.k), n)
    return PartitionedGraph.from_edges(int(off[-1]), edges, tau, spec.k)


# --- color refinement -------------------------------------------------------

def coarsest_equitable_partition(g: PartitionedGraph) -> tuple[np.ndarray, np.ndarray]:
    """Color refinement from the trivial partition (g's own tau is ignored).

    Cells are numbered by their smallest vertex. Returns ``(tau, quotient)``.
    """
    n = g.n_total
    colors = np.zeros(n, dtype=np.int64)
    ncolors = 1
    u, v = g.edges[:, 0], g.edges[:, 1]
    while True:
        counts = np.zeros((n, ncolors), dtype=np.int64)
        np.add.at(counts, (u, colors[v]), 1)
        np.add.at(counts, (v, colors[u]), 1)
        _, refined = np.unique(np.column_stack([colors, counts]), axis=0, return_inverse=True)
        refined = refined.reshape(-1)
        new_count = int(refined.max()) + 1
        if new_count == ncolors:
            break
        colors, ncolors = refined, new_count
    # relabel by first occurrence
    _, first = np.unique(colors, return_index=True)
    order = np.argsort(first)
    relabel = np.empty(ncolors, dtype=np.int64)
    relabel[colors[first[order]]] = np.arange(ncolors)
    tau = relabel[colors]
    reps = np.sort(first)
    counts = np.zeros((n, ncolors), dtype=np.int64)
    np.add.at(counts, (u, tau[v]), 1)
    np.add.at(counts, (v, tau[u]), 1)
    return tau, counts[reps]


# --- balls and cycles -------------------------------------------------------

def ball(g: PartitionedGraph, v: int, r: int) -> np.ndarray:
    """Vertices within distance r of v."""
    seen = {int(v)}
    frontier = [int(v)]
    for _ in range(r):
        nxt = []
        for x in frontier:
            for y in g.neighbors(x).tolist():
                if y not in seen:
                    seen.add(y)
                    nxt.append(y)
        frontier = nxt
    return np.array(sorted(seen), dtype=np.int64)


def count_cycles_in_ball(g: PartitionedGraph, v: int, r: int) -> int:
    """Cyclomatic number (edges - vertices + components) of the subgraph
    induced by the radius-r ball around v."""
    if r < 0:
        raise ValueError("radius must be non-negative")
    h = g.subgraph(ball(g, v, r))
    ncomp, _ = connected_components(h.adjacency, directed=False)
    return h.n_edges - h.n_total + ncomp


def ball_cycle_counts(g: PartitionedGraph, r: int) -> np.ndarray:
    """``count_cycles_in_ball(g, v, r)`` for every v at once (balls are
    connected, so the component count is 1)."""
    A = g.adjacency.astype(bool).astype(np.int64)
    n = g.n_total
    M = sp.identity(n, dtype=np.int64, format="csr")
    step = (A + sp.identity(n, dtype=np.int64, format="csr"))
    for _ in range(r):
        M = (M @ step).astype(bool).astype(np.int64)
    sizes = np.asarray(M.sum(axis=1)).ravel()
    inside = np.asarray((M @ A).multiply(M).sum(axis=1)).ravel() // 2
    return inside - sizes + 1


@dataclass
class CycleScaling:
    n_total: np.ndarray
    mean: np.ndarray
    stderr: np.ndarray
    slope: float

    def rows(self):
        return list(zip(self.n_total.tolist(), self.mean.tolist(), self.stderr.tolist()))


def cycle_scaling_experiment(spec: QuotientSpec, sizes, radius: int, trials: int,
                             seed, method: str = "auto") -> CycleScaling:
    """Monte Carlo estimate of E[X_v] (cycles in the radius ball around a
    uniform vertex) at each total size, plus the log-log slope.

    Each trial samples one graph and averages X_v over all its vertices,
    which is an unbiased estimate for uniform v.
    """
    sizes = list(sizes)
    means, errs = [], []
    for size, ss in zip(sizes, spawn_seeds(seed, len(sizes))):
        n = scale_to_total(spec, size)
        vals = np.array([
            ball_cycle_counts(sample_configuration_model(spec, n, s, method=method), radius).mean()
            for s in ss.spawn(trials)
        ])
        means.append(vals.mean())
        errs.append(vals.std(ddof=1) / math.sqrt(trials) if trials > 1 else float("nan"))
    means = np.array(means)
    if np.all(means > 0) and len(sizes) > 1:
        slope = float(np.polyfit(np.log(sizes), np.log(means), 1)[0])
    else:
        slope = float("nan")
    return CycleScaling(np.array(sizes), means, np.array(errs), slope)


# --- truncated S-regular tree ----------------------------------------------

class TreeTooLarge(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class TreeBall:
    """Ball of radius ``radius`` around a root of the S-regular tree.

    Vertices are numbered breadth first; children of a vertex are
    contiguous. ``removed_cell`` drops one root edge toward that cell (the
    rooting used for the ``omega_ij`` walk counts).
    """

    parent: np.ndarray
    tau: np.ndarray
    depth: np.ndarray
    root_cell: int
    radius: int
    removed_cell: int | None = None

    @property
    def size(self) -> int:
        return len(self.parent)

    def edges(self) -> np.ndarray:
        child = np.arange(1, self.size)
        return np.column_stack([self.parent[1:], child])

    def as_graph(self, k: int) -> PartitionedGraph:
        return PartitionedGraph.from_edges(self.size, self.edges(), self.tau, k)

    def operator(self, spec: QuotientSpec, exact: bool | None = None):
        """Matrix-free symmetric operator with diagonal ``b`` and edge
        weights ``F``; integer arithmetic when the weights are integral."""
        if exact is None:
            exact = bool(np.all(spec.F == np.rint(spec.F)) and np.all(spec.b == np.rint(spec.b)))
        dtype = np.int64 if exact else np.float64
        tau = self.tau.astype(np.int64)
        diag = spec.b.astype(dtype)[tau]
        w = spec.F.astype(dtype)[tau[self.parent[1:]], tau[1:]]
        parent = self.parent[1:]
        # children of each vertex form a contiguous run
        starts = np.searchsorted(parent, np.arange(self.size), side="left")
        stops = np.searchsorted(parent, np.arange(self.size), side="right")

        def matvec(x):
            x = np.asarray(x, dtype=dtype)
            y = diag * x
            y[1:] += w * x[parent]
            wx = np.concatenate([[0], np.cumsum(w * x[1:])]).astype(dtype)
            y += wx[stops] - wx[starts]
            return y

        return _TreeOperator(self.size, dtype, matvec)


class _TreeOperator:
    def __init__(self, size, dtype, matvec):
        self.shape = (size, size)
        self.dtype = np.dtype(dtype)
        self._matvec = matvec

    def __matmul__(self, x):
        return self._matvec(x)


def build_tree_ball(spec: QuotientSpec, root_cell: int, radius: int,
                    removed_cell: int | None = None, cap: int = DEFAULT_TREE_CAP) -> TreeBall:
    if radius < 0:
        raise ValueError("radius must be non-negative")
    S = spec.S
    k = spec.k
    root_counts = S[root_cell].copy()
    if removed_cell is not None:
        if root_counts[removed_cell] == 0:
            raise ValueError(f"s_{root_cell}{removed_cell} = 0, no edge to remove")
        root_counts[removed_cell] -= 1
    parents = [np.array([-1], dtype=np.int64)]
    cells = [np.array([root_cell], dtype=np.int8)]
    depths = [np.array([0], dtype=np.int8)]
    level_ids = np.array([0], dtype=np.int64)
    level_cells = np.array([root_cell], dtype=np.int64)
    level_parent_cells = None
    total = 1
    for d in range(1, radius + 1):
        if level_parent_cells is None:
            counts = root_counts[None, :]
        else:
            counts = S[level_cells] - (level_parent_cells[:, None] == np.arange(k)[None, :])
        flat = counts.reshape(-1)
        m = int(flat.sum())
        total += m
        if total > cap:
            raise TreeTooLarge(f"tree ball exceeds cap of {cap} vertices at depth {d}")
        child_parent = np.repeat(np.repeat(level_ids, k), flat)
        child_cells = np.repeat(np.tile(np.arange(k), len(level_ids)), flat)
        ids = np.arange(total - m, total, dtype=np.int64)
        parents.append(child_parent)
        cells.append(child_cells.astype(np.int8))
        depths.append(np.full(m, d, dtype=np.int8))
        level_parent_cells = level_cells[child_parent - level_ids[0]] if m else level_cells[:0]
        level_ids, level_cells = ids, child_cells
        if m == 0:
            break
    parent = np.concatenate(parents)
    return TreeBall(parent, np.concatenate(cells), np.concatenate(depths),
                    int(root_cell), int(radius), removed_cell)


# --- edge-list I/O ----------------------------------------------------------

def write_graph(g: PartitionedGraph, edge_path, tau_path) -> None:
    import json

    with open(edge_path, "w") as fh:
        for u, v in g.edges.tolist():
            fh.write(f"{u} {v}\n")
    with open(tau_path, "w") as fh:
        json.dump({"tau": g.tau.tolist(), "k": g.k}, fh)
        fh.write("\n")


def read_graph(edge_path, tau_path) -> PartitionedGraph:
    import json

    with open(tau_path) as fh:
        meta = json.load(fh)
    tau = meta["tau"]
    rows = []
    with open(edge_path) as fh:
        for line in fh:
            line = line.split("#", 1)[0].strip()
            if line:
                u, v = line.split()
                rows.append((int(u), int(v)))
    return PartitionedGraph.from_edges(len(tau), rows, tau, meta.get("k"))
