"""Eigenvalue inequalities for S-regular graphs, evaluated on concrete inputs.

Every function returns a :class:`BoundReport` with both sides computed; a
report that does not hold means a bug somewhere upstream. All bounds refer
to the adjacency matrix.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np
import scipy.sparse as sp
from scipy.sparse.csgraph import shortest_path

from .graphs import PartitionedGraph
from .matrices import ClassifiedSpectrum, assemble, classify
from .quotient import QuotientSpec, quotient_eigen

HOLD_TOL = 1e-9


@dataclass(frozen=True, eq=False)
class SubsetProfile:
    mask: np.ndarray
    counts: np.ndarray
    sizes: np.ndarray

    @classmethod
    def of(cls, g: PartitionedGraph, vertices) -> "SubsetProfile":
        """``vertices`` is a boolean mask of length n or an index array."""
        vertices = np.asarray(vertices)
        if vertices.dtype == bool:
            if vertices.shape != (g.n_total,):
                raise ValueError("mask length differs from vertex count")
            mask = vertices.copy()
        else:
            mask = np.zeros(g.n_total, dtype=bool)
            mask[vertices.astype(np.int64)] = True
        counts = np.bincount(g.tau[mask], minlength=g.k)
        return cls(mask, counts, np.asarray(g.cell_sizes))

    @property
    def size(self) -> int:
        return int(self.counts.sum())

    @property
    def fractions(self) -> np.ndarray:
        return self.counts / self.sizes

    @property
    def global_fraction(self) -> float:
        return self.size / int(self.sizes.sum())


@dataclass
class BoundReport:
    name: str
    lhs: float
    rhs: float
    context: dict = field(default_factory=dict)

    @property
    def slack(self) -> float:
        return self.rhs - self.lhs

    @property
    def holds(self) -> bool:
        if math.isinf(self.rhs) and self.rhs > 0:
            return True
        return self.slack >= -HOLD_TOL * max(1.0, abs(self.rhs))

    def row(self):
        return (self.name, self.lhs, self.rhs, self.slack, self.holds,
                json.dumps(self.context, sort_keys=True, default=_jsonable))


def _jsonable(x):
    if isinstance(x, np.generic):
        return x.item()
    if isinstance(x, np.ndarray):
        return x.tolist()
    raise TypeError(type(x))


def adjacency_spectrum(g: PartitionedGraph, spec: QuotientSpec, check_tol: float = 1e-9) -> ClassifiedSpectrum:
    """Classified adjacency spectrum, checking that the top eigenvalue is the
    largest quotient eigenvalue."""
    T = assemble(g, spec, preset="adjacency")
    cs = classify(T)
    top = float(cs.eigenvalues[-1])
    if abs(top - cs.lambda_S) > check_tol * max(1.0, abs(top)):
        raise AssertionError(f"largest eigenvalue {top} differs from lambda_S {cs.lambda_S}")
    return cs


def _counts(x) -> np.ndarray:
    if isinstance(x, SubsetProfile):
        return x.counts
    return np.asarray(x)


def expected_edges(spec: QuotientSpec, n, B, C) -> float:
    """``sum_ij sqrt(s_ij s_ji / (n_i n_j)) |B_i| |C_j|``; B and C are
    profiles or per-cell counts. The radicands are exact rationals."""
    n = [int(x) for x in n]
    b, c = _counts(B), _counts(C)
    total = 0.0
    for i in range(spec.k):
        for j in range(spec.k):
            s = int(spec.S[i, j]) * int(spec.S[j, i])
            if s == 0 or b[i] == 0 or c[j] == 0:
                continue
            r = Fraction(s, n[i] * n[j])
            num, den = math.isqrt(r.numerator), math.isqrt(r.denominator)
            root = num / den if num * num == r.numerator and den * den == r.denominator else math.sqrt(r)
            total += root * int(b[i]) * int(c[j])
    return total


def edge_incidences(g: PartitionedGraph, B: SubsetProfile, C: SubsetProfile) -> int:
    """``1_B^T A 1_C``: ordered pairs (u, v) with u in B, v in C, u ~ v; an
    edge inside B and C counts twice."""
    A = g.adjacency
    return int(B.mask.astype(np.int64) @ (A @ C.mask.astype(np.int64)))


def _context(g, B=None, C=None, **extra):
    ctx = {"n": g.n_total}
    if B is not None:
        ctx["B"] = B.counts.tolist()
    if C is not None:
        ctx["C"] = C.counts.tolist()
    ctx.update(extra)
    return ctx


def eml_reports(g: PartitionedGraph, spec: QuotientSpec, B, C,
                spectrum: ClassifiedSpectrum | None = None) -> list[BoundReport]:
    """The three mixing-lemma variants sharing one left-hand side
    ``| |E(B,C)| - expected_edges |``."""
    B = B if isinstance(B, SubsetProfile) else SubsetProfile.of(g, B)
    C = C if isinstance(C, SubsetProfile) else SubsetProfile.of(g, C)
    spectrum = spectrum or adjacency_spectrum(g, spec)
    lam_b = spectrum.lambda_B
    n = g.n_total
    lhs = abs(edge_incidences(g, B, C) - expected_edges(spec, g.cell_sizes, B, C))
    bi, ci = B.fractions, C.fractions
    classic = lam_b * math.sqrt(B.size * C.size)
    tight = lam_b * math.sqrt(float(np.sum(B.counts * (1 - bi))) * float(np.sum(C.counts * (1 - ci))))
    scaled = lam_b * n * math.sqrt(B.global_fraction * float(np.sum(ci * (1 - ci))))
    ctx = _context(g, B, C, lambda_B=lam_b)
    return [BoundReport("eml_classic", lhs, classic, ctx),
            BoundReport("eml_tight", lhs, tight, ctx),
            BoundReport("eml_scaled", lhs, scaled, ctx)]


def eml_classic(g, spec, B, C, spectrum=None) -> BoundReport:
    return eml_reports(g, spec, B, C, spectrum)[0]


def eml_tight(g, spec, B, C, spectrum=None) -> BoundReport:
    return eml_reports(g, spec, B, C, spectrum)[1]


def eml_scaled(g, spec, B, C, spectrum=None) -> BoundReport:
    return eml_reports(g, spec, B, C, spectrum)[2]


def eml_neighbor_variance(g: PartitionedGraph, spec: QuotientSpec, B,
                          spectrum: ClassifiedSpectrum | None = None) -> BoundReport:
    """``sum_v sum_i (|N_{B_i}(v)| - b_i s_{tau(v) i})^2 <= lambda_B^2 sum_i b_i (1 - b_i) n_i``."""
    B = B if isinstance(B, SubsetProfile) else SubsetProfile.of(g, B)
    spectrum = spectrum or adjacency_spectrum(g, spec)
    A = g.adjacency
    onehot = sp.csr_matrix((B.mask.astype(np.int64), (np.arange(g.n_total), g.tau)),
                           shape=(g.n_total, g.k))
    counts = (A @ onehot).toarray()                     # |N_{B_i}(v)|
    expect = spec.S[g.tau].astype(float) * B.fractions[None, :]
    lhs = float(np.sum((counts - expect) ** 2))
    b = B.fractions
    rhs = spectrum.lambda_B ** 2 * float(np.sum(b * (1 - b) * B.sizes))
    return BoundReport("eml_neighbor_variance", lhs, rhs, _context(g, B, lambda_B=spectrum.lambda_B))


def _induced_top(g: PartitionedGraph, keep: np.ndarray) -> float:
    idx = np.flatnonzero(keep)
    if len(idx) == 0:
        return 0.0
    sub = g.adjacency[idx][:, idx].toarray().astype(float)
    return float(np.linalg.eigvalsh(sub)[-1])


def _complement_rhs(spectrum: ClassifiedSpectrum, C: SubsetProfile) -> float:
    cmin = float(C.fractions.min())
    return spectrum.lambda_S * (1 - cmin) + spectrum.lambda_B * cmin


def induced_complement_bound(g: PartitionedGraph, spec: QuotientSpec, C,
                             spectrum: ClassifiedSpectrum | None = None) -> BoundReport:
    """``lambda_max(A restricted to V minus C) <= lambda_S (1 - min c_i) + lambda_B min c_i``."""
    C = C if isinstance(C, SubsetProfile) else SubsetProfile.of(g, C)
    if C.size == g.n_total:
        raise ValueError("C must be a proper subset of V")
    spectrum = spectrum or adjacency_spectrum(g, spec)
    lhs = _induced_top(g, ~C.mask)
    return BoundReport("induced_complement", lhs, _complement_rhs(spectrum, C),
                       _context(g, C=C, lambda_S=spectrum.lambda_S, lambda_B=spectrum.lambda_B))


def walks_avoiding_bound(g: PartitionedGraph, spec: QuotientSpec, C, ell: int,
                         spectrum: ClassifiedSpectrum | None = None) -> BoundReport:
    """Walks of length ``ell`` that avoid C: ``1^T A_C'^ell 1 <= m * rho^ell``
    where rho is the induced-complement bound and ``m = n - |C|``."""
    if ell < 0:
        raise ValueError("ell must be non-negative")
    C = C if isinstance(C, SubsetProfile) else SubsetProfile.of(g, C)
    spectrum = spectrum or adjacency_spectrum(g, spec)
    idx = np.flatnonzero(~C.mask)
    sub = g.adjacency[idx][:, idx]
    x = np.ones(len(idx), dtype=np.int64)
    for _ in range(ell):
        x = sub @ x
    lhs = float(int(x.sum()))
    rhs = len(idx) * _complement_rhs(spectrum, C) ** ell
    return BoundReport("walks_avoiding", lhs, rhs, _context(g, C=C, ell=ell))


@dataclass
class AlonBoppana:
    value: float
    best_ell: int | None
    per_ell: dict
    asymptotic: float

    def report(self, lambda_B: float, n: int) -> BoundReport:
        return BoundReport("alon_boppana", self.value, lambda_B,
                           {"n": n, "ell": self.best_ell, "sqrt_lambda_S": self.asymptotic})


def alon_boppana_lower(spec: QuotientSpec, n, ell_range=None) -> AlonBoppana:
    """Finite-n lower bound on lambda_B:
    ``max_ell ((1/n) sum_i n_i (S^ell 1)_i - (1/n) tr(S^(2 ell)))^(1/(2 ell))``.

    ``(S^ell 1)_i`` counts walks of length ell from a vertex of cell i, which
    is at most its number of closed walks of length 2 ell, and ``tr S^(2 ell)``
    is the sum of the S-eigenvalues to the power 2 ell. Both are integers,
    so the radicand is exact; ells with a non-positive radicand are skipped.
    """
    n = [int(x) for x in n]
    total = sum(n)
    if ell_range is None:
        ell_range = range(1, max(2, int(math.log(total)) + 2))
    S = [[int(x) for x in row] for row in spec.S.tolist()]
    k = spec.k

    def matmul(X, Y):
        return [[sum(X[i][m] * Y[m][j] for m in range(k)) for j in range(k)] for i in range(k)]

    per_ell = {}
    best, best_ell = 0.0, None
    for ell in ell_range:
        P = [[int(i == j) for j in range(k)] for i in range(k)]
        for _ in range(ell):
            P = matmul(P, S)
        P2 = matmul(P, P)
        walks = sum(n[i] * sum(P[i]) for i in range(k))
        trace = sum(P2[i][i] for i in range(k))
        rad = Fraction(walks - trace, total)
        if rad <= 0:
            per_ell[ell] = None
            continue
        val = math.exp((math.log(rad.numerator) - math.log(rad.denominator)) / (2 * ell))
        per_ell[ell] = val
        if val > best:
            best, best_ell = val, ell
    lam_s = quotient_eigen(spec).lambda_S
    return AlonBoppana(best, best_ell, per_ell, math.sqrt(lam_s))


def walk_lower_bound_eigen(spec: QuotientSpec, n, ell: int) -> np.ndarray:
    """``(S^ell 1)_i`` via the lifted orthonormal S-eigenvectors:
    ``sum_j lambda_j^ell <1, phi_j> phi_j(i)``."""
    q = quotient_eigen(spec.with_weights(F=np.ones((spec.k, spec.k)), b=np.zeros(spec.k)), n)
    n = np.asarray(n, dtype=float)
    phi = q.orthonormal / np.sqrt(n)[:, None]          # value of phi_j on cell i
    inner = (n[:, None] * phi).sum(axis=0)
    return phi @ (q.eigenvalues ** ell * inner)


@dataclass
class DiameterCheck:
    diameter: int
    m_star: float
    lambda_B: float
    ratio_to_log: float
    report: BoundReport


def diameter_check(g: PartitionedGraph, spec: QuotientSpec,
                   spectrum: ClassifiedSpectrum | None = None, m_limit: int | None = None) -> DiameterCheck:
    """Exact diameter against an eigenvalue bound on it.

    For a cell pair (i, j), ``(A^m)_uv > 0`` for all u in V_i, v in V_j as
    soon as ``sqrt((S^m)_ij (S^m)_ji) / lambda_B^m > n - 1``; with
    lambda_B = 0 it suffices that ``(S^m)_ij > 0``. m* is the largest over
    cell pairs of the least such m, so pairs may use different parities
    (bipartite quotients). When some pair has no qualifying m up to
    ``m_limit``, m* is infinite and the bound is vacuous.
    """
    if not g.is_connected():
        raise ValueError("graph is disconnected")
    spectrum = spectrum or adjacency_spectrum(g, spec)
    n = g.n_total
    dist = shortest_path(g.adjacency, unweighted=True, directed=False)
    diameter = int(dist.max())
    lam_b = spectrum.lambda_B
    zero_bulk = lam_b <= 1e-9 * max(1.0, spectrum.lambda_S)
    k = spec.k
    m_limit = m_limit or (20 * int(math.log(n) + 1) + 20)
    S = [[int(x) for x in row] for row in spec.S.tolist()]
    P = [[int(i == j) for j in range(k)] for i in range(k)]
    threshold = math.log(n - 1) if n > 1 else -math.inf
    least = {}
    for m in range(1, m_limit + 1):
        P = [[sum(P[i][t] * S[t][j] for t in range(k)) for j in range(k)] for i in range(k)]
        for i in range(k):
            for j in range(i, k):
                if (i, j) in least or P[i][j] == 0:
                    continue
                if zero_bulk or 0.5 * (math.log(P[i][j]) + math.log(P[j][i])) - m * math.log(lam_b) > threshold:
                    least[(i, j)] = m
        if len(least) == k * (k + 1) // 2:
            break
    m_star = max(least.values()) if len(least) == k * (k + 1) // 2 else math.inf
    ratio = m_star / math.log(n) if n > 1 else math.inf
    rep = BoundReport("diameter", float(diameter), float(m_star),
                      {"n": n, "lambda_B": lam_b, "m_star_over_log_n": ratio})
    return DiameterCheck(diameter, m_star, lam_b, ratio, rep)


def random_subset(g: PartitionedGraph, rng: np.random.Generator, proper: bool = False) -> np.ndarray:
    """Random vertex mask with a uniformly drawn inclusion probability."""
    p = rng.uniform(0.0, 1.0)
    mask = rng.random(g.n_total) < p
    if proper and mask.all():
        mask[rng.integers(g.n_total)] = False
    return mask


def all_reports(g: PartitionedGraph, spec: QuotientSpec, B, C, ell: int,
                spectrum: ClassifiedSpectrum | None = None,
                alon_boppana: AlonBoppana | None = None) -> list[BoundReport]:
    """Every bound for one (graph, B, C) triple; the diameter bound only
    for connected graphs."""
    spectrum = spectrum or adjacency_spectrum(g, spec)
    B = SubsetProfile.of(g, B)
    C = SubsetProfile.of(g, C)
    out = eml_reports(g, spec, B, C, spectrum)
    out.append(eml_neighbor_variance(g, spec, B, spectrum))
    if C.size < g.n_total:
        out.append(induced_complement_bound(g, spec, C, spectrum))
        out.append(walks_avoiding_bound(g, spec, C, ell, spectrum))
    if g.is_connected():
        out.append(diameter_check(g, spec, spectrum).report)
    ab = alon_boppana or alon_boppana_lower(spec, g.cell_sizes)
    out.append(ab.report(spectrum.lambda_B, g.n_total))
    return out
