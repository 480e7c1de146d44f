"""S-regular matrices on finite graphs and their spectra.

Eigendecompositions are dense (``numpy.linalg.eigh``), O(n^3); fine up to a
few thousand vertices.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .graphs import PartitionedGraph, check_s_regular
from .quotient import QuotientError, QuotientSpec, quotient_eigen

PRESETS = ("adjacency", "laplacian", "normalized-laplacian", "custom")


def preset_weights(spec: QuotientSpec, preset: str) -> QuotientSpec:
    """Spec with ``b`` and ``F`` replaced by a named preset.

    ``adjacency``: b=0, F=1. ``laplacian``: b_i = d_i, F=-1.
    ``normalized-laplacian``: b=1, F_ij = -1/sqrt(d_i d_j). ``custom`` keeps
    the spec's own weights. Here ``d_i = sum_j s_ij``.
    """
    k = spec.k
    d = spec.S.sum(axis=1).astype(float)
    if preset == "adjacency":
        return spec.with_weights(F=np.ones((k, k)), b=np.zeros(k))
    if preset in ("laplacian", "combinatorial-laplacian"):
        return spec.with_weights(F=-np.ones((k, k)), b=d)
    if preset == "normalized-laplacian":
        if np.any(d == 0):
            raise QuotientError("normalized Laplacian needs positive degrees")
        return spec.with_weights(F=-1.0 / np.sqrt(np.outer(d, d)), b=np.ones(k))
    if preset == "custom":
        return spec
    raise ValueError(f"unknown preset {preset!r}; choose from {PRESETS}")


@dataclass(frozen=True, eq=False)
class SRegularMatrix:
    graph: PartitionedGraph
    spec: QuotientSpec
    matrix: sp.csr_matrix

    @property
    def dim(self) -> int:
        return self.matrix.shape[0]

    def dense(self) -> np.ndarray:
        return self.matrix.toarray()


def assemble(graph: PartitionedGraph, spec: QuotientSpec, preset: str | None = None) -> SRegularMatrix:
    """``T_uu = b(tau(u))``, ``T_uv = F_{tau(u) tau(v)}`` for ``u ~ v``."""
    if preset is not None:
        spec = preset_weights(spec, preset)
    violation = check_s_regular(graph, spec)
    if violation is not None:
        raise QuotientError(f"graph is not S-regular for this spec: {violation}")
    spec = spec.with_sizes(graph.cell_sizes)
    tau = graph.tau
    u, v = graph.edges[:, 0], graph.edges[:, 1]
    w = spec.F[tau[u], tau[v]]
    exact = np.all(spec.F == np.rint(spec.F)) and np.all(spec.b == np.rint(spec.b))
    dtype = np.int64 if exact else np.float64
    n = graph.n_total
    rows = np.concatenate([u, v, np.arange(n)])
    cols = np.concatenate([v, u, np.arange(n)])
    data = np.concatenate([w, w, spec.b[tau]]).astype(dtype)
    T = sp.csr_matrix((data, (rows, cols)), shape=(n, n))
    T.eliminate_zeros()
    T.sort_indices()
    return SRegularMatrix(graph, spec, T)


# --- spectrum classification ------------------------------------------------

@dataclass(frozen=True, eq=False)
class ClassifiedSpectrum:
    """Ascending eigenvalues with an orthonormal eigenbasis split into the k
    S-eigenpairs (lifted from the quotient) and the bulk."""

    eigenvalues: np.ndarray
    eigenvectors: np.ndarray
    s_indices: np.ndarray
    bulk_indices: np.ndarray
    quotient_eigenvalues: np.ndarray
    tau: np.ndarray
    k: int

    @property
    def lambda_S(self) -> float:
        return float(self.eigenvalues[self.s_indices].max())

    @property
    def lambda_B(self) -> float:
        if len(self.bulk_indices) == 0:
            return 0.0
        return float(np.abs(self.eigenvalues[self.bulk_indices]).max())

    @property
    def lambda_B_signed(self) -> float:
        """Bulk eigenvalue of largest magnitude, ties resolved toward the
        positive one."""
        if len(self.bulk_indices) == 0:
            return 0.0
        vals = self.eigenvalues[self.bulk_indices]
        mag = np.abs(vals).max()
        close = vals[np.abs(np.abs(vals) - mag) <= 1e-9 * max(1.0, mag)]
        return float(close.max())

    @property
    def bulk_eigenvalues(self) -> np.ndarray:
        return self.eigenvalues[self.bulk_indices]

    @property
    def s_eigenvalues(self) -> np.ndarray:
        return self.eigenvalues[self.s_indices]

    def labels(self) -> np.ndarray:
        out = np.full(len(self.eigenvalues), "bulk", dtype=object)
        out[self.s_indices] = "S"
        return out

    def bulk_cell_sums(self) -> np.ndarray:
        """``|sum_{v in V_i} phi(v)|`` for every bulk eigenvector (rows) and
        cell (columns)."""
        onehot = np.zeros((len(self.tau), self.k))
        onehot[np.arange(len(self.tau)), self.tau] = 1.0
        return np.abs(self.eigenvectors[:, self.bulk_indices].T @ onehot)


def classify(T: SRegularMatrix, cluster_tol: float = 1e-8, match_tol: float = 1e-6) -> ClassifiedSpectrum:
    """Split the spectrum of T into S-eigenpairs and bulk eigenpairs.

    Every quotient eigenvector lifts to a vector constant on cells. For each
    quotient eigenvalue the cluster of numerically equal eigenvalues of T is
    located, the lifted vector is projected onto that eigenspace, and the
    eigenspace basis is rotated so that one basis vector is the lifted
    vector and the rest are orthogonal to it. Degenerate collisions between
    bulk and S-eigenvalues are therefore resolved by projection, not by
    eigenvalue proximity.
    """
    spec = T.spec
    g = T.graph
    w, V = np.linalg.eigh(T.dense().astype(float))
    V = V.copy()
    q = quotient_eigen(spec, g.cell_sizes)
    # orthonormal lifts: column j is N^{-1/2} u_j broadcast over cells
    root = np.sqrt(np.asarray(g.cell_sizes, dtype=float))
    lifts = (q.orthonormal / root[:, None])[g.tau]
    scale = max(1.0, np.abs(w).max())
    order = np.argsort(q.eigenvalues)
    s_idx = []
    handled = set()
    for j in order:
        if j in handled:
            continue
        lam = q.eigenvalues[j]
        cluster = np.flatnonzero(np.abs(w - lam) <= cluster_tol * scale)
        if len(cluster) == 0:
            nearest = np.argmin(np.abs(w - lam))
            cluster = np.flatnonzero(np.abs(w - w[nearest]) <= cluster_tol * scale)
        group = [m for m in order
                 if m not in handled and abs(q.eigenvalues[m] - lam) <= cluster_tol * scale]
        handled.update(group)
        basis = V[:, cluster]
        coeff = basis.T @ lifts[:, group]
        resid = np.linalg.norm(lifts[:, group] - basis @ coeff, axis=0).max()
        if resid > match_tol or len(group) > len(cluster):
            raise QuotientError(
                f"quotient eigenvalue {lam:.6g} is not matched by the spectrum (residual {resid:.3g})")
        if len(cluster) > len(group) or len(group) > 1:
            full, _ = np.linalg.qr(np.column_stack([coeff, np.eye(len(cluster))]))
            full = full[:, :len(cluster)]
            V[:, cluster] = basis @ full
        s_idx.extend(cluster[:len(group)].tolist())
    s_idx = np.array(sorted(s_idx), dtype=np.int64)
    bulk = np.setdiff1d(np.arange(len(w)), s_idx)
    return ClassifiedSpectrum(w, V, s_idx, bulk, q.eigenvalues, g.tau, spec.k)


# --- empirical statistics ---------------------------------------------------

@dataclass(frozen=True)
class Histogram:
    edges: np.ndarray
    mass: np.ndarray
    below: float
    above: float

    def rows(self):
        return list(zip(self.edges[:-1].tolist(), self.edges[1:].tolist(), self.mass.tolist()))


def spectral_density_histogram(eigenvalues, bins: int, range: tuple[float, float]) -> Histogram:
    """Each eigenvalue contributes ``1/n`` to its bin; the last bin is closed."""
    lo, hi = range
    if bins < 1:
        raise ValueError("bins must be at least 1")
    if not hi > lo:
        raise ValueError("empty histogram range")
    ev = np.asarray(eigenvalues, dtype=float)
    counts, edges = np.histogram(ev, bins=bins, range=(lo, hi))
    n = len(ev)
    return Histogram(edges, counts / n, float(np.sum(ev < lo)) / n, float(np.sum(ev > hi)) / n)


@dataclass(frozen=True)
class CellStats:
    """Per eigenpair j and cell i: raw ``sum_{V_i} phi_j^2``, scaled
    ``(n/n_i) * raw`` and ``sum_{V_i} phi_j``."""

    eigenvalues: np.ndarray
    raw: np.ndarray
    scaled: np.ndarray
    cellsum: np.ndarray

    def rows(self):
        out = []
        for j, lam in enumerate(self.eigenvalues.tolist()):
            for i in range(self.raw.shape[1]):
                out.append((lam, i, float(self.raw[j, i]), float(self.scaled[j, i]),
                            float(self.cellsum[j, i])))
        return out


def cell_sum_squares(eigenvalues, eigenvectors, tau, k: int | None = None) -> CellStats:
    tau = np.asarray(tau)
    k = int(tau.max()) + 1 if k is None else k
    n = len(tau)
    onehot = np.zeros((n, k))
    onehot[np.arange(n), tau] = 1.0
    sizes = onehot.sum(axis=0)
    raw = (eigenvectors ** 2).T @ onehot
    return CellStats(np.asarray(eigenvalues), raw, raw * (n / sizes), eigenvectors.T @ onehot)


def weighted_walk_count(T, v: int, ell: int):
    """``(T^ell)_{vv}`` by ``ell`` matrix-vector products; exact for integer
    matrices. ``T`` is an SRegularMatrix, a sparse/dense matrix, or anything
    supporting ``T @ x`` with ``shape`` and ``dtype``."""
    if ell < 0:
        raise ValueError("walk length must be non-negative")
    M = T.matrix if isinstance(T, SRegularMatrix) else T
    x = np.zeros(M.shape[0], dtype=M.dtype)
    x[v] = 1
    for _ in range(ell):
        x = M @ x
    return x[v].item()


def j_matrix_check(spec: QuotientSpec, n, m: int, norm_power: int = 2) -> float:
    """Largest entry of ``|J_m - sum_i lambda_i^m psibar_i psibar_i^T / ||psibar_i||^p|``.

    ``(J_m)_{uv} = (S^m)_{tau(u) tau(v)} / n_{tau(v)}``. Both sides are constant
    on cell blocks, so the comparison is done on the k x k block values.
    ``norm_power=2`` is the correct normalization; ``1`` is kept for
    demonstrating that the unsquared form fails.
    """
    n = np.asarray(n, dtype=float)
    S = spec.S.astype(float)
    J = np.linalg.matrix_power(S, m) / n[None, :]
    q = quotient_eigen(spec.with_weights(F=np.ones_like(spec.F), b=np.zeros(spec.k)),
                       tuple(int(x) for x in n))
    lifted_norm_sq = (q.eigenvectors ** 2 * n[:, None]).sum(axis=0)
    denom = lifted_norm_sq ** (norm_power / 2)
    E = (q.eigenvectors * (q.eigenvalues ** m / denom)) @ q.eigenvectors.T
    return float(np.abs(J - E).max())
