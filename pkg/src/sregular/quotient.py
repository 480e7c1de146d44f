"""Quotient specifications: the matrix S plus optional edge weights F, vertex
weights b and cell sizes n.

Everything downstream (construction, sampling, tree walks, bounds) reads its
parameters from a :class:`QuotientSpec`.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path

import numpy as np
from scipy.sparse.csgraph import connected_components


class QuotientError(ValueError):
    """Raised for specs that are structurally malformed or unusable for the
    requested operation."""


@dataclass(frozen=True, eq=False)
class QuotientSpec:
    """Quotient matrix ``S`` with optional edge weights ``F``, vertex weights
    ``b`` and cell sizes ``n``.

    Cells are indexed ``0..k-1``. ``F`` defaults to all ones and ``b`` to all
    zeros, i.e. the adjacency matrix.
    """

    S: np.ndarray
    F: np.ndarray = None
    b: np.ndarray = None
    n: tuple[int, ...] | None = None

    def __post_init__(self):
        S = np.asarray(self.S)
        if S.ndim != 2 or S.shape[0] != S.shape[1] or S.shape[0] == 0:
            raise QuotientError(f"S must be a non-empty square matrix, got shape {S.shape}")
        k = S.shape[0]
        if not np.all(np.isfinite(S.astype(float))):
            raise QuotientError("S has non-finite entries")
        S_int = np.rint(S).astype(np.int64)
        # keep the raw values around so validation can flag non-integers
        object.__setattr__(self, "_S_raw", S.astype(float))
        object.__setattr__(self, "S", S_int)
        F = np.ones((k, k)) if self.F is None else np.asarray(self.F, dtype=float)
        if F.shape != (k, k):
            raise QuotientError(f"F must have shape {(k, k)}, got {F.shape}")
        b = np.zeros(k) if self.b is None else np.asarray(self.b, dtype=float).reshape(-1)
        if b.shape != (k,):
            raise QuotientError(f"b must have length {k}, got {b.shape[0]}")
        object.__setattr__(self, "F", F)
        object.__setattr__(self, "b", b)
        if self.n is not None:
            n = tuple(int(x) for x in self.n)
            if len(n) != k:
                raise QuotientError(f"n must have length {k}, got {len(n)}")
            object.__setattr__(self, "n", n)
        for arr in (self.S, self.F, self.b):
            arr.setflags(write=False)

    @property
    def k(self) -> int:
        return self.S.shape[0]

    @property
    def weighted(self) -> np.ndarray:
        """``(S o F) + diag(b)``."""
        return self.S * self.F + np.diag(self.b)

    @property
    def is_adjacency(self) -> bool:
        return bool(np.all(self.F[self.S > 0] == 1) and np.all(self.b == 0))

    def with_weights(self, F=None, b=None) -> "QuotientSpec":
        return QuotientSpec(self.S, F=self.F if F is None else F,
                            b=self.b if b is None else b, n=self.n)

    def with_sizes(self, n) -> "QuotientSpec":
        return QuotientSpec(self.S, F=self.F, b=self.b, n=tuple(n))

    def cell_fractions(self) -> np.ndarray:
        """``c_i = n_i / sum(n)`` from ``n`` or the minimal balance solution."""
        n = self.n if self.n is not None else balance_solution(self)
        if n is None:
            raise QuotientError("no positive balance solution")
        n = np.asarray(n, dtype=float)
        return n / n.sum()

    # --- serialization -------------------------------------------------

    def to_dict(self) -> dict:
        d = {"S": self.S.tolist()}
        if not np.all(self.F == 1):
            d["F"] = self.F.tolist()
        if np.any(self.b != 0):
            d["b"] = self.b.tolist()
        if self.n is not None:
            d["n"] = list(self.n)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "QuotientSpec":
        if not isinstance(d, dict) or "S" not in d:
            raise QuotientError("quotient spec must be a JSON object with key 'S'")
        unknown = set(d) - {"S", "F", "b", "n"}
        if unknown:
            raise QuotientError(f"unknown keys in quotient spec: {sorted(unknown)}")
        try:
            S = np.array(d["S"], dtype=float)
            F = None if d.get("F") is None else np.array(d["F"], dtype=float)
            b = None if d.get("b") is None else np.array(d["b"], dtype=float)
        except (TypeError, ValueError) as exc:
            raise QuotientError(f"could not read matrix entries: {exc}") from exc
        return cls(S, F=F, b=b, n=d.get("n"))


def load_spec(path) -> QuotientSpec:
    with open(path) as fh:
        data = json.load(fh)
    return QuotientSpec.from_dict(data)


def save_spec(spec: QuotientSpec, path) -> None:
    Path(path).write_text(json.dumps(spec.to_dict()) + "\n")


# --- validation -----------------------------------------------------------

@dataclass(frozen=True)
class Violation:
    code: str
    message: str

    def to_dict(self):
        return {"code": self.code, "message": self.message}


@dataclass
class ValidationReport:
    violations: list[Violation] = field(default_factory=list)
    irreducible: bool = False
    balance: tuple[int, ...] | None = None

    @property
    def ok(self) -> bool:
        return not self.violations

    @property
    def codes(self) -> list[str]:
        return [v.code for v in self.violations]

    def to_dict(self) -> dict:
        return {
            "ok": self.ok,
            "irreducible": self.irreducible,
            "balance": None if self.balance is None else list(self.balance),
            "violations": [v.to_dict() for v in self.violations],
        }


def is_irreducible(S) -> bool:
    S = np.asarray(S)
    if S.shape[0] == 1:
        return True
    ncomp, _ = connected_components(S > 0, directed=True, connection="strong")
    return ncomp == 1


def balance_solution(spec) -> tuple[int, ...] | None:
    """Minimal positive integer solution of ``n_i s_ij = n_j s_ji``.

    Fixes ``n_0 = 1``, propagates rationally along a spanning tree of the
    support of S and checks every remaining pair. Returns None when no
    unique positive solution exists.
    """
    S = spec.S if isinstance(spec, QuotientSpec) else np.rint(np.asarray(spec)).astype(np.int64)
    k = S.shape[0]
    n = [None] * k
    n[0] = Fraction(1)
    stack = [0]
    while stack:
        i = stack.pop()
        for j in range(k):
            if n[j] is not None or (S[i, j] == 0 and S[j, i] == 0):
                continue
            if S[i, j] == 0 or S[j, i] == 0:
                return None
            n[j] = n[i] * int(S[i, j]) / int(S[j, i])
            stack.append(j)
    if any(x is None for x in n):
        return None
    for i in range(k):
        for j in range(k):
            if n[i] * int(S[i, j]) != n[j] * int(S[j, i]):
                return None
    denom = math.lcm(*(x.denominator for x in n))
    ints = [int(x * denom) for x in n]
    g = math.gcd(*ints)
    return tuple(x // g for x in ints)


def validate_quotient(spec: QuotientSpec) -> ValidationReport:
    """Check a spec and collect every violation with a machine-readable code.

    Codes: ``NEGATIVE_ENTRY``, ``NON_INTEGER``, ``REDUCIBLE``,
    ``NO_BALANCE``, ``F_NOT_SYMMETRIC``, ``F_ZERO_ON_EDGE``,
    ``N_NONPOSITIVE``, ``N_UNBALANCED``.
    """
    report = ValidationReport()
    raw = spec._S_raw
    if np.any(raw < 0):
        report.violations.append(Violation("NEGATIVE_ENTRY", "S has negative entries"))
    if np.any(np.abs(raw - np.rint(raw)) > 0):
        report.violations.append(Violation("NON_INTEGER", "S has non-integer entries"))
    report.irreducible = is_irreducible(spec.S)
    if not report.irreducible:
        report.violations.append(Violation(
            "REDUCIBLE", "the digraph of S is not strongly connected"))
    report.balance = balance_solution(spec) if not np.any(spec.S < 0) else None
    if report.balance is None:
        report.violations.append(Violation(
            "NO_BALANCE", "no positive solution of n_i s_ij = n_j s_ji"))
    if not np.allclose(spec.F, spec.F.T, rtol=0, atol=1e-12):
        report.violations.append(Violation("F_NOT_SYMMETRIC", "F is not symmetric"))
    if np.any(spec.F[spec.S > 0] == 0):
        report.violations.append(Violation(
            "F_ZERO_ON_EDGE", "F_ij = 0 for some pair with s_ij > 0"))
    if spec.n is not None:
        n = np.asarray(spec.n)
        if np.any(n <= 0):
            report.violations.append(Violation("N_NONPOSITIVE", "cell sizes must be positive"))
        lhs = n[:, None] * spec.S
        bad = np.argwhere(lhs != lhs.T)
        if len(bad):
            i, j = bad[0]
            report.violations.append(Violation(
                "N_UNBALANCED",
                f"n_{i} s_{i}{j} = {lhs[i, j]} but n_{j} s_{j}{i} = {lhs[j, i]}"))
    return report


def constructibility_problems(S, n) -> list[str]:
    """Constraints ``n_i > s_ii``, ``n_i >= s_ji`` and ``n_i s_ii`` even."""
    S = np.asarray(S)
    problems = []
    for i, ni in enumerate(n):
        if ni <= S[i, i]:
            problems.append(f"n_{i}={ni} must exceed s_{i}{i}={S[i, i]}")
        if ni < S[:, i].max():
            problems.append(f"n_{i}={ni} must be at least max_j s_j{i}={S[:, i].max()}")
        if (ni * S[i, i]) % 2:
            problems.append(f"n_{i} s_{i}{i} = {ni * S[i, i]} must be even")
    return problems


def minimal_cell_sizes(spec: QuotientSpec) -> tuple[int, ...]:
    """Smallest multiple of the minimal balance solution that admits a simple
    S-regular graph (see :func:`constructibility_problems`)."""
    n0 = balance_solution(spec)
    if n0 is None:
        raise QuotientError("S has no positive balance solution")
    alpha = 1
    while constructibility_problems(spec.S, [alpha * x for x in n0]):
        alpha += 1
    return tuple(alpha * x for x in n0)


def scale_to_total(spec: QuotientSpec, n_total: int) -> tuple[int, ...]:
    """Cell sizes proportional to the balance solution summing to ``n_total``."""
    n0 = balance_solution(spec)
    if n0 is None:
        raise QuotientError("S has no positive balance solution")
    if n_total % sum(n0):
        raise QuotientError(f"n_total={n_total} is not a multiple of {sum(n0)}")
    alpha = n_total // sum(n0)
    return tuple(alpha * x for x in n0)


# --- eigenpairs -----------------------------------------------------------

@dataclass(frozen=True, eq=False)
class QuotientEigen:
    """Eigenpairs of ``(S o F) + diag(b)``, eigenvalues descending.

    ``eigenvectors`` has unit-norm columns in R^k (first nonzero coordinate
    positive). ``orthonormal`` holds the eigenvectors of the symmetrized
    matrix ``N^{1/2} M N^{-1/2}``, so ``eigenvectors[:, j]`` is parallel to
    ``N^{-1/2} orthonormal[:, j]``.
    """

    eigenvalues: np.ndarray
    eigenvectors: np.ndarray
    orthonormal: np.ndarray
    n: tuple[int, ...]

    @property
    def lambda_S(self) -> float:
        return float(self.eigenvalues[0])


def symmetrized(spec: QuotientSpec, n=None) -> np.ndarray:
    n = n if n is not None else (spec.n or balance_solution(spec))
    if n is None:
        raise QuotientError("S has no positive balance solution")
    root = np.sqrt(np.asarray(n, dtype=float))
    return root[:, None] * spec.weighted / root[None, :]


def _canonical_basis(U: np.ndarray, tol: float = 1e-8) -> np.ndarray:
    """Deterministic orthonormal basis of span(U): Gram-Schmidt on the
    projections of e_0, e_1, ... onto the span."""
    r = U.shape[1]
    if r == 1:
        return U
    P = U @ U.T
    basis = []
    for col in P.T:
        v = col.copy()
        for q in basis:
            v -= (q @ v) * q
        nv = np.linalg.norm(v)
        if nv > tol:
            basis.append(v / nv)
        if len(basis) == r:
            break
    return np.column_stack(basis)


def _fix_sign(v: np.ndarray, tol: float = 1e-12) -> np.ndarray:
    nz = np.flatnonzero(np.abs(v) > tol * max(1.0, np.abs(v).max()))
    if len(nz) and v[nz[0]] < 0:
        return -v
    return v


def quotient_eigen(spec: QuotientSpec, n=None, tie_tol: float = 1e-9) -> QuotientEigen:
    n = n if n is not None else (spec.n or balance_solution(spec))
    if n is None:
        raise QuotientError("S has no positive balance solution")
    M = symmetrized(spec, n)
    asym = np.abs(M - M.T).max()
    if asym > 1e-9 * max(1.0, np.abs(M).max()):
        raise QuotientError(f"balance-symmetrized matrix is not symmetric (err {asym:.3g})")
    w, U = np.linalg.eigh((M + M.T) / 2)
    w, U = w[::-1], U[:, ::-1]
    scale = max(1.0, np.abs(w).max())
    root = np.sqrt(np.asarray(n, dtype=float))

    values, sym_vecs, vecs = [], [], []
    start = 0
    while start < len(w):
        stop = start + 1
        while stop < len(w) and abs(w[stop] - w[start]) <= tie_tol * scale:
            stop += 1
        block = _canonical_basis(U[:, start:stop])
        group = []
        for u in block.T:
            u = _fix_sign(u)
            psi = u / root
            psi = psi / np.linalg.norm(psi)
            group.append((tuple(np.round(psi, 12)), u, psi))
        group.sort(key=lambda g: g[0])
        for _, u, psi in group:
            values.append(w[start:stop].mean())
            sym_vecs.append(u)
            vecs.append(psi)
        start = stop
    return QuotientEigen(np.array(values), np.column_stack(vecs),
                         np.column_stack(sym_vecs), tuple(int(x) for x in n))
