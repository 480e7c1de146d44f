"""Closed walks on the S-regular tree and the spectral measures they define.

``omega_i[l]`` is the weighted count of closed walks of length l at a root
in cell i. ``omega_ij[l]`` is the same count at a root in cell j whose edge
toward one neighbour in cell i has been deleted. Their generating functions
solve a polynomial system, which is evaluated at complex arguments by Newton
continuation from y = 0; Stieltjes inversion of ``R_i(z) = X_i(1/z)/z`` then
gives the limiting spectral densities.

Traversing an edge out and back contributes ``F_ij * F_ji = F_ij**2``, so
the recurrences and the polynomial system carry squared edge weights.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from .graphs import DEFAULT_TREE_CAP, build_tree_ball
from .matrices import weighted_walk_count
from .quotient import QuotientSpec

log = logging.getLogger(__name__)

DEFAULT_EPSILONS = (1e-2, 5e-3, 2.5e-3)


def edge_pairs(spec: QuotientSpec) -> list[tuple[int, int]]:
    return [(i, j) for i in range(spec.k) for j in range(spec.k) if spec.S[i, j] > 0]


def _integral(spec: QuotientSpec) -> bool:
    return bool(np.all(spec.F == np.rint(spec.F)) and np.all(spec.b == np.rint(spec.b)))


# --- exact walk counts ------------------------------------------------------

@dataclass
class WalkTable:
    L: int
    omega_i: list[list]
    omega_ij: dict[tuple[int, int], list]
    exact: bool

    def cell(self, i: int) -> np.ndarray:
        return np.array([float(x) for x in self.omega_i[i]])

    def mixture(self, c) -> np.ndarray:
        return sum(ci * self.cell(i) for i, ci in enumerate(c))


def walk_recurrence(spec: QuotientSpec, L: int, exact: bool | None = None) -> WalkTable:
    """Tree walk counts up to length L by first-return decomposition.

    A closed walk of length l at a root is either l loops, or r loops, a
    step into a neighbour's branch, a walk of length t there avoiding the
    root, the step back, and a closed walk of length s at the root with
    ``r + s + t = l - 2``.

    Values are Python ints when b and F are integral, Fractions when
    ``exact=True``, floats otherwise.
    """
    if L < 0:
        raise ValueError("L must be non-negative")
    if exact is None:
        exact = _integral(spec)
    if exact and _integral(spec):
        conv = int
    elif exact:
        conv = Fraction
    else:
        conv = float
    k = spec.k
    S = spec.S
    b = [conv(x if conv is not int else int(round(x))) for x in spec.b.tolist()]
    F2 = [[conv(x if conv is not int else int(round(x))) ** 2 for x in row] for row in spec.F.tolist()]
    pairs = edge_pairs(spec)

    def powers(x):
        p = [conv(1)]
        for _ in range(L):
            p.append(p[-1] * x)
        return p

    bpow = [powers(x) for x in b]
    wi = {i: [(j, int(S[i, j]) * F2[i][j]) for j in range(k) if S[i, j] > 0] for i in range(k)}
    wij = {(i, j): [(m, (int(S[j, m]) - (i == m)) * F2[j][m]) for m in range(k)
                    if S[j, m] > 0 and int(S[j, m]) - (i == m) > 0]
           for i, j in pairs}
    om_i = [[conv(1)] for _ in range(k)]
    om_ij = {p: [conv(1)] for p in pairs}
    if L >= 1:
        for i in range(k):
            om_i[i].append(b[i])
        for i, j in pairs:
            om_ij[(i, j)].append(b[j])

    def first_return(own, branch, bp, ell):
        # sum over r + s + t = ell - 2 of b^r * own[s] * branch[t]
        total = conv(0)
        for r in range(ell - 1):
            q = ell - 2 - r
            acc = conv(0)
            for s in range(q + 1):
                acc += own[s] * branch[q - s]
            total += bp[r] * acc
        return total

    for ell in range(2, L + 1):
        new_ij = {}
        for i, j in pairs:
            h = [sum((c * om_ij[(j, m)][t] for m, c in wij[(i, j)]), conv(0)) for t in range(ell - 1)]
            new_ij[(i, j)] = bpow[j][ell] + first_return(om_ij[(i, j)], h, bpow[j], ell)
        for i in range(k):
            h = [sum((c * om_ij[(i, j)][t] for j, c in wi[i]), conv(0)) for t in range(ell - 1)]
            om_i[i].append(bpow[i][ell] + first_return(om_i[i], h, bpow[i], ell))
        for p, val in new_ij.items():
            om_ij[p].append(val)
    return WalkTable(L, om_i, om_ij, bool(exact))


def brute_force_tree_walks(spec: QuotientSpec, cell: int, ell: int,
                           removed_cell: int | None = None, cap: int = DEFAULT_TREE_CAP):
    """Weighted closed-walk count at the root of an explicit tree ball of
    radius ceil(ell/2); exact for integral weights."""
    tree = build_tree_ball(spec, cell, (ell + 1) // 2, removed_cell=removed_cell, cap=cap)
    return weighted_walk_count(tree.operator(spec), 0, ell)


def brute_force_walk_series(spec: QuotientSpec, cell: int, L: int,
                            removed_cell: int | None = None, cap: int = DEFAULT_TREE_CAP) -> list:
    """All counts up to L from one explicit ball of radius ceil(L/2), using
    ``(T^l)_{rr} = <T^a e_r, T^(l-a) e_r>`` (T symmetric)."""
    radius = (L + 1) // 2
    tree = build_tree_ball(spec, cell, radius, removed_cell=removed_cell, cap=cap)
    T = tree.operator(spec)
    x = np.zeros(tree.size, dtype=T.dtype)
    x[0] = 1
    vecs = [x]
    for _ in range(radius):
        vecs.append(T @ vecs[-1])
    out = []
    for ell in range(L + 1):
        a = ell // 2
        val = vecs[a] @ vecs[ell - a]
        out.append(int(val) if T.dtype.kind == "i" else float(val))
    return out


# --- polynomial system ------------------------------------------------------

class ContinuationError(RuntimeError):
    pass


class GFSystem:
    """The generating-function polynomial system for one spec.

    Unknowns are the edge series ``X_ij`` (pairs with s_ij > 0); they form a
    closed subsystem ``p_ij = 1 - (1 - b_j y) X_ij + y^2 X_ij (C X)_ij``.
    The cell series follow explicitly from
    ``X_i = 1 / (1 - b_i y - y^2 sum_m s_im F_im^2 X_im)``.
    """

    def __init__(self, spec: QuotientSpec):
        self.spec = spec
        self.pairs = edge_pairs(spec)
        index = {p: e for e, p in enumerate(self.pairs)}
        E, k = len(self.pairs), spec.k
        F2 = spec.F ** 2
        self.C = np.zeros((E, E))
        self.beta = np.zeros(E)
        for e, (i, j) in enumerate(self.pairs):
            self.beta[e] = spec.b[j]
            for m in range(k):
                c = spec.S[j, m] - (1 if i == m else 0)
                if spec.S[j, m] > 0 and c > 0:
                    self.C[e, index[(j, m)]] = c * F2[j, m]
        self.W = np.zeros((k, E))
        for e, (i, j) in enumerate(self.pairs):
            self.W[i, e] = spec.S[i, j] * F2[i, j]
        self.size = E

    def residual(self, X, y):
        return 1 - (1 - self.beta * y) * X + y * y * X * (self.C @ X)

    def jacobian(self, X, y):
        CX = self.C @ X
        J = (y * y) * (X[:, None] * self.C)
        J[np.diag_indices_from(J)] += -(1 - self.beta * y) + y * y * CX
        return J

    def d_dy(self, X, y):
        return self.beta * X + 2 * y * X * (self.C @ X)

    def cells(self, X, y):
        return 1.0 / (1 - self.spec.b * y - y * y * (self.W @ X))

    def full_residual(self, Xc, X, y) -> float:
        pc = 1 - (1 - self.spec.b * y) * Xc + y * y * Xc * (self.W @ X)
        pe = self.residual(X, y)
        return float(max(np.abs(pc).max(initial=0.0), np.abs(pe).max(initial=0.0)))


@dataclass
class GFResult:
    y: complex
    X_cell: np.ndarray
    X_edge: np.ndarray
    pairs: list
    residual: float
    steps: int
    rejected: int

    def to_dict(self) -> dict:
        def c(v):
            return [float(v.real), float(v.imag)]
        return {
            "y": c(complex(self.y)),
            "X_cell": [c(v) for v in self.X_cell],
            "X_edge": {f"{i},{j}": c(v) for (i, j), v in zip(self.pairs, self.X_edge)},
            "residual": self.residual,
            "steps": self.steps,
            "rejected": self.rejected,
        }


def _newton(system, X, y, tol, max_iter):
    """Newton iterations; returns (X, converged, contracted)."""
    prev = None
    contracted = True
    for it in range(max_iter):
        r = system.residual(X, y)
        if np.abs(r).max(initial=0.0) <= tol:
            return X, True, contracted
        try:
            delta = np.linalg.solve(system.jacobian(X, y), -r)
        except np.linalg.LinAlgError:
            return X, False, False
        size = np.abs(delta).max()
        if not np.isfinite(size):
            return X, False, False
        if prev is not None and it <= 2 and size > 0.5 * prev and prev > 1e-10:
            contracted = False
        prev = size
        X = X + delta
    r = system.residual(X, y)
    return X, bool(np.abs(r).max(initial=0.0) <= tol), contracted


def _herglotz_ok(system, X, y) -> bool:
    """Every series is a Stieltjes transform in disguise: ``y X(y)`` must have
    an imaginary part of the same sign as ``Im y``. The neighbouring branch
    (reachable when the path runs close to the real axis) violates this."""
    sgn = np.sign(np.imag(y))
    if sgn == 0:
        return True
    vals = np.concatenate([y * X, y * system.cells(X, y)])
    return bool(np.all(sgn * vals.imag > -1e-12 * np.abs(vals)))


def _track(system, X, path, dpath, *, h0=0.05, h_min=1e-10, max_iter=25,
           step_tol=1e-10, max_steps=100000, h_max=1.0):
    """Follow the solution branch from s=0 to s=1 along y = path(s).

    Euler-tangent predictor, Newton corrector; the step is halved whenever
    the corrector fails to converge (or to contract) or lands on a point
    violating the sign condition, and grown after successes.
    """
    s, h = 0.0, h0
    steps = rejected = 0
    while s < 1.0:
        if steps + rejected > max_steps:
            raise ContinuationError("step budget exhausted")
        h = min(h, h_max, 1.0 - s)
        y0, y1 = path(s), path(s + h)
        try:
            tangent = np.linalg.solve(system.jacobian(X, y0), -system.d_dy(X, y0) * dpath(s))
        except np.linalg.LinAlgError:
            tangent = np.zeros_like(X)
        pred = X + h * tangent
        scale = 1.0 + np.abs(pred).max()
        Xn, ok, contracted = _newton(system, pred, y1, step_tol * scale, 8)
        if (ok and contracted and np.abs(Xn - pred).max() <= 0.1 * scale
                and _herglotz_ok(system, Xn, y1)):
            X, s = Xn, s + h
            steps += 1
            h *= 1.6
        else:
            rejected += 1
            h *= 0.5
            if h < h_min:
                raise ContinuationError(f"step size underflow at s={s:.6g}, y={path(s)}")
    return X, steps, rejected


def _polish(system, X, y, tol, max_iter=25):
    X, ok, _ = _newton(system, X, y, tol, max_iter)
    Xc = system.cells(X, y)
    resid = system.full_residual(Xc, X, y)
    return X, Xc, resid


def evaluate_gf(spec: QuotientSpec, y, *, tol: float = 1e-12, system: GFSystem | None = None,
                start: tuple[complex, np.ndarray] | None = None) -> GFResult:
    """Solve the generating-function system at ``y`` by continuation along the
    straight segment from 0 (where every series equals 1), or from ``start =
    (y0, X_edge0)`` along the segment from y0.

    Raises ContinuationError when the path breaks down or the final residual
    exceeds ``tol``.
    """
    system = system or GFSystem(spec)
    y = complex(y)
    if start is None:
        y0, X = 0j, np.ones(system.size, dtype=complex)
    else:
        y0, X = complex(start[0]), np.asarray(start[1], dtype=complex)
    dy = y - y0
    steps = rejected = 0
    if system.size and dy != 0:
        X, steps, rejected = _track(system, X, lambda s: y0 + s * dy, lambda s: dy)
    X, Xc, resid = _polish(system, X, y, tol)
    if not resid <= tol:
        raise ContinuationError(f"final residual {resid:.3g} exceeds {tol:.1g} at y={y}")
    if not _herglotz_ok(system, X, y):
        raise ContinuationError(f"continuation left the principal branch at y={y}")
    return GFResult(y, Xc, X, system.pairs, resid, steps, rejected)


def stieltjes(spec: QuotientSpec, cell: int, z, **kwargs) -> complex:
    """``R_i(z) = integral dmu_i(lambda) / (z - lambda) = X_i(1/z) / z``."""
    z = complex(z)
    res = evaluate_gf(spec, 1 / z, **kwargs)
    return complex(res.X_cell[cell] / z)


def stieltjes_line(spec: QuotientSpec, zs, *, tol: float = 1e-12, mode: str = "sweep"):
    """``R_i`` for every point of ``zs`` (all in the open upper half plane).

    ``mode="sweep"`` reaches the first point from y = 0 and then walks
    between consecutive points inside the upper half plane, where the
    branch is single-valued; ``mode="independent"`` continues every point
    from y = 0. Failed points are NaN. Returns ``(R, ok)`` with R of shape
    (len(zs), k).
    """
    zs = np.asarray(zs, dtype=complex)
    system = GFSystem(spec)
    R = np.full((len(zs), spec.k), np.nan + 1j * np.nan)
    ok = np.zeros(len(zs), dtype=bool)
    prev = None
    for p, z in enumerate(zs):
        res = None
        if mode == "sweep" and prev is not None and system.size:
            za, Xa = prev
            dz = z - za
            # the solution varies on the scale of the distance to the real axis
            h_max = min(1.0, 0.5 * min(za.imag, z.imag) / max(abs(dz), 1e-300))
            try:
                X, _, _ = _track(system, Xa, lambda s: 1 / (za + s * dz),
                                 lambda s: -dz / (za + s * dz) ** 2, h0=h_max, h_max=h_max)
                X, Xc, resid = _polish(system, X, 1 / z, tol)
                if resid <= tol and _herglotz_ok(system, X, 1 / z):
                    res = (X, Xc)
            except ContinuationError:
                res = None
        if res is None:
            try:
                r = evaluate_gf(spec, 1 / z, tol=tol, system=system)
                res = (r.X_edge, r.X_cell)
            except ContinuationError as exc:
                log.debug("continuation failed at z=%s: %s", z, exc)
                prev = None
                continue
        X, Xc = res
        R[p] = Xc / z
        ok[p] = True
        prev = (z, X)
    return R, ok


# --- densities ----------------------------------------------------------------

def extrapolate_zero(eps, values) -> np.ndarray:
    """Neville extrapolation to eps = 0 of values[i] sampled at eps[i]
    (Richardson with integer powers of eps). ``values`` has the eps axis
    first."""
    eps = np.asarray(eps, dtype=float)
    P = [np.asarray(v, dtype=float) for v in values]
    m = len(eps)
    for level in range(1, m):
        P = [(eps[i + level] * P[i] - eps[i] * P[i + 1]) / (eps[i + level] - eps[i])
             for i in range(m - level)]
    return P[0]


@dataclass
class DensityCurve:
    grid: np.ndarray
    mu: np.ndarray                 # (points, k)
    mixture: np.ndarray
    ratio: np.ndarray              # (points, k)
    status: np.ndarray             # "ok" or "missing"
    weights: np.ndarray            # c_i
    epsilons: tuple
    clipped: float                 # largest negative value set to zero
    raw: np.ndarray = field(repr=False, default=None)   # (eps, points, k) before extrapolation

    @property
    def k(self) -> int:
        return self.mu.shape[1]

    def mass(self) -> float:
        ok = np.isfinite(self.mixture)
        return float(np.trapezoid(self.mixture[ok], self.grid[ok]))

    def missing_mass(self) -> float:
        return 1.0 - self.mass()

    def cdf(self, x) -> np.ndarray:
        """Limiting mixture CDF by cumulative trapezoid on the grid, linear
        in between; 0 left of the grid, total mass right of it."""
        ok = np.isfinite(self.mixture)
        g, f = self.grid[ok], self.mixture[ok]
        cum = np.concatenate([[0.0], np.cumsum(np.diff(g) * (f[1:] + f[:-1]) / 2)])
        return np.interp(x, g, cum, left=0.0, right=cum[-1])

    def ratio_at(self, x, cell: int) -> np.ndarray:
        ok = np.isfinite(self.ratio[:, cell])
        return np.interp(x, self.grid[ok], self.ratio[ok, cell], left=np.nan, right=np.nan)


def density_curve(spec: QuotientSpec, grid, epsilons=DEFAULT_EPSILONS, *, weights=None,
                  mode: str = "sweep", ratio_floor: float = 1e-12) -> DensityCurve:
    """Limiting densities ``mu_i'(lambda) = -Im R_i(lambda + i eps) / pi``,
    extrapolated to eps = 0 over the schedule, plus the mixture
    ``sum_i c_i mu_i'`` and ratio curves ``mu_i' / mixture``.

    Points where continuation fails at any eps are NaN with status
    ``"missing"``; they are never interpolated.
    """
    grid = np.asarray(grid, dtype=float)
    epsilons = tuple(sorted((float(e) for e in epsilons), reverse=True))
    if any(e <= 0 for e in epsilons):
        raise ValueError("epsilons must be positive")
    c = spec.cell_fractions() if weights is None else np.asarray(weights, dtype=float)
    raw = np.empty((len(epsilons), len(grid), spec.k))
    ok = np.ones(len(grid), dtype=bool)
    for e, eps in enumerate(epsilons):
        R, good = stieltjes_line(spec, grid + 1j * eps, mode=mode)
        raw[e] = -R.imag / np.pi
        ok &= good
    mu = extrapolate_zero(epsilons, raw) if len(epsilons) > 1 else raw[0].copy()
    mu[~ok] = np.nan
    neg = np.nan_to_num(np.minimum(mu, 0.0))
    clipped = float(-neg.min(initial=0.0))
    if clipped > 0:
        log.info("clipped negative density values, largest magnitude %.3g", clipped)
    mu = np.where(mu < 0, 0.0, mu)
    mixture = mu @ c
    with np.errstate(invalid="ignore", divide="ignore"):
        ratio = np.where(mixture[:, None] > ratio_floor, mu / mixture[:, None], np.nan)
    status = np.where(ok, "ok", "missing")
    return DensityCurve(grid, mu, mixture, ratio, status, c, epsilons, clipped, raw)


def support_bound(spec: QuotientSpec) -> float:
    """Gershgorin bound on the spectrum of any S-regular matrix with these
    weights (and of its extension to the tree)."""
    return float(np.max(np.abs(spec.b) + (spec.S * np.abs(spec.F)).sum(axis=1)))


@dataclass
class MomentCheck:
    ell: np.ndarray
    integral: np.ndarray
    expected: np.ndarray
    abs_err: np.ndarray
    rel_err: np.ndarray


def moment_check(curve: DensityCurve, table: WalkTable, ell_max: int, cell: int | None = None) -> MomentCheck:
    """Compare ``integral lambda^l dmu`` (trapezoid on the grid) with the
    walk counts; ``cell=None`` compares the mixture with ``sum_i c_i omega_i``.

    Atoms are not captured by the curve, so specs whose measures have atoms
    will show a deficit equal to the atom's contribution.
    """
    ok = np.isfinite(curve.mixture)
    g = curve.grid[ok]
    f = curve.mixture[ok] if cell is None else curve.mu[ok, cell]
    expected_all = table.mixture(curve.weights) if cell is None else table.cell(cell)
    ells = np.arange(ell_max + 1)
    integral = np.array([np.trapezoid(g ** ell * f, g) for ell in ells])
    expected = expected_all[: ell_max + 1]
    abs_err = np.abs(integral - expected)
    with np.errstate(divide="ignore", invalid="ignore"):
        rel = np.where(expected != 0, abs_err / np.abs(expected), np.nan)
    return MomentCheck(ells, integral, expected, abs_err, rel)


def kesten_mckay_density(d: int, x) -> np.ndarray:
    """Closed-form limiting density of random d-regular graphs."""
    x = np.asarray(x, dtype=float)
    edge = 2 * math.sqrt(d - 1)
    inside = np.abs(x) < edge
    out = np.zeros_like(x)
    xi = x[inside]
    out[inside] = d * np.sqrt(4 * (d - 1) - xi ** 2) / (2 * np.pi * (d * d - xi ** 2))
    return out
