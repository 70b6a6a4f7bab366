"""Tverberg points and convex-hull membership in small dimensions.

Partitions are searched exhaustively in restricted-growth-string order and
each candidate is tested with a phase-1 simplex, so results are exact up to
floating-point tolerance and fully deterministic.  Inputs are centred and
scaled to unit spread before solving; the stated tolerances apply in that
frame, i.e. relative to ``max(1, spread)`` in the caller's coordinates.
"""

from __future__ import annotations

from dataclasses import dataclass
import numpy as np

from . import _kernels

__all__ = [
    "FEASIBILITY_TOL",
    "VERIFY_TOL",
    "DEFAULT_PARTITION_CAP",
    "PointSet",
    "FeasibilityResult",
    "HullResult",
    "TverbergResult",
    "TverbergError",
    "solve_linear_feasibility",
    "in_convex_hull",
    "min_norm_hull_weights",
    "restricted_growth_strings",
    "tverberg_point",
    "verify_tverberg",
]

FEASIBILITY_TOL = 1e-9
VERIFY_TOL = 1e-7
DEFAULT_PARTITION_CAP = 200_000


class TverbergError(RuntimeError):
    pass


@dataclass(frozen=True, eq=False)
class PointSet:
    """Ordered multiset of points in R^m with an optional sender tag per point."""

    points: np.ndarray
    tags: tuple[int, ...] | None = None

    def __post_init__(self) -> None:
        pts = np.array(self.points, dtype=float)
        if pts.ndim == 1:
            pts = pts.reshape(-1, 1)
        if pts.ndim != 2 or pts.shape[0] == 0:
            raise ValueError("a point set needs a non-empty (count, dimension) array")
        if not np.all(np.isfinite(pts)):
            raise ValueError("point coordinates must be finite")
        if self.tags is not None and len(self.tags) != pts.shape[0]:
            raise ValueError("one tag per point is required")
        object.__setattr__(self, "points", pts)

    @property
    def dimension(self) -> int:
        return self.points.shape[1]

    def __len__(self) -> int:
        return self.points.shape[0]


@dataclass(frozen=True)
class FeasibilityResult:
    feasible: bool
    assignment: np.ndarray | None
    residual: float


@dataclass(frozen=True)
class HullResult:
    inside: bool
    weights: np.ndarray | None
    residual: float


@dataclass(frozen=True, eq=False)
class TverbergResult:
    point: np.ndarray
    partition: tuple[tuple[int, ...], ...]
    weights: tuple[np.ndarray, ...]
    partition_index: int = 0

    def to_dict(self) -> dict:
        return {
            "point": self.point.tolist(),
            "partition": [list(g) for g in self.partition],
            "weights": [w.tolist() for w in self.weights],
        }


def solve_linear_feasibility(A_eq, b_eq, tol: float = FEASIBILITY_TOL) -> FeasibilityResult:
    """Find ``x >= 0`` with ``A_eq @ x = b_eq`` (no objective).

    ``tol`` bounds the max-norm residual of the returned assignment.
    """
    A = np.ascontiguousarray(A_eq, dtype=float)
    b = np.ascontiguousarray(b_eq, dtype=float).reshape(-1)
    if A.ndim == 1:
        A = A.reshape(1, -1)
    if A.ndim != 2 or A.shape[0] != b.shape[0] or A.shape[1] == 0:
        raise ValueError(f"ill-posed system: A has shape {A.shape}, b has shape {b.shape}")
    if not (np.all(np.isfinite(A)) and np.all(np.isfinite(b))):
        raise ValueError("ill-posed system: non-finite coefficients")
    ok, x, res = _kernels.phase1_simplex(A, b, tol)
    return FeasibilityResult(bool(ok), x if ok else None, float(res))


def _as_points(ps) -> np.ndarray:
    if isinstance(ps, PointSet):
        return ps.points
    pts = np.asarray(ps, dtype=float)
    return pts.reshape(-1, 1) if pts.ndim == 1 else pts


def in_convex_hull(q, ps: PointSet | np.ndarray, tol: float = FEASIBILITY_TOL) -> HullResult:
    """Whether ``q`` is a convex combination of ``ps`` (within ``tol``), with a witness."""
    pts = _as_points(ps)
    q = np.asarray(q, dtype=float).reshape(-1)
    if q.shape[0] != pts.shape[1]:
        raise ValueError(f"query has dimension {q.shape[0]}, points have {pts.shape[1]}")
    ok, w, res = _kernels.hull_feasible(q, np.ascontiguousarray(pts), tol)
    return HullResult(bool(ok), w if ok else None, float(res))


def min_norm_hull_weights(q, ps: PointSet | np.ndarray, tol: float = VERIFY_TOL) -> HullResult:
    """Convex weights reproducing ``q`` with the smallest Euclidean norm.

    Unique whenever ``q`` is in the hull.  Negative round-off is clipped and
    the weights renormalised to sum to one.
    """
    pts = _as_points(ps)
    q = np.asarray(q, dtype=float).reshape(-1)
    if q.shape[0] != pts.shape[1]:
        raise ValueError(f"query has dimension {q.shape[0]}, points have {pts.shape[1]}")
    if pts.shape[0] > 20:
        raise ValueError("min-norm decomposition supports at most 20 points")
    ok, w, res = _kernels.hull_min_norm(q, np.ascontiguousarray(pts), tol)
    return HullResult(bool(ok), w if ok else None, float(res))


def restricted_growth_strings(n: int, k: int, cap: int = DEFAULT_PARTITION_CAP) -> tuple[np.ndarray, bool]:
    """Set partitions of ``n`` items into exactly ``k`` blocks, as label rows.

    Rows are restricted growth strings in lexicographic order.  Returns the
    first ``cap`` rows and whether the list is complete.
    """
    if k < 1 or n < k:
        return np.zeros((0, n), dtype=np.int64), True
    rows: list[list[int]] = []
    complete = True
    label = [0] * n

    def rec(pos: int, used: int) -> bool:
        nonlocal complete
        remaining = n - pos
        if remaining < k - used:
            return True
        if pos == n:
            if used == k:
                if len(rows) >= cap:
                    complete = False
                    return False
                rows.append(list(label))
            return True
        for v in range(min(used + 1, k)):
            label[pos] = v
            if not rec(pos + 1, max(used, v + 1)):
                return False
        return True

    label[0] = 0
    rec(1, 1)
    table = np.array(rows, dtype=np.int64).reshape(len(rows), n)
    table.setflags(write=False)
    return table, complete


_TABLES: dict[tuple[int, int, int], tuple[np.ndarray, bool]] = {}


def _partition_table(n: int, k: int, cap: int) -> tuple[np.ndarray, bool]:
    key = (n, k, cap)
    hit = _TABLES.get(key)
    if hit is None:
        hit = _TABLES[key] = restricted_growth_strings(n, k, cap)
    return hit


def tverberg_point(
    ps: PointSet | np.ndarray,
    f: int,
    tol: float = FEASIBILITY_TOL,
    partition_cap: int = DEFAULT_PARTITION_CAP,
) -> TverbergResult:
    """A point common to the hulls of some partition into ``f + 1`` groups.

    Requires exactly ``(m + 1) f + 1`` points in R^m, the cardinality at
    which Tverberg's theorem guarantees such a partition.  The first
    feasible partition in restricted-growth order wins.
    """
    pts = _as_points(ps)
    n, m = pts.shape
    if f < 0:
        raise ValueError(f"f must be non-negative, got {f}")
    need = (m + 1) * f + 1
    if n != need:
        raise ValueError(f"Tverberg point needs (m+1)f+1 = {need} points in R^{m}, got {n}")
    if f == 0:
        return TverbergResult(pts[0].copy(), ((0,),), (np.ones(1),), 0)
    k = f + 1
    table, complete = _partition_table(n, k, partition_cap)
    idx, x, point = _kernels.tverberg_solve(np.ascontiguousarray(pts), table, k, tol)
    if idx < 0:
        if not complete:
            raise TverbergError(f"partition cap {partition_cap} exhausted without a certificate")
        raise TverbergError("no certificate found: every partition failed at the feasibility tolerance")
    members: list[list[int]] = [[] for _ in range(k)]
    for j, g in enumerate(table[idx].tolist()):
        members[g].append(j)
    groups = tuple(tuple(g) for g in members)
    weights = tuple(x[list(g)] for g in groups)
    return TverbergResult(point, groups, tuple(weights), int(idx))


def verify_tverberg(ps: PointSet | np.ndarray, result: TverbergResult, f: int | None = None, tol: float = VERIFY_TOL) -> bool:
    """Re-check every group of a certificate with an independent hull test."""
    pts = _as_points(ps)
    seen: list[int] = []
    for g in result.partition:
        if not g:
            return False
        seen.extend(g)
    if sorted(seen) != list(range(pts.shape[0])):
        return False
    if f is not None and len(result.partition) != f + 1:
        return False
    for g in result.partition:
        if not in_convex_hull(result.point, pts[list(g)], tol).inside:
            return False
    return True
