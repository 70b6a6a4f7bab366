"""Compiled inner loops for the geometry module.

Everything here works on pre-scaled data (coordinates of order one), so
the tolerances are absolute in the scaled frame.
"""

import numpy as np
from numba import njit

PIVOT_TOL = 1e-12


@njit(cache=True)
def phase1_simplex(M, b, tol):
    """Find ``x >= 0`` with ``M x = b`` by phase-1 simplex under Bland's rule.

    Returns ``(feasible, x, residual)`` where ``residual`` is the max-norm of
    ``M x - b`` for the returned point.
    """
    r, c = M.shape
    width = c + r + 1
    T = np.zeros((r + 1, width))
    for i in range(r):
        s = 1.0 if b[i] >= 0.0 else -1.0
        for j in range(c):
            T[i, j] = s * M[i, j]
        T[i, c + i] = 1.0
        T[i, width - 1] = s * b[i]
    for j in range(c):
        acc = 0.0
        for i in range(r):
            acc += T[i, j]
        T[r, j] = -acc
    acc = 0.0
    for i in range(r):
        acc += T[i, width - 1]
    T[r, width - 1] = -acc
    basis = np.empty(r, dtype=np.int64)
    for i in range(r):
        basis[i] = c + i

    max_iter = 50 * (r + c) + 100
    for _ in range(max_iter):
        enter = -1
        for j in range(c):
            if T[r, j] < -tol:
                enter = j
                break
        if enter < 0:
            break
        leave = -1
        best = np.inf
        for i in range(r):
            a = T[i, enter]
            if a > PIVOT_TOL:
                ratio = T[i, width - 1] / a
                if ratio < best - 1e-15 or (abs(ratio - best) <= 1e-15 and leave >= 0 and basis[i] < basis[leave]):
                    best = ratio
                    leave = i
        if leave < 0:
            # unbounded direction cannot occur in phase 1; treat as stuck
            break
        piv = T[leave, enter]
        for j in range(width):
            T[leave, j] /= piv
        for i in range(r + 1):
            if i != leave:
                f = T[i, enter]
                if f != 0.0:
                    for j in range(width):
                        T[i, j] -= f * T[leave, j]
        basis[leave] = enter

    x = np.zeros(c)
    for i in range(r):
        if basis[i] < c:
            v = T[i, width - 1]
            x[basis[i]] = v if v > 0.0 else 0.0
    res = 0.0
    for i in range(r):
        acc = -b[i]
        for j in range(c):
            acc += M[i, j] * x[j]
        if abs(acc) > res:
            res = abs(acc)
    return res <= tol, x, res


@njit(cache=True)
def tverberg_system(P, labels, k):
    """Equality system for a common point of the hulls of ``k`` labelled groups.

    Unknowns are one weight per point.  Rows: one sum-to-one row per group,
    then for every group ``g >= 1`` the ``m`` coordinates of
    ``sum_g w p - sum_0 w p = 0``.
    """
    N, m = P.shape
    rows = k + m * (k - 1)
    M = np.zeros((rows, N))
    b = np.zeros(rows)
    for g in range(k):
        b[g] = 1.0
    for j in range(N):
        g = labels[j]
        M[g, j] = 1.0
        if g > 0:
            base = k + (g - 1) * m
            for d in range(m):
                M[base + d, j] += P[j, d]
        else:
            for h in range(1, k):
                base = k + (h - 1) * m
                for d in range(m):
                    M[base + d, j] -= P[j, d]
    return M, b


@njit(cache=True)
def tverberg_search(P, table, k, tol):
    """Index of the first partition in ``table`` whose groups' hulls meet.

    Returns ``(index, weights)``; ``index == -1`` when none is feasible.
    """
    n_part = table.shape[0]
    for idx in range(n_part):
        M, b = tverberg_system(P, table[idx], k)
        ok, x, _ = phase1_simplex(M, b, tol)
        if ok:
            return idx, x
    return -1, np.zeros(P.shape[0])


@njit(cache=True)
def _min_norm_on_support(M, b, mask, tol):
    r, c = M.shape
    cols = 0
    for j in range(c):
        if mask[j]:
            cols += 1
    sub = np.empty((r, cols))
    q = 0
    for j in range(c):
        if mask[j]:
            for i in range(r):
                sub[i, q] = M[i, j]
            q += 1
    sol, _, _, _ = np.linalg.lstsq(sub, b, 1e-12)
    w = np.zeros(c)
    q = 0
    ok = True
    for j in range(c):
        if mask[j]:
            w[j] = sol[q]
            if sol[q] < -tol:
                ok = False
            q += 1
    res = 0.0
    for i in range(r):
        acc = -b[i]
        for j in range(c):
            acc += M[i, j] * w[j]
        if abs(acc) > res:
            res = abs(acc)
    return ok and res <= tol, w, res


@njit(cache=True)
def min_norm_weights(M, b, tol):
    """Minimum-Euclidean-norm ``w >= 0`` with ``M w = b``, by support enumeration.

    The optimum is the least-norm solution on its own support, so scanning
    every support and keeping the smallest feasible candidate is exact.
    The full support is tried first since it is usually already optimal.
    """
    r, c = M.shape
    full = np.ones(c, dtype=np.bool_)
    ok, w, res = _min_norm_on_support(M, b, full, tol)
    if ok:
        return True, w, res
    best_w = np.zeros(c)
    best_norm = np.inf
    best_res = np.inf
    found = False
    mask = np.zeros(c, dtype=np.bool_)
    for bits in range(1, (1 << c) - 1):
        for j in range(c):
            mask[j] = (bits >> j) & 1 == 1
        ok, w, res = _min_norm_on_support(M, b, mask, tol)
        if ok:
            nrm = 0.0
            for j in range(c):
                nrm += w[j] * w[j]
            if nrm < best_norm - 1e-14:
                best_norm = nrm
                best_w = w
                best_res = res
                found = True
    return found, best_w, best_res


@njit(cache=True)
def tverberg_solve(pts, table, k, tol):
    """Centre/scale ``pts``, search ``table`` and rebuild the point in input units.

    Returns ``(index, weights, point)`` with weights renormalised per group.
    """
    N, m = pts.shape
    center = np.zeros(m)
    for j in range(N):
        for d in range(m):
            center[d] += pts[j, d]
    for d in range(m):
        center[d] /= N
    spread = 0.0
    for j in range(N):
        for d in range(m):
            v = abs(pts[j, d] - center[d])
            if v > spread:
                spread = v
    scale = spread if spread > 1.0 else 1.0
    P = np.empty((N, m))
    for j in range(N):
        for d in range(m):
            P[j, d] = (pts[j, d] - center[d]) / scale
    idx, x = tverberg_search(P, table, k, tol)
    point = np.zeros(m)
    if idx < 0:
        return idx, x, point
    labels = table[idx]
    sums = np.zeros(k)
    for j in range(N):
        if x[j] < 0.0:
            x[j] = 0.0
        sums[labels[j]] += x[j]
    for j in range(N):
        x[j] /= sums[labels[j]]
        if labels[j] == 0:
            for d in range(m):
                point[d] += x[j] * pts[j, d]
    return idx, x, point


@njit(cache=True)
def hull_system(q, pts):
    """Scaled system ``[P^T; 1] w = [q; 1]`` for hull membership of ``q``."""
    N, m = pts.shape
    center = np.zeros(m)
    for j in range(N):
        for d in range(m):
            center[d] += pts[j, d]
    for d in range(m):
        center[d] /= N
    spread = 0.0
    for d in range(m):
        v = abs(q[d] - center[d])
        if v > spread:
            spread = v
        for j in range(N):
            v = abs(pts[j, d] - center[d])
            if v > spread:
                spread = v
    scale = spread if spread > 1.0 else 1.0
    M = np.empty((m + 1, N))
    b = np.empty(m + 1)
    for d in range(m):
        for j in range(N):
            M[d, j] = (pts[j, d] - center[d]) / scale
        b[d] = (q[d] - center[d]) / scale
    for j in range(N):
        M[m, j] = 1.0
    b[m] = 1.0
    return M, b


@njit(cache=True)
def hull_feasible(q, pts, tol):
    M, b = hull_system(q, pts)
    return phase1_simplex(M, b, tol)


@njit(cache=True)
def hull_min_norm(q, pts, tol):
    M, b = hull_system(q, pts)
    ok, w, res = min_norm_weights(M, b, tol)
    if ok:
        s = 0.0
        for j in range(w.shape[0]):
            if w[j] < 0.0:
                w[j] = 0.0
            s += w[j]
        for j in range(w.shape[0]):
            w[j] /= s
    return ok, w, res
