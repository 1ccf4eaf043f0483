"""Minimum-cost injective assignment (Hungarian method) with pinned tie-breaking.

The cost of an assignment is defined as the left-to-right sum of its entries in
ascending row order; among all minimum-cost injective maps of size min(n, m)
the solver returns the one whose (row, col) pair list, sorted by row, is
lexicographically smallest. Negative costs are fine.
"""

from __future__ import annotations

import numpy as np


def _solve_square(cost: np.ndarray) -> list[int]:
    """Potential-based shortest-augmenting-path solver on a square matrix.

    Returns col_of_row. O(n^3). Indices are 1-based internally (column 0 is the
    virtual start column of the classic formulation).
    """
    n = cost.shape[0]
    INF = float("inf")
    u = [0.0] * (n + 1)
    v = [0.0] * (n + 1)
    p = [0] * (n + 1)    # p[j] = row matched to column j
    way = [0] * (n + 1)
    for i in range(1, n + 1):
        p[0] = i
        j0 = 0
        minv = [INF] * (n + 1)
        used = [False] * (n + 1)
        while True:
            used[j0] = True
            i0 = p[j0]
            delta = INF
            j1 = 0
            row = cost[i0 - 1]
            for j in range(1, n + 1):
                if used[j]:
                    continue
                cur = row[j - 1] - u[i0] - v[j]
                if cur < minv[j]:
                    minv[j] = cur
                    way[j] = j0
                if minv[j] < delta:
                    delta = minv[j]
                    j1 = j
            for j in range(n + 1):
                if used[j]:
                    u[p[j]] += delta
                    v[j] -= delta
                else:
                    minv[j] -= delta
            j0 = j1
            if p[j0] == 0:
                break
        while j0:
            j1 = way[j0]
            p[j0] = p[j1]
            j0 = j1
    col_of_row = [0] * n
    for j in range(1, n + 1):
        if p[j] > 0:
            col_of_row[p[j] - 1] = j - 1
    return col_of_row


def _solve(cost: np.ndarray) -> list[tuple[int, int]]:
    """Some optimal injective map of size min(n, m), as (row, col) pairs sorted by row."""
    n, m = cost.shape
    if n == 0 or m == 0:
        return []
    side = max(n, m)
    padded = np.zeros((side, side), dtype=np.float64)
    padded[:n, :m] = cost
    col_of_row = _solve_square(padded)
    return [(r, col_of_row[r]) for r in range(n) if col_of_row[r] < m]


def _ordered_total(cost: np.ndarray, pairs: list[tuple[int, int]]) -> float:
    total = 0.0
    for r, c in sorted(pairs):
        total += float(cost[r, c])
    return total


def hungarian(cost) -> dict[int, int]:
    """Injective row -> col map of size min(n, m) minimizing the total cost.

    Deterministic: among equal-cost optima, returns the lexicographically
    smallest (row, col) pair list. Raises ValueError on non-finite costs.
    """
    matrix = np.asarray(cost, dtype=np.float64)
    if matrix.ndim != 2:
        raise ValueError(f"cost must be a 2-D matrix, got shape {matrix.shape}")
    n, m = matrix.shape
    if n == 0 or m == 0:
        return {}
    if not np.isfinite(matrix).all():
        raise ValueError("non-finite cost entry")

    size = min(n, m)
    chosen: list[tuple[int, int]] = []
    free_cols = list(range(m))

    for r in range(n):
        if len(chosen) == size:
            break
        rows_after = n - r - 1
        best_key = None
        best_choice = None  # col index, or None for skipping row r

        for c in free_cols:
            rest_cols = [x for x in free_cols if x != c]
            sub = matrix[np.ix_(range(r + 1, n), rest_cols)]
            pairs = list(chosen) + [(r, c)]
            for sr, sc in _solve(sub):
                pairs.append((r + 1 + sr, rest_cols[sc]))
            total = _ordered_total(matrix, pairs)
            key = (total, 0, c)  # prefer assigning row r over skipping it on ties
            if best_key is None or key < best_key:
                best_key = key
                best_choice = c

        if rows_after >= size - len(chosen):
            sub = matrix[np.ix_(range(r + 1, n), free_cols)]
            pairs = list(chosen)
            for sr, sc in _solve(sub):
                pairs.append((r + 1 + sr, free_cols[sc]))
            total = _ordered_total(matrix, pairs)
            key = (total, 1, -1)
            if best_key is None or key < best_key:
                best_key = key
                best_choice = None

        if best_choice is not None:
            chosen.append((r, best_choice))
            free_cols.remove(best_choice)

    assert len(chosen) == size
    return dict(chosen)
