"""Maximum-weight bipartite matching on rectangular matrices.

Shortest-augmenting-path implementation of the classical O(n^3) assignment
algorithm. Maximization is turned into minimization by subtracting weights
from the matrix maximum; rectangular inputs are zero-padded to square, and a
row matched to a padded column counts as unassigned.

Determinism: rows are processed in ascending index and column scans prefer
the lowest index on equal slack, so among equally good assignments the one
favoring low row indices, then low column indices, is returned.
"""

from __future__ import annotations

from typing import Optional

import numpy as np


def optimal_matching(weights) -> list[Optional[int]]:
    """Assign each row a distinct column maximizing total weight.

    Returns one entry per row: the column index, or None when the row ends up
    on a zero-weight padding column (more rows than columns).
    """
    w = np.asarray(weights, dtype=float)
    if w.ndim != 2:
        raise ValueError("weight matrix must be 2-D")
    n_rows, n_cols = w.shape
    if n_rows == 0:
        return []
    if n_cols == 0:
        return [None] * n_rows
    if np.isnan(w).any():
        raise ValueError("weight matrix contains NaN")
    if np.isinf(w).any():
        raise ValueError("weight matrix contains infinities")
    if (w < 0.0).any():
        raise ValueError("weight matrix contains negative entries")

    size = max(n_rows, n_cols)
    top = float(w.max()) if w.size else 0.0
    cost = np.full((size, size), top)
    cost[:n_rows, :n_cols] = top - w

    col_row = _solve_min_cost(cost)

    assignment: list[Optional[int]] = [None] * n_rows
    for col, row in enumerate(col_row):
        if row < n_rows and col < n_cols:
            assignment[row] = col
    return assignment


def _solve_min_cost(cost: np.ndarray) -> np.ndarray:
    """Column -> row assignment minimizing total cost of a square matrix."""
    n = cost.shape[0]
    u = np.zeros(n + 1)
    v = np.zeros(n + 1)
    p = np.zeros(n + 1, dtype=int)  # p[j]: row (1-based) matched to column j; 0 = free
    way = np.zeros(n + 1, dtype=int)

    for i in range(1, n + 1):
        p[0] = i
        j0 = 0
        minv = np.full(n + 1, np.inf)
        used = np.zeros(n + 1, dtype=bool)
        while True:
            used[j0] = True
            i0 = p[j0]
            cur = cost[i0 - 1, :] - u[i0] - v[1:]
            free = ~used[1:]
            better = free & (cur < minv[1:])
            minv[1:][better] = cur[better]
            way[1:][better] = j0
            masked = np.where(free, minv[1:], np.inf)
            j1 = int(np.argmin(masked)) + 1  # first index wins ties
            delta = masked[j1 - 1]
            u[p[used]] += delta
            v[used] -= delta
            minv[1:][free] -= delta
            j0 = j1
            if p[j0] == 0:
                break
        while j0 != 0:
            j1 = way[j0]
            p[j0] = p[j1]
            j0 = j1
    return p[1:] - 1  # 0-based rows per column


def matching_weight(weights, assignment: list[Optional[int]]) -> float:
    """Total weight of an assignment as produced by optimal_matching."""
    w = np.asarray(weights, dtype=float)
    return float(sum(w[i, j] for i, j in enumerate(assignment) if j is not None))
