"""Linear sum assignment.

:func:`solve_lsap` is the Hungarian method in its shortest augmenting path
form with row/column potentials (O(n^3)); rows are inserted one at a time
and each insertion runs a Dijkstra-like search over reduced costs
``c[i, j] - u[i] - v[j]``.  :func:`brute_force_lsap` enumerates all
permutations and serves as a test oracle.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass

import numba
import numpy as np
from scipy.spatial import cKDTree

from .model import DataError

BRUTE_FORCE_MAX_N = 10


@dataclass(frozen=True)
class CostMatrix:
    costs: np.ndarray
    unit: str = "m"

    def __post_init__(self):
        c = np.asarray(self.costs, dtype=np.float64)
        if c.ndim != 2 or c.shape[0] != c.shape[1]:
            raise DataError(f"cost matrix must be square, got shape {c.shape}")
        object.__setattr__(self, "costs", c)

    @property
    def n(self) -> int:
        return self.costs.shape[0]


@dataclass(frozen=True)
class Assignment:
    perm: np.ndarray
    total_cost: float


def _as_costs(c) -> np.ndarray:
    if isinstance(c, CostMatrix):
        c = c.costs
    c = np.asarray(c, dtype=np.float64)
    if c.ndim != 2 or c.shape[0] != c.shape[1]:
        raise DataError(f"cost matrix must be square, got shape {c.shape}")
    if c.shape[0] == 0:
        raise DataError("empty cost matrix")
    if not np.isfinite(c).all():
        raise DataError("cost matrix has non-finite entries")
    return np.ascontiguousarray(c)


@numba.njit(cache=True)
def _hungarian(cost):
    n = cost.shape[0]
    inf = np.inf
    # 1-based columns; column 0 is the virtual source of each search
    u = np.zeros(n + 1)
    v = np.zeros(n + 1)
    owner = np.zeros(n + 1, np.int64)
    way = np.zeros(n + 1, np.int64)
    minv = np.empty(n + 1)
    used = np.empty(n + 1, np.bool_)
    for i in range(1, n + 1):
        owner[0] = i
        j0 = 0
        for j in range(n + 1):
            minv[j] = inf
            used[j] = False
        while True:
            used[j0] = True
            i0 = owner[j0]
            row = cost[i0 - 1]
            ui = u[i0]
            delta = inf
            j1 = 0
            for j in range(1, n + 1):
                if not used[j]:
                    cur = row[j - 1] - ui - v[j]
                    if cur < minv[j]:
                        minv[j] = cur
                        way[j] = j0
                    # among equal minima prefer a free column: it ends the search
                    if minv[j] < delta or (minv[j] == delta and owner[j] == 0 and owner[j1] != 0):
                        delta = minv[j]
                        j1 = j
            for j in range(n + 1):
                if used[j]:
                    u[owner[j]] += delta
                    v[j] -= delta
                else:
                    minv[j] -= delta
            j0 = j1
            if owner[j0] == 0:
                break
        while True:
            j1 = way[j0]
            owner[j0] = owner[j1]
            j0 = j1
            if j0 == 0:
                break
    perm = np.empty(n, np.int64)
    for j in range(1, n + 1):
        perm[owner[j] - 1] = j - 1
    return perm


def solve_lsap(c) -> Assignment:
    """Minimum-cost perfect matching of a square cost matrix.

    Returns ``perm`` with ``perm[i]`` the column assigned to row ``i``.
    Among several optimal matchings any one may be returned.
    """
    costs = _as_costs(c)
    perm = _hungarian(costs)
    total = float(costs[np.arange(len(perm)), perm].sum())
    return Assignment(perm, total)


def brute_force_lsap(c) -> Assignment:
    """Exhaustive minimum over all n! permutations (n <= 10).

    Permutations are visited in lexicographic order and only a strictly
    smaller cost replaces the incumbent, so ties resolve to the
    lexicographically smallest permutation.
    """
    costs = _as_costs(c)
    n = costs.shape[0]
    if n > BRUTE_FORCE_MAX_N:
        raise DataError(f"brute force refused for n={n} > {BRUTE_FORCE_MAX_N}")
    perms = np.array(list(itertools.permutations(range(n))), dtype=np.int64)
    totals = costs[np.arange(n)[None, :], perms].sum(axis=1)
    best = int(np.argmin(totals))  # first occurrence = lexicographic tie-break
    return Assignment(perms[best], float(totals[best]))


@dataclass(frozen=True)
class PrelinkResult:
    rows: np.ndarray
    cols: np.ndarray
    rest_rows: np.ndarray
    rest_cols: np.ndarray


def prelink(estimates, records, tower_xy, threshold: float = 0.0) -> PrelinkResult:
    """Directly link trajectories whose next-location estimate sits on a record.

    ``estimates`` are planar points (one per row), ``records`` are tower
    indices in ascending (canonical) order.  For every tower ``g`` in the
    records, rows whose estimate lies within ``threshold`` meters and whose
    nearest record tower is ``g`` are linked to copies of ``g``, lowest row
    index first, up to ``g``'s multiplicity.
    """
    if threshold < 0:
        raise DataError("prelink threshold must be >= 0")
    est = np.asarray(estimates, dtype=np.float64).reshape(-1, 2)
    rec = np.asarray(records, dtype=np.int64)
    n_rows, n_cols = len(est), len(rec)
    empty = np.zeros(0, np.int64)
    if n_rows == 0 or n_cols == 0:
        return PrelinkResult(empty, empty, np.arange(n_rows), np.arange(n_cols))
    towers, start, mult = np.unique(rec, return_index=True, return_counts=True)
    dist, g = cKDTree(tower_xy[towers]).query(est)
    cand = np.nonzero(dist <= threshold)[0]
    if len(cand) == 0:
        return PrelinkResult(empty, empty, np.arange(n_rows), np.arange(n_cols))
    gc = g[cand]
    order = np.lexsort((cand, gc))
    cand, gc = cand[order], gc[order]
    first = np.searchsorted(gc, gc)
    rank = np.arange(len(gc)) - first
    take = rank < mult[gc]
    rows = cand[take]
    cols = start[gc[take]] + rank[take]
    row_order = np.argsort(rows, kind="stable")
    rows, cols = rows[row_order], cols[row_order]
    rest_rows = np.setdiff1d(np.arange(n_rows), rows, assume_unique=True)
    rest_cols = np.setdiff1d(np.arange(n_cols), cols, assume_unique=True)
    return PrelinkResult(rows, cols, rest_rows, rest_cols)
