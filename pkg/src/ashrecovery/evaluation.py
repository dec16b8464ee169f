"""How much did the attack recover?

Recovered trajectories are first paired with ground-truth ones greedily,
then scored by the fraction of exactly recovered (slot, tower) points and by
the distance between recovered and true towers.  Uniqueness measures how
easily a trajectory could be re-identified from a few of its points.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numba
import numpy as np
import scipy.sparse as sp

from .information import HistogramBatch, _merge_batches, _xlogx_sums
from .model import NO_RECORD, DataError, TimeGrid, TowerMap, TrajectorySet
from .recovery import RecoveredTrajectorySet, RecoveryResult

CDF_GRID = (0.0, 100.0, 200.0, 500.0, 1000.0, 2000.0, 5000.0)
STRATEGIES = ("top", "rand", "cont")
_UNIQ_STREAM = 0x55
_GAIN_STREAM = 0x47


def _locations(x) -> np.ndarray:
    return np.asarray(getattr(x, "locations", x), dtype=np.int64)


def similarity(recovered, truth, slots=None) -> sp.csr_matrix:
    """Sparse ``S[i, j]`` = number of slots where recovered ``i`` and truth
    ``j`` sit on the same tower."""
    z, y = _locations(recovered), _locations(truth)
    if z.shape != y.shape:
        raise DataError(f"shape mismatch: recovered {z.shape} vs truth {y.shape}")
    if slots is not None:
        z, y = z[:, slots], y[:, slots]
    n, T = z.shape
    ids = np.unique(np.concatenate([z.ravel(), y.ravel()]))
    m = len(ids)
    cols_z = (np.searchsorted(ids, z) + m * np.arange(T)[None, :]).ravel()
    cols_y = (np.searchsorted(ids, y) + m * np.arange(T)[None, :]).ravel()
    rows = np.repeat(np.arange(n), T)
    ones = np.ones(n * T, dtype=np.int32)
    a = sp.csr_matrix((ones, (rows, cols_z)), shape=(n, m * T))
    b = sp.csr_matrix((ones, (rows, cols_y)), shape=(n, m * T))
    return (a @ b.T).tocsr()


def pair_greedy(recovered, truth, slots=None) -> np.ndarray:
    """``pairing[i]`` = truth index paired with recovered ``i``.

    Recovered trajectories are visited in index order; each takes the
    still-unpaired truth with the most matching slots (smallest index on
    ties).
    """
    sim = similarity(recovered, truth, slots)
    n = sim.shape[0]
    taken = np.zeros(n, dtype=bool)
    pairing = np.empty(n, np.int64)
    next_free = 0
    for i in range(n):
        lo, hi = sim.indptr[i], sim.indptr[i + 1]
        cols, vals = sim.indices[lo:hi], sim.data[lo:hi]
        choice = -1
        if len(cols):
            for k in np.lexsort((cols, -vals)):
                if vals[k] > 0 and not taken[cols[k]]:
                    choice = cols[k]
                    break
        if choice < 0:
            while taken[next_free]:
                next_free += 1
            choice = next_free
        taken[choice] = True
        pairing[i] = choice
    return pairing


def accuracy(recovered, truth, pairing, slots=None) -> float:
    """Mean over trajectories of the fraction of slots recovered exactly."""
    z, y = _locations(recovered), _locations(truth)
    if slots is not None:
        z, y = z[:, slots], y[:, slots]
    pairing = np.asarray(pairing)
    if len(pairing) == 0 or z.shape[1] == 0:
        raise DataError("nothing to score")
    hits = z == y[pairing]
    return float(hits.mean(axis=1).mean())


def recovery_error(recovered, truth, pairing, tower_map: TowerMap, slots=None) -> np.ndarray:
    """Meters between recovered and true tower, one value per (pair, slot)."""
    z, y = _locations(recovered), _locations(truth)
    if slots is not None:
        z, y = z[:, slots], y[:, slots]
    a = tower_map.coords(z)
    b = tower_map.coords(y[np.asarray(pairing)])
    return np.hypot(a[..., 0] - b[..., 0], a[..., 1] - b[..., 1])


def error_cdf(errors, grid: Sequence[float] = CDF_GRID) -> List[Tuple[float, float]]:
    """Cumulative fraction of errors <= each grid point, closed at the maximum."""
    e = np.sort(np.asarray(errors, dtype=np.float64).ravel())
    if e.size == 0:
        raise DataError("no errors to summarise")
    pts = sorted(set(float(g) for g in grid) | {float(e[-1])})
    return [(g, float(np.searchsorted(e, g, side="right") / e.size)) for g in pts]


def error_quantiles(errors, qs=(0.1, 0.25, 0.5, 0.75, 0.9, 0.95, 0.99)) -> List[Tuple[float, float]]:
    e = np.asarray(errors, dtype=np.float64).ravel()
    return [(float(q), float(np.quantile(e, q))) for q in qs]


# -- uniqueness ---------------------------------------------------------------

def top_k_keys(locations: np.ndarray, k: int) -> np.ndarray:
    """Each user's ``k`` most visited towers, most frequent first (ties to
    the smaller id), padded with ``NO_RECORD``."""
    loc = _locations(locations)
    keys = np.full((loc.shape[0], k), NO_RECORD, np.int64)
    for i, row in enumerate(loc):
        towers, counts = np.unique(row[row != NO_RECORD], return_counts=True)
        order = np.lexsort((towers, -counts))[:k]
        keys[i, : len(order)] = towers[order]
    return keys


def _unique_rows(keys: np.ndarray) -> np.ndarray:
    _, inv, counts = np.unique(keys, axis=0, return_inverse=True, return_counts=True)
    return counts[inv.ravel()] == 1


@numba.njit(cache=True)
def _consistent_counts(loc, slots, towers):
    """For each user i, how many users have ``loc[v, slots[i, q]] == towers[i, q]``
    for every q (including i itself)."""
    n, T = loc.shape
    K = slots.shape[1]
    out = np.zeros(n, np.int64)
    # inverted index on (slot, tower) would need a hash map; instead bucket by
    # the first sampled slot and scan users sharing that first point
    for i in range(n):
        s0 = slots[i, 0]
        t0 = towers[i, 0]
        c = 0
        for v in range(n):
            if loc[v, s0] != t0:
                continue
            ok = True
            for q in range(1, K):
                if loc[v, slots[i, q]] != towers[i, q]:
                    ok = False
                    break
            if ok:
                c += 1
        out[i] = c
    return out


def _sample_points(T: int, n: int, k: int, strategy: str, rng) -> np.ndarray:
    k = min(k, T)
    if strategy == "rand":
        return np.argsort(rng.random((n, T)), axis=1)[:, :k]
    start = rng.integers(0, T - k + 1, size=n)
    return start[:, None] + np.arange(k)[None, :]


def uniqueness(trajectories, k: int, strategy: str = "top", seed: int = 0,
               repeats: int = 10) -> float:
    """Fraction of users singled out by ``k`` of their points.

    ``top``: the ordered list of the ``k`` most visited towers must differ
    from every other user's.  ``rand`` / ``cont``: ``k`` random (or
    consecutive) (slot, tower) points of the user must be inconsistent with
    every other trajectory; averaged over ``repeats`` draws.
    """
    if k < 1:
        raise DataError("k must be >= 1")
    if strategy not in STRATEGIES:
        raise DataError(f"unknown strategy {strategy!r}; expected one of {STRATEGIES}")
    loc = _locations(trajectories)
    n, T = loc.shape
    if n == 0:
        raise DataError("empty population")
    if strategy == "top":
        return float(_unique_rows(top_k_keys(loc, k)).mean())
    covered = np.nonzero((loc != NO_RECORD).all(axis=0))[0]
    loc = np.ascontiguousarray(loc[:, covered])
    fractions = []
    for r in range(repeats):
        rng = np.random.default_rng([seed, _UNIQ_STREAM, r])
        slots = np.ascontiguousarray(_sample_points(loc.shape[1], n, k, strategy, rng))
        towers = np.take_along_axis(loc, slots, axis=1)
        fractions.append(float((_consistent_counts(loc, slots, towers) == 1).mean()))
    return float(np.mean(fractions))


def uniqueness_curve(trajectories, ks=(1, 2, 3, 4, 5), strategy="top", seed=0) -> Dict[int, float]:
    return {k: uniqueness(trajectories, k, strategy, seed) for k in ks}


# -- feasibility statistics ---------------------------------------------------

def _paired_gain(left: HistogramBatch, right: HistogramBatch) -> np.ndarray:
    mp, mt, mc = _merge_batches(left.ptr, left.towers, left.counts,
                                right.ptr, right.towers, right.counts)
    def h(ptr, counts):
        tot, s = _xlogx_sums(ptr, counts)
        return np.log(tot) - s / tot
    return h(mp, mc) - (h(left.ptr, left.counts) + h(right.ptr, right.counts)) / 2


def daily_gains(ts: TrajectorySet, seed: int = 0):
    """Information gain of merging consecutive days of the same user versus
    of two different users (partner drawn at random)."""
    idx = ts.indices()
    grid = ts.grid
    n = ts.N
    same, diff = [], []
    for d in range(grid.num_days - 1):
        a = HistogramBatch.from_rows(idx[:, grid.day_slice(d)])
        b = HistogramBatch.from_rows(idx[:, grid.day_slice(d + 1)])
        same.append(_paired_gain(a, b))
        if n > 1:
            rng = np.random.default_rng([seed, _GAIN_STREAM, d])
            other = (np.arange(n) + rng.integers(1, n, size=n)) % n
            diff.append(_paired_gain(a, b.take(other)))
    cat = lambda xs: np.concatenate(xs) if xs else np.zeros(0)
    return cat(same), cat(diff)


def velocity_errors(ts: TrajectorySet, night_window=(0.0, 6.0)) -> np.ndarray:
    """Meters between the constant-velocity prediction and the true next
    location, over every daytime transition of the ground truth."""
    xy = ts.tower_map.xy[ts.indices()]
    T = ts.grid.T
    if T < 3:
        return np.zeros(0)
    est = xy[:, 1:-1] + (xy[:, 1:-1] - xy[:, :-2])
    err = np.hypot(*(est - xy[:, 2:]).transpose(2, 0, 1))
    night = set(ts.grid.night_slots(night_window).tolist())
    day_target = np.array([(t % ts.grid.slots_per_day) not in night for t in range(2, T)])
    return err[:, day_target].ravel()


@dataclass
class RegularityReport:
    top_k_fraction: Dict[int, float]
    top_k_per_user: np.ndarray
    night_location_counts: Dict[int, float]
    night_dwell: float
    velocity_error: np.ndarray
    gain_same: np.ndarray
    gain_diff: np.ndarray


def regularity_stats(ts: TrajectorySet, night_window=(0.0, 6.0), level: str = "sector",
                     seed: int = 0, max_k: int = 5) -> RegularityReport:
    """Per-user visit concentration, night stability, velocity-prediction
    error and same/different-user information gain."""
    if ts.has_gaps():
        raise DataError("regularity_stats needs complete trajectories")
    lv = ts.at_level(level)
    loc = lv.indices()
    n, T = loc.shape
    per_user = np.zeros((n, max_k))
    for i, row in enumerate(loc):
        counts = np.sort(np.bincount(row))[::-1]
        counts = counts[counts > 0]
        per_user[i] = np.cumsum(np.pad(counts, (0, max(0, max_k - len(counts)))))[:max_k] / T
    top = {k: float(per_user[:, k - 1].mean()) for k in range(1, max_k + 1)}

    night = lv.grid.night_slots(night_window)
    night_cols = (np.arange(lv.grid.num_days)[:, None] * lv.grid.slots_per_day + night[None, :]).ravel()
    nl = loc[:, night_cols]
    distinct = np.array([len(np.unique(r)) for r in nl])
    dwell = np.array([np.bincount(r).max() / len(r) for r in nl]) if len(night_cols) else np.zeros(0)
    vals, cnt = np.unique(distinct, return_counts=True)
    night_counts = {int(v): float(c / n) for v, c in zip(vals, cnt)}
    same, diff = daily_gains(lv, seed)
    return RegularityReport(top, per_user, night_counts, float(dwell.mean()) if dwell.size else 0.0,
                            velocity_errors(lv, night_window), same, diff)


# -- reports --------------------------------------------------------------------

def stage_accuracy(rec: RecoveredTrajectorySet, truth: TrajectorySet):
    """Accuracy of one stage.

    Per-day stages are scored day by day (pairing within the day over the
    covered slots) and averaged; the full stage is paired once over all T.
    Returns ``(accuracy, pairings)`` with one pairing per scored segment.
    """
    if rec.N != truth.N or rec.grid.T != truth.grid.T:
        raise DataError("recovered and truth sets differ in size")
    if rec.linked:
        slots = rec.covered_slots()
        p = pair_greedy(rec.locations, truth.locations, slots)
        return accuracy(rec.locations, truth.locations, p, slots), [(slots, p)]
    covered = set(rec.covered_slots().tolist())
    accs, pairings = [], []
    for d in range(rec.grid.num_days):
        sl = rec.grid.day_slice(d)
        slots = np.array([t for t in range(sl.start, sl.stop) if t in covered], dtype=np.int64)
        if len(slots) == 0:
            continue
        p = pair_greedy(rec.locations, truth.locations, slots)
        accs.append(accuracy(rec.locations, truth.locations, p, slots))
        pairings.append((slots, p))
    return float(np.mean(accs)), pairings


@dataclass
class MetricsReport:
    accuracy: Dict[str, float] = field(default_factory=dict)
    error_cdf: Dict[str, List[Tuple[float, float]]] = field(default_factory=dict)
    error_quantiles: Dict[str, List[Tuple[float, float]]] = field(default_factory=dict)
    uniqueness: Dict[str, Dict[int, float]] = field(default_factory=dict)
    extra: Dict[str, float] = field(default_factory=dict)

    def rows(self) -> List[Tuple[str, str, str, float]]:
        out = []
        for stage, a in self.accuracy.items():
            out.append(("accuracy", stage, "", a))
        for stage, cdf in self.error_cdf.items():
            for m, f in cdf:
                out.append(("error_cdf", stage, f"{m:g}", f))
        for stage, qs in self.error_quantiles.items():
            for q, v in qs:
                out.append(("error_quantile", stage, f"{q:g}", v))
        for stage, curve in self.uniqueness.items():
            for k, v in curve.items():
                out.append(("uniqueness_top", stage, str(k), v))
        for key, v in self.extra.items():
            out.append((key, "", "", v))
        return out


def evaluate(result: RecoveryResult, truth: TrajectorySet, ks=(1, 2, 3, 4, 5)) -> MetricsReport:
    rep = MetricsReport()
    stage_label = {"night": "#1", "day": "#2", "full": "#3"}
    for name, rec in result.stages.items():
        acc, pairings = stage_accuracy(rec, truth)
        label = stage_label[name]
        rep.accuracy[label] = acc
        errors = np.concatenate([
            recovery_error(rec.locations, truth.locations, p, truth.tower_map, slots).ravel()
            for slots, p in pairings
        ])
        rep.error_cdf[label] = error_cdf(errors)
        rep.error_quantiles[label] = error_quantiles(errors)
        if rec.linked:
            rep.uniqueness[label] = uniqueness_curve(rec.locations, ks)
    rep.uniqueness["truth"] = uniqueness_curve(truth.locations, ks)
    return rep
