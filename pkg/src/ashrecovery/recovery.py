"""Recover individual trajectories from per-slot tower counts.

The attack links the anonymous records of consecutive slots by repeatedly
solving an assignment problem:

1. night: users barely move, so a trajectory's next location is predicted
   to be its current tower;
2. day: constant-velocity extrapolation, ``q[t] + (q[t] - q[t-1])``, grown
   forward from the end of the night window to midnight and backward from
   its start to 00:00;
3. cross-day: daily sub-trajectories are chained by the information gain
   of merging their tower-visit histograms.

The cost of linking trajectory ``i`` to record ``j`` is the Euclidean
distance (meters) between the prediction and the record's tower.  Rows whose
prediction lands exactly on a record tower are linked up front
(:func:`~ashrecovery.assignment.prelink`) and only the remainder goes to the
solver.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Dict, List

import numpy as np

from .aggregation import AggregateSeries, RecordMultiset
from .assignment import CostMatrix, prelink, solve_lsap
from .information import HistogramBatch, gain_matrix
from .model import NO_RECORD, DataError, TimeGrid, TowerMap

log = logging.getLogger(__name__)

STAGES = ("night", "day", "full")


@dataclass(frozen=True)
class RecoveryConfig:
    night_window: tuple = (0.0, 6.0)
    night_threshold: float = 0.0
    day_threshold: float = 0.0
    accumulate_days: bool = True
    seed: int = 0

    def validate(self) -> None:
        lo, hi = self.night_window
        if not 0.0 <= lo < hi <= 24.0:
            raise DataError(f"night window {self.night_window} must lie within one day")
        if self.night_threshold < 0 or self.day_threshold < 0:
            raise DataError("prelink thresholds must be >= 0")


class RecoveredTrajectorySet:
    """Recovered locations as an ``(N, T)`` array of tower ids.

    Slots a stage does not cover hold ``NO_RECORD``.  For the ``night`` and
    ``day`` stages rows are only meaningful within one day: row ``i`` of day
    ``d`` and row ``i`` of day ``d + 1`` are unrelated until the ``full``
    stage chains them.
    """

    def __init__(self, grid: TimeGrid, tower_map: TowerMap, locations, stage: str):
        if stage not in STAGES:
            raise DataError(f"unknown stage {stage!r}")
        locations = np.asarray(locations, dtype=np.int64)
        locations.setflags(write=False)
        self.grid = grid
        self.tower_map = tower_map
        self.locations = locations
        self.stage = stage

    @property
    def N(self) -> int:
        return self.locations.shape[0]

    def covered_slots(self) -> np.ndarray:
        return np.nonzero((self.locations != NO_RECORD).all(axis=0))[0]

    @property
    def linked(self) -> bool:
        return self.stage == "full"

    def __eq__(self, other) -> bool:
        if not isinstance(other, RecoveredTrajectorySet):
            return NotImplemented
        return (self.stage == other.stage and self.grid == other.grid
                and np.array_equal(self.locations, other.locations))


@dataclass
class RecoveryResult:
    stages: Dict[str, RecoveredTrajectorySet] = field(default_factory=dict)

    @property
    def final(self) -> RecoveredTrajectorySet:
        return self.stages["full"]


def _records(records, tower_map: TowerMap) -> np.ndarray:
    if isinstance(records, RecordMultiset):
        records = records.records
    return tower_map.index_of(np.asarray(records, dtype=np.int64))


def _distances(points: np.ndarray, towers_xy: np.ndarray) -> np.ndarray:
    d = points[:, None, :] - towers_xy[None, :, :]
    return np.hypot(d[..., 0], d[..., 1])


def night_cost(current, records, tower_map: TowerMap) -> CostMatrix:
    """Distance from each trajectory's current tower to each next record."""
    cur = tower_map.index_of(np.asarray(current, dtype=np.int64))
    rec = _records(records, tower_map)
    if len(cur) != len(rec):
        raise DataError(f"size mismatch: {len(cur)} trajectories, {len(rec)} records")
    return CostMatrix(_distances(tower_map.xy[cur], tower_map.xy[rec]))


def velocity_estimate(current_xy: np.ndarray, previous_xy: np.ndarray) -> np.ndarray:
    return current_xy + (current_xy - previous_xy)


def day_cost(current, previous, records, tower_map: TowerMap) -> CostMatrix:
    """Distance from the constant-velocity prediction (an off-grid point) to
    each next record's tower."""
    cur = tower_map.index_of(np.asarray(current, dtype=np.int64))
    prev = tower_map.index_of(np.asarray(previous, dtype=np.int64))
    rec = _records(records, tower_map)
    if not len(cur) == len(prev) == len(rec):
        raise DataError(f"size mismatch: {len(cur)} trajectories, {len(rec)} records")
    est = velocity_estimate(tower_map.xy[cur], tower_map.xy[prev])
    return CostMatrix(_distances(est, tower_map.xy[rec]))


def link_step(estimates: np.ndarray, records: np.ndarray, xy: np.ndarray,
              threshold: float = 0.0) -> np.ndarray:
    """Assign the next slot's records (tower indices, ascending) to
    trajectories given their predicted positions; returns one tower index
    per trajectory."""
    n = len(records)
    pl = prelink(estimates, records, xy, threshold)
    col = np.empty(n, np.int64)
    col[pl.rows] = pl.cols
    if len(pl.rest_rows):
        cost = _distances(estimates[pl.rest_rows], xy[records[pl.rest_cols]])
        col[pl.rest_rows] = pl.rest_cols[solve_lsap(cost).perm]
    return records[col]


def _night_range(grid: TimeGrid, cfg: RecoveryConfig) -> np.ndarray:
    slots = grid.night_slots(cfg.night_window)
    if len(slots) == 0:
        raise DataError(f"night window {cfg.night_window} contains no slot of {grid.slot_seconds}s")
    return slots


def recover_night(agg: AggregateSeries, cfg: RecoveryConfig = RecoveryConfig()) -> RecoveredTrajectorySet:
    """Stage 1: link records through each day's night window independently."""
    cfg.validate()
    grid, xy = agg.grid, agg.tower_map.xy
    night = _night_range(grid, cfg)
    out = np.full((agg.N, grid.T), NO_RECORD, np.int64)
    for d in range(grid.num_days):
        base = d * grid.slots_per_day
        cur = agg.record_indices(base + night[0])
        out[:, base + night[0]] = cur
        for s in night[1:]:
            cur = link_step(xy[cur], agg.record_indices(base + s), xy, cfg.night_threshold)
            out[:, base + s] = cur
    ids = agg.tower_map.ids
    return RecoveredTrajectorySet(grid, agg.tower_map, np.where(out >= 0, ids[np.maximum(out, 0)], NO_RECORD), "night")


def recover_day(agg: AggregateSeries, night: RecoveredTrajectorySet,
                cfg: RecoveryConfig = RecoveryConfig()) -> RecoveredTrajectorySet:
    """Stage 2: grow each day's night sub-trajectories into whole days."""
    cfg.validate()
    grid, tm = agg.grid, agg.tower_map
    xy = tm.xy
    spd = grid.slots_per_day
    window = _night_range(grid, cfg)
    w0, w1 = int(window[0]), int(window[-1]) + 1
    out = np.full((agg.N, grid.T), -1, np.int64)
    night_idx = tm.index_of(np.where(night.locations == NO_RECORD, tm.ids[0], night.locations))
    for d in range(grid.num_days):
        base = d * spd
        out[:, base + w0: base + w1] = night_idx[:, base + w0: base + w1]
        for s in range(w1, spd):
            t = base + s
            cur = out[:, t - 1]
            prev = out[:, t - 2] if s - 2 >= w0 else cur
            est = velocity_estimate(xy[cur], xy[prev])
            out[:, t] = link_step(est, agg.record_indices(t), xy, cfg.day_threshold)
        for s in range(w0 - 1, -1, -1):
            t = base + s
            cur = out[:, t + 1]
            nxt = out[:, t + 2] if s + 2 < spd else cur
            est = velocity_estimate(xy[cur], xy[nxt])
            out[:, t] = link_step(est, agg.record_indices(t), xy, cfg.day_threshold)
    return RecoveredTrajectorySet(grid, tm, tm.ids[out], "day")


def link_days(agg: AggregateSeries, days: RecoveredTrajectorySet,
              cfg: RecoveryConfig = RecoveryConfig()) -> RecoveredTrajectorySet:
    """Stage 3: chain daily sub-trajectories by minimum total information gain.

    With ``accumulate_days`` the left-hand histogram of a chain covers every
    day linked so far instead of only the latest one.
    """
    grid, tm = days.grid, days.tower_map
    spd = grid.slots_per_day
    idx = tm.index_of(days.locations)
    n = idx.shape[0]
    out = idx.copy()
    chained = HistogramBatch.from_rows(out[:, grid.day_slice(0)])
    for d in range(grid.num_days - 1):
        right_rows = idx[:, grid.day_slice(d + 1)]
        right = HistogramBatch.from_rows(right_rows)
        cost = gain_matrix(chained, right, len(tm))
        low = cost.min()
        if low < 0:
            cost -= low
        perm = solve_lsap(cost).perm
        out[:, grid.day_slice(d + 1)] = right_rows[perm]
        linked = right.take(perm)
        chained = chained + linked if cfg.accumulate_days else linked
        log.debug("linked day %d -> %d (n=%d)", d, d + 1, n)
    return RecoveredTrajectorySet(grid, tm, tm.ids[out], "full")


def recover(agg: AggregateSeries, cfg: RecoveryConfig = RecoveryConfig()) -> RecoveryResult:
    """Run the three stages; every intermediate result is kept."""
    night = recover_night(agg, cfg)
    day = recover_day(agg, night, cfg)
    full = link_days(agg, day, cfg)
    return RecoveryResult({"night": night, "day": day, "full": full})


def check_repartition(rec: RecoveredTrajectorySet, agg: AggregateSeries) -> List[int]:
    """Covered slots whose recovered records differ from the published ones."""
    bad = []
    m = len(agg.tower_map)
    for t in rec.covered_slots():
        got = np.bincount(agg.tower_map.index_of(rec.locations[:, t]), minlength=m)
        if not np.array_equal(got, agg.counts[t]):
            bad.append(int(t))
    return bad
