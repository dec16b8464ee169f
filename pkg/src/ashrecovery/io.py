"""CSV readers and writers.

Formats (header first, LF line endings, decimal integers):

* trajectories: ``user_id,slot,tower_id``, one row per (user, slot),
  ``-1`` for a slot without record;
* tower map: ``tower_id,x_m,y_m,base_station_id,district_id``;
* aggregate: ``slot,tower_id,count``, zero counts omitted;
* metrics: ``metric,stage,param,value``; error CDF: ``meters,cum_fraction``.

Recovered trajectories use the trajectory format with ids ``r0 .. r(N-1)``.
"""

from __future__ import annotations

import csv
from pathlib import Path
from typing import Iterable, List, Sequence, Tuple

import numpy as np

from .aggregation import AggregateSeries
from .model import NO_RECORD, DataError, TimeGrid, TowerMap, TrajectorySet

TRAJECTORY_HEADER = ("user_id", "slot", "tower_id")
TOWER_HEADER = ("tower_id", "x_m", "y_m", "base_station_id", "district_id")
AGGREGATE_HEADER = ("slot", "tower_id", "count")
METRICS_HEADER = ("metric", "stage", "param", "value")
CDF_HEADER = ("meters", "cum_fraction")


def _writer(path):
    f = open(path, "w", newline="", encoding="utf-8")
    return f, csv.writer(f, lineterminator="\n")


def _read_rows(path, header: Sequence[str]) -> Iterable[Tuple[int, List[str]]]:
    """Yield ``(line_number, fields)`` after checking the header."""
    with open(path, newline="", encoding="utf-8") as f:
        reader = csv.reader(f)
        first = next(reader, None)
        if first is None or tuple(h.strip() for h in first) != tuple(header):
            raise DataError(f"{path}: expected header {','.join(header)}, got {first}")
        for row in reader:
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != len(header):
                raise DataError(f"{path}: row {reader.line_num}: expected {len(header)} fields, got {len(row)}")
            yield reader.line_num, row


def _int(path, line: int, value: str, name: str) -> int:
    try:
        return int(value)
    except ValueError:
        raise DataError(f"{path}: row {line}: {name} {value!r} is not an integer") from None


def _float(path, line: int, value: str, name: str) -> float:
    try:
        return float(value)
    except ValueError:
        raise DataError(f"{path}: row {line}: {name} {value!r} is not a number") from None


# -- tower map ------------------------------------------------------------------

def store_tower_map(tower_map: TowerMap, path) -> None:
    f, w = _writer(path)
    with f:
        w.writerow(TOWER_HEADER)
        for tid, (x, y), b, d in zip(tower_map.ids, tower_map.xy,
                                     tower_map.base_station_ids, tower_map.district_ids):
            w.writerow((int(tid), repr(float(x)), repr(float(y)), int(b), int(d)))


def load_tower_map(path) -> TowerMap:
    ids, xy, bs, dist = [], [], [], []
    for line, row in _read_rows(path, TOWER_HEADER):
        ids.append(_int(path, line, row[0], "tower_id"))
        xy.append((_float(path, line, row[1], "x_m"), _float(path, line, row[2], "y_m")))
        bs.append(_int(path, line, row[3], "base_station_id"))
        dist.append(_int(path, line, row[4], "district_id"))
    if not ids:
        raise DataError(f"{path}: no towers")
    return TowerMap(np.array(ids), np.array(xy, dtype=np.float64), np.array(bs), np.array(dist))


# -- trajectories ---------------------------------------------------------------

def store_trajectories(ts, path, user_labels: Sequence[str] = None) -> None:
    """Write a trajectory or recovered set; ``user_labels`` overrides the ids."""
    loc = np.asarray(ts.locations)
    if user_labels is None:
        user_labels = [str(int(u)) for u in ts.user_ids]
    f, w = _writer(path)
    with f:
        w.writerow(TRAJECTORY_HEADER)
        for label, row in zip(user_labels, loc):
            for t, tower in enumerate(row):
                w.writerow((label, t, int(tower)))


def store_recovered(rec, path) -> None:
    store_trajectories(rec, path, [f"r{i}" for i in range(rec.N)])


def _grid_for(path, slots: int, slot_seconds: int) -> TimeGrid:
    spd = 86400 // slot_seconds
    if slots % spd:
        raise DataError(f"{path}: {slots} slots is not a whole number of {slot_seconds}s days")
    return TimeGrid(slot_seconds=slot_seconds, num_days=slots // spd)


def _parse_trajectories(path, tower_map: TowerMap, T):
    users: dict = {}
    order: List[str] = []
    known = set(int(v) for v in tower_map.ids)
    for line, row in _read_rows(path, TRAJECTORY_HEADER):
        label = row[0].strip()
        slot = _int(path, line, row[1], "slot")
        tower = _int(path, line, row[2], "tower_id")
        if tower != NO_RECORD and tower not in known:
            raise DataError(f"{path}: row {line}: unknown tower id {tower}")
        if label not in users:
            users[label] = {}
            order.append(label)
        if slot < 0 or (T is not None and slot >= T):
            raise DataError(f"{path}: row {line}: slot {slot} outside [0, {T})")
        if slot in users[label]:
            raise DataError(f"{path}: row {line}: duplicate slot {slot} for user {label}")
        users[label][slot] = (tower, line)
    if not users:
        raise DataError(f"{path}: zero trajectories")
    if T is None:
        T = 1 + max(max(slots) for slots in users.values())
    loc = np.empty((len(order), T), dtype=np.int64)
    for i, label in enumerate(order):
        slots = users[label]
        if len(slots) != T:
            last = max(ln for _, ln in slots.values())
            raise DataError(f"{path}: row {last}: user {label} has {len(slots)} slots, expected {T}")
        for s, (tower, _) in slots.items():
            loc[i, s] = tower
    return order, loc


def load_trajectories(path, tower_map: TowerMap, grid: TimeGrid = None,
                      slot_seconds: int = 1800) -> TrajectorySet:
    """Read a trajectory CSV; without ``grid`` the number of days is taken
    from the file."""
    labels, loc = _parse_trajectories(path, tower_map, None if grid is None else grid.T)
    if grid is None:
        grid = _grid_for(path, loc.shape[1], slot_seconds)
    try:
        ids = np.array([int(v) for v in labels], dtype=np.int64)
    except ValueError:
        # recovered files carry labels like r17
        ids = np.arange(len(labels))
    return TrajectorySet(grid, tower_map, ids, loc)


def load_recovered(path, tower_map: TowerMap, grid: TimeGrid = None, stage: str = "full",
                   slot_seconds: int = 1800):
    from .recovery import RecoveredTrajectorySet
    _, loc = _parse_trajectories(path, tower_map, None if grid is None else grid.T)
    if grid is None:
        grid = _grid_for(path, loc.shape[1], slot_seconds)
    return RecoveredTrajectorySet(grid, tower_map, loc, stage)


# -- aggregates -----------------------------------------------------------------

def store_aggregate(agg: AggregateSeries, path) -> None:
    f, w = _writer(path)
    ids = agg.tower_map.ids
    with f:
        w.writerow(AGGREGATE_HEADER)
        for t in range(agg.grid.T):
            for m in np.nonzero(agg.counts[t])[0]:
                w.writerow((t, int(ids[m]), int(agg.counts[t, m])))


def load_aggregate(path, tower_map: TowerMap, grid: TimeGrid = None,
                   slot_seconds: int = 1800) -> AggregateSeries:
    entries = []
    for line, row in _read_rows(path, AGGREGATE_HEADER):
        t = _int(path, line, row[0], "slot")
        tower = _int(path, line, row[1], "tower_id")
        c = _int(path, line, row[2], "count")
        if t < 0 or (grid is not None and t >= grid.T):
            raise DataError(f"{path}: row {line}: slot {t} outside the time grid")
        if not tower_map.contains(tower):
            raise DataError(f"{path}: row {line}: unknown tower id {tower}")
        if c < 0:
            raise DataError(f"{path}: row {line}: negative count {c}")
        entries.append((t, tower, c))
    if not entries:
        raise DataError(f"{path}: empty aggregate")
    if grid is None:
        grid = _grid_for(path, 1 + max(e[0] for e in entries), slot_seconds)
    counts = np.zeros((grid.T, len(tower_map)), dtype=np.int64)
    e = np.array(entries, dtype=np.int64)
    np.add.at(counts, (e[:, 0], tower_map.index_of(e[:, 1])), e[:, 2])
    return AggregateSeries(grid, tower_map, counts)


# -- metrics --------------------------------------------------------------------

def store_metrics(rows, path) -> None:
    f, w = _writer(path)
    with f:
        w.writerow(METRICS_HEADER)
        for metric, stage, param, value in rows:
            w.writerow((metric, stage, param, repr(float(value))))


def load_metrics(path) -> List[Tuple[str, str, str, float]]:
    return [(r[0], r[1], r[2], _float(path, line, r[3], "value"))
            for line, r in _read_rows(path, METRICS_HEADER)]


def store_cdf(points, path, header: Sequence[str] = CDF_HEADER) -> None:
    f, w = _writer(path)
    with f:
        w.writerow(header)
        for x, y in points:
            w.writerow((repr(float(x)), repr(float(y))))


def stage_path(path, stage_no: int) -> Path:
    """``out.csv`` -> ``out.csv.stage2``."""
    return Path(f"{path}.stage{stage_no}")
