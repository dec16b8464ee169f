"""From individual trajectories to the published per-tower counts.

The publishing procedure groups raw records into slots, keeps each user's
modal tower per slot, fills gaps by interpolation and counts users per
tower.  Generalization (spatial/temporal coarsening) and record-level
perturbation are the two defenses applied on top.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Dict

import numpy as np
from scipy.spatial import cKDTree

from .model import NO_RECORD, DataError, TimeGrid, TowerMap, Trajectory, TrajectorySet

_PERTURB_STREAM = 0x50
_DROP_STREAM = 0x44


class AggregateSeries:
    """Per-slot user counts, ``counts[t, m]`` for tower index ``m``."""

    def __init__(self, grid: TimeGrid, tower_map: TowerMap, counts):
        counts = np.asarray(counts, dtype=np.int64)
        if counts.shape != (grid.T, len(tower_map)):
            raise DataError(f"counts shape {counts.shape} != ({grid.T}, {len(tower_map)})")
        if (counts < 0).any():
            raise DataError("negative count")
        totals = counts.sum(axis=1)
        if len(totals) and (totals != totals[0]).any():
            bad = int(np.nonzero(totals != totals[0])[0][0])
            raise DataError(f"slot {bad} sums to {totals[bad]}, slot 0 to {totals[0]}")
        counts.setflags(write=False)
        self.grid = grid
        self.tower_map = tower_map
        self.counts = counts

    @property
    def N(self) -> int:
        return int(self.counts[0].sum()) if len(self.counts) else 0

    def counts_at(self, t: int) -> Dict[int, int]:
        row = self.counts[t]
        nz = np.nonzero(row)[0]
        return {int(self.tower_map.ids[m]): int(row[m]) for m in nz}

    def record_indices(self, t: int) -> np.ndarray:
        """Tower indices of the N anonymous records at slot ``t``, ascending."""
        return np.repeat(np.arange(len(self.tower_map)), self.counts[t])

    def __eq__(self, other) -> bool:
        if not isinstance(other, AggregateSeries):
            return NotImplemented
        return (self.grid == other.grid and self.tower_map == other.tower_map
                and np.array_equal(self.counts, other.counts))


@dataclass(frozen=True)
class RecordMultiset:
    slot: int
    records: tuple


@dataclass(frozen=True)
class PerturbConfig:
    p: float = 0.0
    seed: int = 0

    def validate(self) -> None:
        if not 0.0 <= self.p <= 1.0:
            raise DataError(f"displacement probability {self.p} outside [0, 1]")


@dataclass(frozen=True)
class RawRecords:
    """Un-slotted observations: one row per (user, timestamp, tower)."""

    user_ids: np.ndarray
    timestamps: np.ndarray
    tower_ids: np.ndarray


def discretize(raw: RawRecords, grid: TimeGrid, tower_map: TowerMap, users=None) -> TrajectorySet:
    """Keep each user's most frequent tower per slot; empty slots get ``NO_RECORD``.

    Ties go to the smaller tower id.  ``users`` fixes the output row order
    (and includes users with no records at all); default is sorted ids.
    """
    uid = np.asarray(raw.user_ids, dtype=np.int64)
    ts = np.asarray(raw.timestamps, dtype=np.int64)
    tw = np.asarray(raw.tower_ids, dtype=np.int64)
    users = np.unique(uid) if users is None else np.asarray(users, dtype=np.int64)
    out = np.full((len(users), grid.T), NO_RECORD, dtype=np.int64)
    if len(uid) == 0:
        return TrajectorySet(grid, tower_map, users, out)
    tower_map.index_of(tw)
    slot = (ts - grid.start) // grid.slot_seconds
    keep = (slot >= 0) & (slot < grid.T)
    row = np.searchsorted(users, uid)
    row = np.clip(row, 0, max(len(users) - 1, 0))
    keep &= users[row] == uid
    row, slot, tw = row[keep], slot[keep], tw[keep]
    keys, counts = np.unique(np.stack([row, slot, tw], axis=1), axis=0, return_counts=True)
    # within each (row, slot): highest count first, then smallest tower id
    order = np.lexsort((keys[:, 2], -counts, keys[:, 1], keys[:, 0]))
    keys = keys[order]
    first = np.ones(len(keys), dtype=bool)
    first[1:] = (keys[1:, 0] != keys[:-1, 0]) | (keys[1:, 1] != keys[:-1, 1])
    win = keys[first]
    out[win[:, 0], win[:, 1]] = win[:, 2]
    return TrajectorySet(grid, tower_map, users, out)


def _interpolate_row(row: np.ndarray, tower_map: TowerMap, tree: cKDTree) -> np.ndarray:
    known = np.nonzero(row != NO_RECORD)[0]
    if len(known) == 0:
        raise DataError("cannot interpolate a trajectory without any record")
    out = row.copy()
    out[: known[0]] = row[known[0]]
    out[known[-1] + 1:] = row[known[-1]]
    inner = np.nonzero(row[known[0]: known[-1] + 1] == NO_RECORD)[0] + known[0]
    if len(inner):
        right = np.searchsorted(known, inner)
        t0, t1 = known[right - 1], known[right]
        a = tower_map.coords(row[t0])
        b = tower_map.coords(row[t1])
        frac = ((inner - t0) / (t1 - t0))[:, None]
        pts = a + frac * (b - a)
        out[inner] = tower_map.ids[tree.query(pts)[1]]
    return out


def interpolate(traj: Trajectory, tower_map: TowerMap) -> Trajectory:
    """Fill no-record slots with the tower nearest the straight-line position.

    Leading and trailing gaps copy the closest known record.
    """
    tree = cKDTree(tower_map.xy)
    row = np.asarray(traj.locations, dtype=np.int64)
    return Trajectory(traj.user_id, _interpolate_row(row, tower_map, tree))


def interpolate_set(ts: TrajectorySet) -> TrajectorySet:
    if not ts.has_gaps():
        return ts
    tree = cKDTree(ts.tower_map.xy)
    out = ts.locations.copy()
    for i in np.nonzero((out == NO_RECORD).any(axis=1))[0]:
        try:
            out[i] = _interpolate_row(out[i], ts.tower_map, tree)
        except DataError as exc:
            raise DataError(f"user {int(ts.user_ids[i])}: {exc}") from None
    return ts.replace(locations=out)


def aggregate(ts: TrajectorySet) -> AggregateSeries:
    """Count users per tower per slot."""
    if ts.has_gaps():
        raise DataError("aggregate() needs interpolated trajectories (found no-record slot)")
    idx = ts.indices()
    m = len(ts.tower_map)
    T = ts.grid.T
    flat = idx + (np.arange(T) * m)[None, :]
    counts = np.bincount(flat.ravel(), minlength=T * m).reshape(T, m)
    return AggregateSeries(ts.grid, ts.tower_map, counts)


def derive_records(agg: AggregateSeries, t: int) -> RecordMultiset:
    """The anonymous records of slot ``t`` in ascending tower-id order."""
    if not 0 <= t < agg.grid.T:
        raise DataError(f"slot {t} outside [0, {agg.grid.T})")
    ids = agg.tower_map.ids[agg.record_indices(t)]
    return RecordMultiset(t, tuple(int(v) for v in ids))


def coarsen_spatial(agg: AggregateSeries, level: str) -> AggregateSeries:
    """Sum counts over the groups of ``level``; locations become group centroids."""
    if level not in agg.tower_map.levels:
        raise DataError(f"unknown level {level!r}")
    if level == "sector":
        return agg
    group = agg.tower_map.level_index(level)
    coarse = agg.tower_map.coarsen(level)
    counts = np.zeros((agg.grid.T, len(coarse)), dtype=np.int64)
    np.add.at(counts.T, group, agg.counts.T)
    return AggregateSeries(agg.grid, coarse, counts)


def _block_mode(blocks: np.ndarray) -> np.ndarray:
    """Mode along the last axis, ties to the smaller value."""
    eq = blocks[..., :, None] == blocks[..., None, :]
    freq = eq.sum(axis=-1)
    best = freq.max(axis=-1, keepdims=True)
    cand = np.where(freq == best, blocks, np.iinfo(np.int64).max)
    return cand.min(axis=-1)


def resample(ts: TrajectorySet, factor: int) -> TrajectorySet:
    """Re-slot trajectories on a grid ``factor`` times coarser.

    Every coarse slot holds the user's modal tower over its fine slots.
    No-record slots are ignored unless the whole block is empty.
    """
    grid = ts.grid.coarsen(factor)
    if factor == 1:
        return ts
    n = ts.N
    blocks = ts.locations.reshape(n, grid.T, factor)
    if ts.has_gaps():
        # push gaps out of the tie-break by giving them the largest key
        big = np.iinfo(np.int64).max
        masked = np.where(blocks == NO_RECORD, big, blocks)
        eq = (masked[..., :, None] == masked[..., None, :]) & (masked[..., None, :] != big)
        freq = eq.sum(axis=-1)
        best = freq.max(axis=-1, keepdims=True)
        cand = np.where((freq == best) & (masked != big), masked, big).min(axis=-1)
        out = np.where(cand == big, NO_RECORD, cand)
    else:
        out = _block_mode(blocks)
    return ts.replace(locations=out, grid=grid)


def coarsen_temporal(ts: TrajectorySet, factor: int) -> AggregateSeries:
    """Aggregate on a coarser grid, re-derived from individual trajectories.

    Summing fine counts would count each user ``factor`` times per slot, so
    the coarse series is rebuilt from the modal tower of every coarse slot.
    """
    return aggregate(interpolate_set(resample(ts, factor)))


def perturb_records(ts: TrajectorySet, noise: PerturbConfig) -> TrajectorySet:
    """Move each record, independently with probability ``p``, to a uniformly
    chosen *other* tower.  Randomness is keyed on (seed, user id)."""
    noise.validate()
    m = len(ts.tower_map)
    if noise.p == 0.0 or m == 1:
        return ts
    idx = ts.tower_map.index_of(np.where(ts.locations == NO_RECORD, ts.tower_map.ids[0], ts.locations))
    out = ts.locations.copy()
    T = ts.grid.T
    for i, uid in enumerate(ts.user_ids):
        rng = np.random.default_rng([noise.seed, _PERTURB_STREAM, int(uid)])
        move = rng.random(T) < noise.p
        k = rng.integers(0, m - 1, size=T)
        k = np.where(k >= idx[i], k + 1, k)
        move &= ts.locations[i] != NO_RECORD
        out[i, move] = ts.tower_map.ids[k[move]]
    return ts.replace(locations=out)


def perturb(ts: TrajectorySet, noise: PerturbConfig) -> AggregateSeries:
    """Aggregate of the record-level perturbed trajectories."""
    return aggregate(interpolate_set(perturb_records(ts, noise)))


def drop_records(ts: TrajectorySet, prob: float, seed: int = 0) -> TrajectorySet:
    """Blank out records with probability ``prob`` (keeps one record per user)."""
    if not 0.0 <= prob <= 1.0:
        raise DataError(f"drop probability {prob} outside [0, 1]")
    out = ts.locations.copy()
    for i, uid in enumerate(ts.user_ids):
        rng = np.random.default_rng([seed, _DROP_STREAM, int(uid)])
        drop = rng.random(ts.grid.T) < prob
        if drop.all():
            drop[rng.integers(ts.grid.T)] = False
        out[i, drop] = NO_RECORD
    return ts.replace(locations=out)


def publish(ts: TrajectorySet, level: str = "sector", factor: int = 1,
            noise: PerturbConfig = None) -> AggregateSeries:
    """The full release: perturb, re-slot, interpolate, count, coarsen."""
    if noise is not None:
        ts = perturb_records(ts, noise)
    ts = interpolate_set(resample(ts, factor))
    return coarsen_spatial(aggregate(ts), level)
