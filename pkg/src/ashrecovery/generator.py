"""Synthetic population with home/work anchors.

Each user gets a uniformly drawn home tower and a work tower on another base
station, chosen with weight ``exp(-d / work_distance)``.  A day is laid out as

* night (00:00-06:00): at home, except for handover records on a nearby
  tower (usually a sibling sector of the same mast),
* morning: around home until a per-user departure time,
* commute: straight line towards work at ``commute_speed`` meters per slot,
  snapped to the nearest tower,
* working hours (09:00-18:00): at work, with the same kind of handover
  records around the work tower,
* evening: commute back, then a distance-biased random walk around home.

Departure and return times are fixed per user with a +-1 slot daily jitter,
so trajectories repeat across days while differing between users.
"""

from __future__ import annotations

from dataclasses import dataclass

import numba
import numpy as np
from scipy.spatial import cKDTree

from .model import DataError, TimeGrid, TowerMap, TrajectorySet

WORK_HOURS = (9.0, 18.0)
NIGHT_HOURS = (0.0, 6.0)

_TOWER_STREAM = 0x70
_USER_STREAM = 0x75
_NEIGHBORS = 15
_NEIGHBOR_SCALE = 800.0  # meters, exploration steps
_JITTER_SCALE = 250.0  # meters, off-anchor records of a stationary user
_SECTOR_OFFSET = 200.0  # meters from the base station mast
_BS_PER_DISTRICT = 100
_RETURN_SPREAD = 1.5  # hours after the end of working hours


@dataclass(frozen=True)
class GeneratorConfig:
    num_users: int = 1000
    num_towers: int = 15000
    world_size: float = 100000.0
    night_home_prob: float = 0.85
    work_attachment: float = 0.8
    exploration_prob: float = 0.03
    commute_speed: float = 1000.0
    work_distance: float = 150.0
    num_days: int = 7
    slot_seconds: int = 1800
    seed: int = 0

    def validate(self) -> None:
        for name in ("night_home_prob", "work_attachment", "exploration_prob"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise DataError(f"{name}={v} outside [0, 1]")
        if self.num_users <= 0:
            raise DataError("num_users must be positive")
        if self.num_towers < 2:
            raise DataError("num_towers must be >= 2 to place distinct home and work towers")
        if self.world_size <= 0 or self.commute_speed <= 0 or self.work_distance <= 0:
            raise DataError("world_size, commute_speed and work_distance must be positive")

    @property
    def grid(self) -> TimeGrid:
        return TimeGrid(slot_seconds=self.slot_seconds, num_days=self.num_days)


def build_tower_map(num_towers: int, world_size: float, seed: int) -> TowerMap:
    """Place base stations (2-3 sectors each) uniformly and grid them into
    districts of about 100 base stations."""
    if num_towers < 1:
        raise DataError("num_towers must be positive")
    rng = np.random.default_rng([seed, _TOWER_STREAM])
    sizes = []
    left = num_towers
    while left > 0:
        k = min(left, int(rng.integers(2, 4)))
        sizes.append(k)
        left -= k
    n_bs = len(sizes)
    masts = rng.uniform(0.0, world_size, size=(n_bs, 2))
    g = max(1, int(round(np.sqrt(n_bs / _BS_PER_DISTRICT))))
    cell = np.minimum((masts / world_size * g).astype(np.int64), g - 1)
    district_of_bs = cell[:, 0] * g + cell[:, 1]

    xy, bs_ids = [], []
    azimuth = rng.uniform(0.0, 2 * np.pi, size=n_bs)
    for b, k in enumerate(sizes):
        theta = azimuth[b] + 2 * np.pi * np.arange(k) / k
        off = _SECTOR_OFFSET * np.stack([np.cos(theta), np.sin(theta)], axis=1)
        xy.append(masts[b] + off)
        bs_ids.extend([b] * k)
    xy = np.concatenate(xy)
    bs_ids = np.asarray(bs_ids)
    return TowerMap(np.arange(num_towers), xy, bs_ids, district_of_bs[bs_ids])


def _neighbour_tables(xy: np.ndarray, scale: float):
    """k nearest other towers of every tower with the CDF of weights
    ``exp(-d / scale)``."""
    m = len(xy)
    k = min(_NEIGHBORS, m - 1)
    if k == 0:
        return np.zeros((m, 1), np.int64), np.ones((m, 1))
    dist, idx = cKDTree(xy).query(xy, k=k + 1)
    dist, idx = dist[:, 1:], idx[:, 1:]
    w = np.exp(-(dist - dist[:, :1]) / scale)
    cdf = np.cumsum(w, axis=1)
    cdf /= cdf[:, -1:]
    return idx.astype(np.int64), cdf


@numba.njit(cache=True)
def _pick(nbr, cdf, tower, u):
    row = cdf[tower]
    k = np.searchsorted(row, u)
    if k >= row.shape[0]:
        k = row.shape[0] - 1
    return nbr[tower, k]


@numba.njit(cache=True)
def _simulate(home, work, path, path_len, depart, ret, jitter, u_step, u_pick,
              nbr, cdf, jnbr, jcdf, spd, num_days, night_end, work_start, work_end,
              p_night, p_work, p_explore):
    n = home.shape[0]
    out = np.empty((n, spd * num_days), np.int64)
    for i in range(n):
        h = home[i]
        w = work[i]
        nc = path_len[i]
        cur = h
        for d in range(num_days):
            dep = depart[i] + jitter[i, d, 0]
            dep = max(night_end, min(dep, work_start - nc))
            back = max(work_end, min(ret[i] + jitter[i, d, 1], spd - nc))
            for s in range(spd):
                t = d * spd + s
                us = u_step[i, t]
                up = u_pick[i, t]
                if s < night_end:
                    cur = h if us < p_night else _pick(jnbr, jcdf, h, up)
                elif s < dep:
                    cur = _pick(nbr, cdf, cur, up) if us < p_explore else h
                elif s < dep + nc:
                    cur = path[i, s - dep]
                elif s < work_start:
                    cur = _pick(nbr, cdf, cur, up) if us < p_explore else w
                elif s < work_end:
                    cur = w if us < p_work else _pick(jnbr, jcdf, w, up)
                elif s < back:
                    cur = _pick(nbr, cdf, cur, up) if us < p_explore else w
                elif s < back + nc:
                    cur = path[i, nc - 1 - (s - back)]
                else:
                    cur = _pick(nbr, cdf, cur, up) if us < p_explore else h
                out[i, t] = cur
    return out


def generate_population(config: GeneratorConfig, tower_map: TowerMap = None) -> TrajectorySet:
    """Generate ``config.num_users`` complete trajectories.

    The tower map depends only on (seed, num_towers, world_size), and user
    ``i``'s randomness only on (seed, i), so populations of different sizes
    drawn with one seed share their world and their first users.
    """
    config.validate()
    grid = config.grid
    if tower_map is None:
        tower_map = build_tower_map(config.num_towers, config.world_size, config.seed)
    xy = tower_map.xy
    m = len(tower_map)
    n = config.num_users
    spd = grid.slots_per_day
    T = grid.T
    night = grid.window_slots(*NIGHT_HOURS)
    night_end = int(night[-1]) + 1 if len(night) else 0
    work_start = int(np.ceil(WORK_HOURS[0] * 3600 / grid.slot_seconds))
    work_end = int(np.ceil(WORK_HOURS[1] * 3600 / grid.slot_seconds))
    max_commute = max(0, work_start - night_end - 1)
    dep_lo = min(night_end + 1, work_start)
    dep_hi = max(dep_lo + 1, work_start)
    ret_hi = min(spd, work_end + int(_RETURN_SPREAD * 3600 / grid.slot_seconds)) + 1
    nbr, cdf = _neighbour_tables(xy, _NEIGHBOR_SCALE)
    jnbr, jcdf = _neighbour_tables(xy, _JITTER_SCALE)
    tree = cKDTree(xy)
    bs = tower_map.base_station_ids

    home = np.empty(n, np.int64)
    work = np.empty(n, np.int64)
    depart = np.empty(n, np.int64)
    ret = np.empty(n, np.int64)
    jitter = np.empty((n, grid.num_days, 2), np.int64)
    u_step = np.empty((n, T))
    u_pick = np.empty((n, T))
    for i in range(n):
        rng = np.random.default_rng([config.seed, _USER_STREAM, i])
        h = int(rng.integers(m))
        d = np.hypot(*(xy - xy[h]).T)
        w_prob = np.exp(-d / config.work_distance)
        w_prob[bs == bs[h]] = 0.0
        if w_prob.sum() == 0.0:
            w_prob = np.ones(m)
            w_prob[h] = 0.0
        home[i] = h
        work[i] = rng.choice(m, p=w_prob / w_prob.sum())
        depart[i] = int(rng.integers(dep_lo, dep_hi))
        ret[i] = int(rng.integers(work_end, ret_hi))
        jitter[i] = rng.integers(-1, 2, size=(grid.num_days, 2))
        u_step[i] = rng.random(T)
        u_pick[i] = rng.random(T)

    dist = np.hypot(*(xy[work] - xy[home]).T)
    path_len = np.minimum(np.ceil(dist / config.commute_speed).astype(np.int64) - 1, max_commute)
    path_len = np.maximum(path_len, 0)
    width = max(1, int(path_len.max()))
    path = np.zeros((n, width), np.int64)
    for i in np.nonzero(path_len)[0]:
        k = path_len[i]
        frac = np.arange(1, k + 1) / (k + 1)
        pts = xy[home[i]] + frac[:, None] * (xy[work[i]] - xy[home[i]])
        path[i, :k] = tree.query(pts)[1]

    idx = _simulate(home, work, path, path_len, depart, ret, jitter, u_step, u_pick,
                    nbr, cdf, jnbr, jcdf, spd, grid.num_days, night_end, work_start, work_end,
                    config.night_home_prob, config.work_attachment, config.exploration_prob)
    return TrajectorySet(grid, tower_map, np.arange(n), tower_map.ids[idx], validate=False)


def separable_population(num_users: int, num_days: int = 7, slot_seconds: int = 1800,
                         route_towers: int = 6, spacing: float = 1000.0,
                         row_gap: float = 5000.0) -> TrajectorySet:
    """Commuters on parallel, far apart straight routes of private towers.

    User ``i`` lives at the west end of row ``i`` and works at its east end,
    moving one tower per slot.  Homes, workplaces and routes are pairwise
    disjoint and every day repeats the same schedule, so the attack can (and
    should) recover the population exactly.
    """
    if num_users < 1 or route_towers < 2:
        raise DataError("need at least one user and two towers per route")
    grid = TimeGrid(slot_seconds=slot_seconds, num_days=num_days)
    spd = grid.slots_per_day
    n, k = num_users, route_towers
    x = np.tile(np.arange(k) * spacing, n)
    y = np.repeat(np.arange(n) * row_gap, k)
    tower_map = TowerMap(np.arange(n * k), np.stack([x, y], axis=1),
                         np.arange(n * k), np.repeat(np.arange(n), k))
    night_end = int(grid.window_slots(*NIGHT_HOURS)[-1]) + 1
    work_end = int(np.ceil(WORK_HOURS[1] * 3600 / slot_seconds))
    if night_end + 2 + 2 * k > work_end or work_end + 2 + k > spd:
        raise DataError(f"{slot_seconds}s slots leave no room for a {k}-tower commute")
    day = np.empty((n, spd), np.int64)
    for i in range(n):
        dep = night_end + i % 3
        back = work_end + i % 3
        pos = np.zeros(spd, np.int64)
        pos[dep:dep + k] = np.arange(k)
        pos[dep + k:back] = k - 1
        pos[back:back + k] = np.arange(k)[::-1]
        day[i] = i * k + pos
    return TrajectorySet(grid, tower_map, np.arange(n), np.tile(day, num_days))
