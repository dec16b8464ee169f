"""Domain types shared by every stage of the pipeline.

Locations are cellular towers placed on a planar grid measured in meters.
Trajectories are stored as a dense ``(N, T)`` integer array of tower ids,
one row per user and one column per time slot.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Dict, Iterator, Optional, Sequence

import numpy as np

NO_RECORD = -1
"""Reserved tower id marking a slot without any record."""

SECONDS_PER_DAY = 86400
LEVELS = ("sector", "base_station", "district")


class DataError(ValueError):
    """Raised when input data violates a structural contract."""


@dataclass(frozen=True)
class Tower:
    id: int
    x: float
    y: float
    base_station_id: int
    district_id: int


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.ascontiguousarray(a)
    a.setflags(write=False)
    return a


class TowerMap:
    """Set of towers with a sector -> base station -> district hierarchy.

    Towers are kept sorted by id, so a tower's *index* (its row in
    :attr:`xy`) is also its rank among ids.  Most of the numerical code works
    on indices and converts back to ids at the boundary.
    """

    def __init__(self, ids, xy, base_station_ids, district_ids):
        ids = np.asarray(ids, dtype=np.int64)
        xy = np.asarray(xy, dtype=np.float64).reshape(-1, 2)
        bs = np.asarray(base_station_ids, dtype=np.int64)
        dist = np.asarray(district_ids, dtype=np.int64)
        if not (len(ids) == len(xy) == len(bs) == len(dist)):
            raise DataError("tower columns have different lengths")
        if len(ids) == 0:
            raise DataError("tower map is empty")
        if (ids < 0).any():
            raise DataError(f"tower ids must be non-negative, got {int(ids.min())}")
        if not np.isfinite(xy).all():
            raise DataError("tower coordinates must be finite")
        order = np.argsort(ids, kind="stable")
        ids, xy, bs, dist = ids[order], xy[order], bs[order], dist[order]
        dup = np.nonzero(np.diff(ids) == 0)[0]
        if len(dup):
            raise DataError(f"duplicate tower id {int(ids[dup[0]])}")
        # a base station must sit inside a single district
        pairs = np.unique(np.stack([bs, dist], axis=1), axis=0)
        if len(np.unique(pairs[:, 0])) != len(pairs):
            raise DataError("a base station is split across districts")
        self.ids = _frozen(ids)
        self.xy = _frozen(xy)
        self.base_station_ids = _frozen(bs)
        self.district_ids = _frozen(dist)

    @classmethod
    def from_towers(cls, towers: Sequence[Tower]) -> "TowerMap":
        return cls(
            [t.id for t in towers],
            [(t.x, t.y) for t in towers],
            [t.base_station_id for t in towers],
            [t.district_id for t in towers],
        )

    def __len__(self) -> int:
        return len(self.ids)

    def __eq__(self, other) -> bool:
        if not isinstance(other, TowerMap):
            return NotImplemented
        return (
            np.array_equal(self.ids, other.ids)
            and np.array_equal(self.xy, other.xy)
            and np.array_equal(self.base_station_ids, other.base_station_ids)
            and np.array_equal(self.district_ids, other.district_ids)
        )

    @property
    def towers(self) -> list:
        return [
            Tower(int(i), float(x), float(y), int(b), int(d))
            for i, (x, y), b, d in zip(self.ids, self.xy, self.base_station_ids, self.district_ids)
        ]

    @property
    def levels(self) -> tuple:
        return LEVELS

    def contains(self, tower_ids) -> np.ndarray:
        tower_ids = np.asarray(tower_ids, dtype=np.int64)
        pos = np.searchsorted(self.ids, tower_ids)
        pos = np.clip(pos, 0, len(self.ids) - 1)
        return self.ids[pos] == tower_ids

    def index_of(self, tower_ids) -> np.ndarray:
        """Map tower ids to row indices; raises on unknown ids."""
        tower_ids = np.asarray(tower_ids, dtype=np.int64)
        ok = self.contains(tower_ids)
        if not ok.all():
            bad = tower_ids[~ok].ravel()[0]
            raise DataError(f"unknown tower id {int(bad)}")
        return np.searchsorted(self.ids, tower_ids)

    def coords(self, tower_ids) -> np.ndarray:
        return self.xy[self.index_of(tower_ids)]

    def group_ids(self, level: str) -> np.ndarray:
        """Group id of every tower (in index order) at ``level``."""
        if level == "sector":
            return self.ids
        if level == "base_station":
            return self.base_station_ids
        if level == "district":
            return self.district_ids
        raise DataError(f"unknown level {level!r}; expected one of {LEVELS}")

    def group_centroids(self, level: str) -> Dict[int, np.ndarray]:
        groups = self.group_ids(level)
        uniq, inv = np.unique(groups, return_inverse=True)
        sums = np.zeros((len(uniq), 2))
        np.add.at(sums, inv, self.xy)
        counts = np.bincount(inv, minlength=len(uniq))
        cent = sums / counts[:, None]
        return {int(g): cent[k] for k, g in enumerate(uniq)}

    def coarsen(self, level: str) -> "TowerMap":
        """Tower map whose locations are the groups at ``level``.

        Each group becomes a tower positioned at the mean of its members;
        its parents in the hierarchy are inherited.
        """
        if level == "sector":
            return self
        groups = self.group_ids(level)
        uniq, first, inv = np.unique(groups, return_index=True, return_inverse=True)
        sums = np.zeros((len(uniq), 2))
        np.add.at(sums, inv, self.xy)
        cent = sums / np.bincount(inv, minlength=len(uniq))[:, None]
        if level == "base_station":
            return TowerMap(uniq, cent, uniq, self.district_ids[first])
        return TowerMap(uniq, cent, uniq, uniq)

    def level_index(self, level: str) -> np.ndarray:
        """For every tower index, the index of its group in ``coarsen(level)``."""
        groups = self.group_ids(level)
        return np.unique(groups, return_inverse=True)[1].astype(np.int64)


@dataclass(frozen=True)
class TimeGrid:
    """Uniform slot grid starting at local midnight."""

    slot_seconds: int = 1800
    num_days: int = 7
    start: int = 0

    def __post_init__(self):
        if self.slot_seconds <= 0 or SECONDS_PER_DAY % self.slot_seconds:
            raise DataError(f"slot_seconds={self.slot_seconds} must divide {SECONDS_PER_DAY}")
        if self.num_days <= 0:
            raise DataError("num_days must be positive")

    @property
    def slots_per_day(self) -> int:
        return SECONDS_PER_DAY // self.slot_seconds

    @property
    def T(self) -> int:
        return self.slots_per_day * self.num_days

    def time_of_day(self, slot) -> np.ndarray:
        return (np.asarray(slot) % self.slots_per_day) * self.slot_seconds

    def window_slots(self, start_hour: float, end_hour: float) -> np.ndarray:
        """Slot-of-day indices whose start time falls in ``[start_hour, end_hour)``."""
        tod = np.arange(self.slots_per_day) * self.slot_seconds
        return np.nonzero((tod >= start_hour * 3600) & (tod < end_hour * 3600))[0]

    def night_slots(self, window=(0.0, 6.0)) -> np.ndarray:
        return self.window_slots(*window)

    def day_slice(self, day: int) -> slice:
        return slice(day * self.slots_per_day, (day + 1) * self.slots_per_day)

    def coarsen(self, factor: int) -> "TimeGrid":
        if factor <= 0 or self.slots_per_day % factor:
            raise DataError(f"factor {factor} does not divide {self.slots_per_day} slots per day")
        return TimeGrid(self.slot_seconds * factor, self.num_days, self.start)


@dataclass(frozen=True)
class Trajectory:
    user_id: int
    locations: np.ndarray = field(compare=False)

    def __eq__(self, other) -> bool:
        if not isinstance(other, Trajectory):
            return NotImplemented
        return self.user_id == other.user_id and np.array_equal(self.locations, other.locations)

    def has_gaps(self) -> bool:
        return bool((np.asarray(self.locations) == NO_RECORD).any())


class TrajectorySet:
    """N trajectories on a shared grid and tower map."""

    def __init__(self, grid: TimeGrid, tower_map: TowerMap, user_ids, locations,
                 validate: bool = True):
        locations = np.asarray(locations, dtype=np.int64)
        if locations.ndim != 2:
            raise DataError("locations must be a 2-D (users x slots) array")
        user_ids = np.asarray(user_ids, dtype=np.int64)
        if len(user_ids) != locations.shape[0]:
            raise DataError("user_ids and locations disagree on N")
        if locations.shape[1] != grid.T:
            raise DataError(f"trajectory length {locations.shape[1]} != T={grid.T}")
        if validate:
            if len(np.unique(user_ids)) != len(user_ids):
                raise DataError("duplicate user ids")
            known = locations[locations != NO_RECORD]
            if known.size:
                ok = tower_map.contains(known)
                if not ok.all():
                    raise DataError(f"unknown tower id {int(known[~ok][0])}")
        self.grid = grid
        self.tower_map = tower_map
        self.user_ids = _frozen(user_ids)
        self.locations = _frozen(locations)

    def __len__(self) -> int:
        return self.locations.shape[0]

    @property
    def N(self) -> int:
        return self.locations.shape[0]

    def __iter__(self) -> Iterator[Trajectory]:
        return iter(self.trajectories)

    @property
    def trajectories(self) -> list:
        return [Trajectory(int(u), row) for u, row in zip(self.user_ids, self.locations)]

    def __eq__(self, other) -> bool:
        if not isinstance(other, TrajectorySet):
            return NotImplemented
        return (
            self.grid == other.grid
            and self.tower_map == other.tower_map
            and np.array_equal(self.user_ids, other.user_ids)
            and np.array_equal(self.locations, other.locations)
        )

    def has_gaps(self) -> bool:
        return bool((self.locations == NO_RECORD).any())

    def indices(self) -> np.ndarray:
        """Locations as tower indices (requires no gaps)."""
        if self.has_gaps():
            raise DataError("trajectory set still contains no-record slots")
        return self.tower_map.index_of(self.locations)

    def replace(self, locations=None, user_ids=None, grid: Optional[TimeGrid] = None,
                tower_map: Optional[TowerMap] = None) -> "TrajectorySet":
        return TrajectorySet(
            grid or self.grid,
            tower_map or self.tower_map,
            self.user_ids if user_ids is None else user_ids,
            self.locations if locations is None else locations,
            validate=False,
        )

    def subset(self, rows) -> "TrajectorySet":
        rows = np.asarray(rows)
        return self.replace(locations=self.locations[rows], user_ids=self.user_ids[rows])

    def at_level(self, level: str) -> "TrajectorySet":
        """Relabel every location with its group at ``level``."""
        if level == "sector":
            return self
        coarse = self.tower_map.coarsen(level)
        groups = self.tower_map.group_ids(level)
        return TrajectorySet(self.grid, coarse, self.user_ids, groups[self.indices()], validate=False)
