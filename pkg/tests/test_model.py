import numpy as np
import pytest

from ashrecovery import NO_RECORD, DataError, TimeGrid, Tower, TowerMap, Trajectory, TrajectorySet

from conftest import line_map


def test_tower_map_sorts_by_id():
    tm = TowerMap([5, 2], [(1, 1), (2, 2)], [0, 1], [0, 0])
    assert list(tm.ids) == [2, 5]
    assert list(tm.index_of([5, 2])) == [1, 0]
    assert tm.coords(5).tolist() == [1.0, 1.0]


def test_tower_map_roundtrip_towers():
    tm = line_map(3)
    assert TowerMap.from_towers(tm.towers) == tm
    assert tm.towers[1] == Tower(1, 1000.0, 0.0, 1, 1)


@pytest.mark.parametrize("kwargs", [
    dict(ids=[1, 1], xy=[(0, 0), (1, 1)], base_station_ids=[0, 1], district_ids=[0, 0]),
    dict(ids=[-1], xy=[(0, 0)], base_station_ids=[0], district_ids=[0]),
    dict(ids=[0], xy=[(np.nan, 0)], base_station_ids=[0], district_ids=[0]),
    dict(ids=[0, 1], xy=[(0, 0), (1, 1)], base_station_ids=[0, 0], district_ids=[0, 1]),
    dict(ids=[], xy=np.zeros((0, 2)), base_station_ids=[], district_ids=[]),
])
def test_tower_map_rejects(kwargs):
    with pytest.raises(DataError):
        TowerMap(**kwargs)


def test_unknown_tower_id():
    with pytest.raises(DataError):
        line_map(2).index_of([7])


def test_coarsen_levels(small_map):
    bs = small_map.coarsen("base_station")
    assert list(bs.ids) == [0, 1, 2]
    assert bs.xy[0].tolist() == [0.0, 50.0]
    assert list(bs.district_ids) == [0, 0, 1]
    d = small_map.coarsen("district")
    assert len(d) == 2 and d.xy[0].tolist() == [500.0, 50.0]
    assert small_map.coarsen("sector") is small_map
    assert list(small_map.level_index("base_station")) == [0, 0, 1, 1, 2, 2]
    with pytest.raises(DataError):
        small_map.coarsen("city")


def test_time_grid():
    g = TimeGrid(1800, 2)
    assert g.slots_per_day == 48 and g.T == 96
    assert list(g.night_slots()) == list(range(12))
    assert g.day_slice(1) == slice(48, 96)
    assert g.coarsen(3).slot_seconds == 5400
    with pytest.raises(DataError):
        TimeGrid(7000)
    with pytest.raises(DataError):
        g.coarsen(5)


def test_trajectory_set_validation():
    g = TimeGrid(43200, 1)
    tm = line_map(3)
    with pytest.raises(DataError):
        TrajectorySet(g, tm, [0], [[0, 9]])
    with pytest.raises(DataError):
        TrajectorySet(g, tm, [0, 0], [[0, 1], [1, 2]])
    with pytest.raises(DataError):
        TrajectorySet(g, tm, [0], [[0, 1, 2]])
    ts = TrajectorySet(g, tm, [4, 2], [[0, NO_RECORD], [1, 2]])
    assert ts.has_gaps()
    assert ts.trajectories[0] == Trajectory(4, np.array([0, NO_RECORD]))
    with pytest.raises(DataError):
        ts.indices()


def test_subset_and_at_level(small_map):
    g = TimeGrid(43200, 1)
    ts = TrajectorySet(g, small_map, [0, 1, 2], [[0, 1], [2, 4], [5, 3]])
    assert list(ts.subset([2, 0]).user_ids) == [2, 0]
    lv = ts.at_level("base_station")
    assert lv.locations.tolist() == [[0, 0], [1, 2], [2, 1]]
    assert lv.at_level("sector") is lv
    assert ts.at_level("district").locations.tolist() == [[0, 0], [0, 1], [1, 0]]


def test_arrays_are_read_only():
    ts = TrajectorySet(TimeGrid(43200, 1), line_map(2), [0], [[0, 1]])
    with pytest.raises(ValueError):
        ts.locations[0, 0] = 1
