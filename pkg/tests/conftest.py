import numpy as np
import pytest

from ashrecovery import GeneratorConfig, TimeGrid, TowerMap, TrajectorySet, generate_population


def line_map(n, spacing=1000.0):
    """Towers on the x axis, one base station and one district each."""
    xy = np.stack([np.arange(n) * spacing, np.zeros(n)], axis=1)
    return TowerMap(np.arange(n), xy, np.arange(n), np.arange(n))


@pytest.fixture
def small_map():
    # two base stations of two sectors in district 0, one of two in district 1
    xy = [(0, 0), (0, 100), (1000, 0), (1000, 100), (5000, 0), (5000, 100)]
    return TowerMap(np.arange(6), xy, [0, 0, 1, 1, 2, 2], [0, 0, 0, 0, 1, 1])


@pytest.fixture(scope="session")
def population():
    """Default behaviour, reduced size (200 users, 3 days)."""
    return generate_population(GeneratorConfig(num_users=200, num_towers=3000,
                                               world_size=45000.0, num_days=3))


def stationary(towers, num_days=2, slot_seconds=3600, tower_map=None):
    grid = TimeGrid(slot_seconds=slot_seconds, num_days=num_days)
    towers = np.asarray(towers)
    tm = tower_map if tower_map is not None else line_map(int(towers.max()) + 1)
    return TrajectorySet(grid, tm, np.arange(len(towers)), np.repeat(towers[:, None], grid.T, axis=1))
