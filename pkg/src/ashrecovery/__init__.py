"""Trajectory recovery from aggregated mobility counts."""

from .model import NO_RECORD, DataError, TimeGrid, Tower, TowerMap, Trajectory, TrajectorySet
from .generator import GeneratorConfig, build_tower_map, generate_population

__version__ = "0.1.0"
