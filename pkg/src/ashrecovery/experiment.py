"""One attack run end to end, and sweeps over one factor.

A run publishes the ground truth at a chosen spatial level, temporal factor
and perturbation strength, attacks the published series and scores the
result against the ground truth seen at the same resolution.  Sweeps share
one base population so that only the swept factor changes between points.
"""

from __future__ import annotations

import logging
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from typing import List, Optional, Sequence, Tuple

from .aggregation import AggregateSeries, PerturbConfig, publish, resample
from .evaluation import MetricsReport, evaluate
from .generator import GeneratorConfig, generate_population
from .model import LEVELS, DataError, TrajectorySet
from .recovery import RecoveryConfig, RecoveryResult, check_repartition, recover

log = logging.getLogger(__name__)

SWEEP_AXES = ("none", "spatial", "temporal", "users", "perturb")


@dataclass(frozen=True)
class ExperimentConfig:
    generator: GeneratorConfig = GeneratorConfig()
    recovery: RecoveryConfig = RecoveryConfig()
    level: str = "sector"
    slot_minutes: int = 30
    perturb: float = 0.0
    sweep: str = "none"
    values: Tuple = ()
    ks: Tuple[int, ...] = (1, 2, 3, 4, 5)
    workers: int = 1
    out_dir: str = "out"

    def validate(self) -> None:
        self.generator.validate()
        self.recovery.validate()
        if self.sweep not in SWEEP_AXES:
            raise DataError(f"unknown sweep axis {self.sweep!r}; expected one of {SWEEP_AXES}")
        if self.sweep != "none" and not self.values:
            raise DataError(f"sweep over {self.sweep} needs values")
        for point in self.points():
            point.check_point(self.generator.slot_seconds)
        if self.workers < 1:
            raise DataError("workers must be >= 1")

    def points(self) -> List["RunPoint"]:
        base = RunPoint(self.level, self.slot_minutes, self.perturb, self.generator.num_users)
        if self.sweep == "none":
            return [base]
        field_name = {"spatial": "level", "temporal": "slot_minutes",
                      "users": "num_users", "perturb": "perturb"}[self.sweep]
        return [replace(base, **{field_name: v}) for v in self.values]


@dataclass(frozen=True)
class RunPoint:
    level: str = "sector"
    slot_minutes: int = 30
    perturb: float = 0.0
    num_users: int = 1000

    def check_point(self, base_slot_seconds: int) -> None:
        if self.level not in LEVELS:
            raise DataError(f"unknown level {self.level!r}; expected one of {LEVELS}")
        secs = int(self.slot_minutes) * 60
        if secs <= 0 or secs % base_slot_seconds or 86400 % secs:
            raise DataError(f"{self.slot_minutes} min is not a multiple of the "
                            f"{base_slot_seconds // 60} min base slot dividing one day")
        if not 0.0 <= self.perturb <= 1.0:
            raise DataError(f"displacement probability {self.perturb} outside [0, 1]")
        if self.num_users < 1:
            raise DataError("num_users must be positive")

    def label(self) -> str:
        return f"{self.level}_{self.slot_minutes}min_p{self.perturb:g}_n{self.num_users}"


@dataclass
class RunResult:
    point: RunPoint
    report: MetricsReport
    published: AggregateSeries = field(repr=False)
    recovered: RecoveryResult = field(repr=False)
    truth: TrajectorySet = field(repr=False)
    seconds: float = 0.0


def ground_truth_view(truth: TrajectorySet, level: str, factor: int) -> TrajectorySet:
    """The ground truth at the published resolution (no perturbation)."""
    return resample(truth, factor).at_level(level)


def run_point(truth: TrajectorySet, point: RunPoint, recovery: RecoveryConfig = RecoveryConfig(),
              ks: Sequence[int] = (1, 2, 3, 4, 5), noise_seed: int = 0) -> RunResult:
    point.check_point(truth.grid.slot_seconds)
    t0 = time.perf_counter()
    if point.num_users < truth.N:
        truth = truth.subset(range(point.num_users))
    elif point.num_users > truth.N:
        raise DataError(f"point needs {point.num_users} users, population has {truth.N}")
    factor = point.slot_minutes * 60 // truth.grid.slot_seconds
    noise = PerturbConfig(point.perturb, noise_seed) if point.perturb > 0 else None
    agg = publish(truth, point.level, factor, noise)
    result = recover(agg, recovery)
    for name, rec in result.stages.items():
        bad = check_repartition(rec, agg)
        if bad:
            raise AssertionError(f"stage {name} breaks the published counts at slots {bad[:5]}")
    view = ground_truth_view(truth, point.level, factor)
    report = evaluate(result, view, ks)
    elapsed = time.perf_counter() - t0
    report.extra["runtime_s"] = elapsed
    log.info("%s: accuracy %s (%.1fs)", point.label(), report.accuracy, elapsed)
    return RunResult(point, report, agg, result, view, elapsed)


def _run_task(args):
    cfg, point = args
    truth = base_population(cfg)
    r = run_point(truth, point, cfg.recovery, cfg.ks, cfg.generator.seed)
    # large arrays stay in the worker
    return point, r.report, r.seconds


def base_population(cfg: ExperimentConfig) -> TrajectorySet:
    """The shared population: enough users for the largest sweep point."""
    n = max(p.num_users for p in cfg.points())
    return generate_population(replace(cfg.generator, num_users=n))


def run_sweep(cfg: ExperimentConfig) -> List[Tuple[RunPoint, MetricsReport]]:
    """Run every sweep point; results come back in sweep order."""
    cfg.validate()
    points = cfg.points()
    if cfg.workers == 1 or len(points) == 1:
        truth = base_population(cfg)
        return [(p, run_point(truth, p, cfg.recovery, cfg.ks, cfg.generator.seed).report)
                for p in points]
    with ProcessPoolExecutor(max_workers=cfg.workers) as pool:
        return [(p, rep) for p, rep, _ in pool.map(_run_task, [(cfg, p) for p in points])]


def summary_rows(results) -> List[Tuple[str, str, str, float]]:
    """``metric,stage,param,value`` rows with the sweep point as ``param``."""
    rows = []
    for point, rep in results:
        for stage, a in rep.accuracy.items():
            rows.append(("accuracy", stage, point.label(), a))
        for stage, curve in rep.uniqueness.items():
            if 2 in curve:
                rows.append(("uniqueness_top2", stage, point.label(), curve[2]))
    return rows


def is_monotone(values: Sequence[float], increasing: bool) -> bool:
    pairs = zip(values, values[1:])
    return all(b >= a for a, b in pairs) if increasing else all(b <= a for a, b in pairs)
