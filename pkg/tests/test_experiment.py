import pytest

from ashrecovery import DataError, GeneratorConfig
from ashrecovery.experiment import (ExperimentConfig, RunPoint, ground_truth_view, is_monotone, run_point,
                                    run_sweep, summary_rows)

SMALL = GeneratorConfig(num_users=40, num_towers=600, world_size=15000.0, num_days=2)


def test_points_follow_axis():
    cfg = ExperimentConfig(sweep="temporal", values=(30, 90))
    assert [p.slot_minutes for p in cfg.points()] == [30, 90]
    assert ExperimentConfig().points() == [RunPoint()]


@pytest.mark.parametrize("kwargs", [dict(sweep="colour", values=(1,)), dict(sweep="users"),
                                    dict(sweep="temporal", values=(45,)),
                                    dict(sweep="spatial", values=("city",)),
                                    dict(sweep="perturb", values=(2.0,)), dict(workers=0)])
def test_invalid(kwargs):
    with pytest.raises(DataError):
        ExperimentConfig(generator=SMALL, **kwargs).validate()


def test_label():
    assert RunPoint("district", 90, 0.1, 500).label() == "district_90min_p0.1_n500"


def test_run_point_coarse_view(population):
    r = run_point(population, RunPoint("base_station", 90, 0.0, 50), ks=(2,))
    assert r.truth == ground_truth_view(population.subset(range(50)), "base_station", 3)
    assert r.published.grid.slot_seconds == 5400
    assert set(r.report.accuracy) == {"#1", "#2", "#3"}
    assert r.report.extra["runtime_s"] > 0


def test_run_point_needs_enough_users(population):
    with pytest.raises(DataError):
        run_point(population, RunPoint(num_users=population.N + 1))


def test_sweep_shares_population_and_is_repeatable():
    cfg = ExperimentConfig(generator=SMALL, sweep="users", values=(10, 40), ks=(1,))
    a, b = run_sweep(cfg), run_sweep(cfg)
    assert [p.num_users for p, _ in a] == [10, 40]
    assert [r.accuracy for _, r in a] == [r.accuracy for _, r in b]
    rows = summary_rows(a)
    assert ("accuracy", "#3", "sector_30min_p0_n10", a[0][1].accuracy["#3"]) in rows


def test_parallel_sweep_matches_sequential():
    cfg = ExperimentConfig(generator=SMALL, sweep="perturb", values=(0.0, 0.2), ks=(1,))
    seq = run_sweep(cfg)
    par = run_sweep(ExperimentConfig(generator=SMALL, sweep="perturb", values=(0.0, 0.2), ks=(1,), workers=2))
    assert [r.accuracy for _, r in seq] == [r.accuracy for _, r in par]


def test_is_monotone():
    assert is_monotone([1, 1, 2], True) and not is_monotone([1, 0], True)
    assert is_monotone([3, 2, 2], False)
