import numpy as np
import pytest

from ashrecovery import NO_RECORD, DataError, TimeGrid, TrajectorySet
from ashrecovery.aggregation import aggregate
from ashrecovery.evaluation import (accuracy, error_cdf, evaluate, pair_greedy, recovery_error,
                                    regularity_stats, similarity, stage_accuracy, top_k_keys, uniqueness,
                                    uniqueness_curve, velocity_errors)
from ashrecovery.recovery import RecoveredTrajectorySet, recover

from conftest import line_map, stationary


def test_accuracy_examples():
    assert accuracy([[1, 2]], [[1, 2]], [0]) == 1.0
    assert accuracy([[3, 3, 3]], [[4, 4, 4]], [0]) == 0.0
    assert accuracy([[1, 2, 3, 4]], [[1, 2, 3, 9]], [0]) == 0.75


def test_accuracy_uses_pairing():
    z = [[1, 1], [2, 2]]
    y = [[2, 2], [1, 1]]
    assert accuracy(z, y, [1, 0]) == 1.0
    assert accuracy(z, y, [0, 1]) == 0.0


def test_similarity_counts_shared_slots():
    s = similarity([[1, 2, 3], [1, 1, 1]], [[1, 2, 0], [1, 1, 1]]).toarray()
    assert s.tolist() == [[2, 1], [1, 3]]


def test_pair_greedy_order_and_ties():
    # recovered 0 takes truth 1 (3 matches), recovered 1 is left with truth 0
    z = [[1, 1, 1], [1, 1, 2]]
    y = [[1, 1, 2], [1, 1, 1]]
    assert list(pair_greedy(z, y)) == [1, 0]
    # equal similarity -> smaller truth index
    assert list(pair_greedy([[5, 5]], [[5, 5]])) == [0]
    assert list(pair_greedy([[0, 0], [0, 0]], [[1, 1], [1, 1]])) == [0, 1]


def test_error_cdf_perfect_is_unit_step():
    cdf = error_cdf(np.zeros(10))
    assert all(f == 1.0 for _, f in cdf)


def test_error_cdf_jump_at_500():
    errors = np.array([0.0, 0.0, 0.0, 500.0])
    cdf = dict(error_cdf(errors))
    assert cdf[200.0] == 0.75 and cdf[500.0] == 1.0


def test_recovery_error_meters():
    tm = line_map(3)
    e = recovery_error([[0, 2]], [[0, 1]], [0], tm)
    assert e.tolist() == [[0.0, 1000.0]]


def test_top_k_keys_ordered():
    keys = top_k_keys(np.array([[3, 3, 1, 2, 2, 5]]), 3)
    assert keys.tolist() == [[2, 3, 1]]
    assert top_k_keys(np.array([[4, 4]]), 2).tolist() == [[4, NO_RECORD]]


@pytest.mark.parametrize("strategy", ["top", "rand", "cont"])
def test_uniqueness_extremes(strategy):
    same = np.tile([[1, 2, 3, 4]], (5, 1))
    assert uniqueness(same, 2, strategy) == 0.0
    distinct = np.repeat(np.arange(5)[:, None], 4, axis=1)
    assert uniqueness(distinct, 1, strategy) == 1.0


def test_uniqueness_monotone_in_k(population):
    for strategy in ("top", "rand", "cont"):
        curve = uniqueness_curve(population.locations, strategy=strategy)
        vals = [curve[k] for k in sorted(curve)]
        assert all(b >= a for a, b in zip(vals, vals[1:])), strategy


def test_uniqueness_bad_args():
    with pytest.raises(DataError):
        uniqueness([[1]], 0)
    with pytest.raises(DataError):
        uniqueness([[1]], 1, "mixed")


def test_regularity_of_stationary_users():
    r = regularity_stats(stationary([0, 3, 1], num_days=2))
    assert r.top_k_fraction[1] == 1.0
    assert r.night_location_counts == {1: 1.0}
    assert (r.velocity_error == 0).all()
    assert (r.gain_same == 0).all()


def test_velocity_errors_constant_speed():
    g = TimeGrid(21600, 1)  # slots 0..3; slot 0 is night
    ts = TrajectorySet(g, line_map(4), [0], [[0, 1, 2, 3]])
    assert velocity_errors(ts).tolist() == [0.0, 0.0]


def test_stage_accuracy_per_day():
    truth = stationary([0, 1], num_days=2)
    loc = truth.locations.copy()
    loc[:, 24:] = loc[::-1, 24:]  # days unchained: fine per day, wrong when linked
    day = RecoveredTrajectorySet(truth.grid, truth.tower_map, loc, "day")
    full = RecoveredTrajectorySet(truth.grid, truth.tower_map, loc, "full")
    assert stage_accuracy(day, truth)[0] == 1.0
    assert stage_accuracy(full, truth)[0] == 0.5


def test_evaluate_report_rows():
    truth = stationary([2, 0, 1], num_days=2)
    rep = evaluate(recover(aggregate(truth)), truth, ks=(1, 2))
    assert rep.accuracy == {"#1": 1.0, "#2": 1.0, "#3": 1.0}
    assert set(rep.uniqueness) == {"#3", "truth"}
    rows = rep.rows()
    assert ("accuracy", "#3", "", 1.0) in rows
    assert all(len(r) == 4 for r in rows)
