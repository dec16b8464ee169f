import itertools

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.optimize import linear_sum_assignment

from ashrecovery.assignment import CostMatrix, brute_force_lsap, prelink, solve_lsap
from ashrecovery.model import DataError


def enumerate_min(c):
    n = len(c)
    return min(sum(c[i][p[i]] for i in range(n)) for p in itertools.permutations(range(n)))


square = st.integers(1, 6).flatmap(
    lambda n: st.lists(st.lists(st.integers(0, 20), min_size=n, max_size=n), min_size=n, max_size=n))


@settings(max_examples=300, deadline=None)
@given(square)
def test_solve_matches_enumeration(c):
    a = solve_lsap(c)
    assert a.total_cost == enumerate_min(c)
    assert sorted(a.perm) == list(range(len(c)))


@settings(max_examples=100, deadline=None)
@given(square)
def test_brute_force_matches_enumeration(c):
    assert brute_force_lsap(c).total_cost == enumerate_min(c)


def test_float_costs_agree_with_scipy():
    rng = np.random.default_rng(3)
    for n in (1, 2, 9, 40, 150):
        c = rng.random((n, n)) * 1e4
        r, k = linear_sum_assignment(c)
        assert solve_lsap(c).total_cost == pytest.approx(c[r, k].sum(), rel=1e-12)


def test_perm_cost_is_reported_total():
    c = np.array([[4.0, 1, 3], [2, 0, 5], [3, 2, 2]])
    a = solve_lsap(c)
    assert a.total_cost == c[np.arange(3), a.perm].sum() == 5.0


def test_all_equal_costs_give_a_permutation():
    a = solve_lsap(np.zeros((50, 50)))
    assert sorted(a.perm) == list(range(50)) and a.total_cost == 0


def test_negative_costs():
    c = -np.array([[1.0, 9], [8, 2]])
    assert solve_lsap(c).total_cost == -17


def test_brute_force_tie_break_is_lexicographic():
    assert list(brute_force_lsap(np.ones((3, 3))).perm) == [0, 1, 2]


def test_cost_matrix_accepted():
    assert solve_lsap(CostMatrix(np.eye(3))).total_cost == 0


@pytest.mark.parametrize("bad", [np.ones((2, 3)), np.zeros((0, 0)), [[0.0, np.nan], [1, 1]],
                                 [[np.inf, 0], [0, 0]]])
def test_invalid_matrices(bad):
    with pytest.raises(DataError):
        solve_lsap(bad)


def test_cost_matrix_must_be_square():
    with pytest.raises(DataError):
        CostMatrix(np.ones((2, 3)))


def test_brute_force_refuses_large():
    with pytest.raises(DataError):
        brute_force_lsap(np.zeros((11, 11)))


XY = np.array([[0.0, 0], [1000, 0], [2000, 0]])


def test_prelink_exact_hits():
    est = XY[[2, 0, 1]]
    pl = prelink(est, [0, 1, 2], XY)
    assert list(pl.rows) == [0, 1, 2] and list(pl.cols) == [2, 0, 1]
    assert len(pl.rest_rows) == 0 and len(pl.rest_cols) == 0


def test_prelink_respects_multiplicity():
    # three estimates on tower 0, only two records there
    est = XY[[0, 0, 0]]
    pl = prelink(est, [0, 0, 2], XY)
    assert list(pl.rows) == [0, 1] and list(pl.cols) == [0, 1]
    assert list(pl.rest_rows) == [2] and list(pl.rest_cols) == [2]


def test_prelink_threshold():
    est = np.array([[10.0, 0], [990, 0]])
    assert len(prelink(est, [0, 1], XY[:2]).rows) == 0
    assert len(prelink(est, [0, 1], XY[:2], threshold=20.0).rows) == 2


def test_prelink_negative_threshold():
    with pytest.raises(DataError):
        prelink(XY, [0, 1, 2], XY, threshold=-1)
