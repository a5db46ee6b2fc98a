import math

import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy import special

from rangeloc.control import (
    MoveGrid,
    SchedulerMode,
    candidate_positions,
    ellipsoid,
    ellipsoid_volume,
    greedy_move,
    log_volume_from_information,
    own_information,
    select_movers,
    unit_ball_factor,
)
from rangeloc.sensing import make_rng


@pytest.mark.parametrize("m", range(1, 8))
def test_unit_ball_against_gamma(m):
    assert unit_ball_factor(m) == pytest.approx(math.pi ** (m / 2) / special.gamma(m / 2 + 1), rel=1e-12)


def test_unit_half_axes():
    assert unit_ball_factor(2) == pytest.approx(math.pi)
    assert unit_ball_factor(3) == pytest.approx(4 * math.pi / 3)


@given(st.floats(0.01, 100), st.integers(2, 3))
def test_volume_homogeneity(c, m):
    G = np.random.default_rng(m).standard_normal((m, m))
    cov = G @ G.T + np.eye(m)
    assert ellipsoid_volume(c * cov) == pytest.approx(c ** (m / 2) * ellipsoid_volume(cov), rel=1e-10)


@given(st.integers(0, 1000))
def test_log_volume_matches_eigen_path(seed):
    G = np.random.default_rng(seed).standard_normal((3, 3))
    P = G @ G.T + 0.5 * np.eye(3)
    assert math.exp(log_volume_from_information(P)) == pytest.approx(ellipsoid_volume(np.linalg.inv(P)), rel=1e-9)


def test_half_axes_sorted_with_eigenvalues():
    e = ellipsoid(np.diag([4.0, 1.0]), 0.95)
    np.testing.assert_allclose(e.half_axes, np.sqrt(e.chi2 * np.array([1.0, 4.0])))


def test_non_symmetric_rejected():
    with pytest.raises(ValueError):
        ellipsoid(np.array([[1.0, 0.5], [0.0, 1.0]]))


def test_singular_information_has_infinite_volume():
    assert log_volume_from_information(np.zeros((3, 3))) == math.inf


@pytest.mark.parametrize("pos,count", [((5, 5), 9), ((0, 0), 4), ((0, 5), 6), ((10, 10), 4)])
def test_candidate_counts(pos, count):
    assert len(candidate_positions(pos, MoveGrid(1.0, (0, 0), (10, 10)))) == count


def test_candidates_in_scan_order():
    c = candidate_positions((5, 5), MoveGrid(1.0, (0, 0), (10, 10)))
    assert [tuple(x) for x in c[:3]] == [(4, 4), (4, 5), (4, 6)]


def _network_info(pos, p_hat, others, scale=0.001):
    return sum(own_information(s, p_hat, scale) for s in [pos, *others])


def test_single_candidate_stays():
    grid = MoveGrid(1.0, (0, 0), (0, 0))
    P = _network_info((0, 0), (5, 5), [(9, 0), (0, 9)])
    dec = greedy_move(0, (0, 0), [P], [(5, 5)], grid, 0.001)
    np.testing.assert_array_equal(dec.chosen_pos, (0, 0))
    assert dec.new_volume == dec.old_volume


def test_swap_identity():
    P = _network_info((2, 3), (6, 6), [(9, 1), (1, 8)])
    F_minus = P - own_information((2, 3), (6, 6), 0.001)
    np.testing.assert_allclose(F_minus + own_information((2, 3), (6, 6), 0.001), P, rtol=1e-12)


def test_never_moves_directly_away():
    grid = MoveGrid(1.0, (0, 0), (50, 50))
    target = np.array([40.0, 40.0])
    pos = np.array([10.0, 10.0])
    P = _network_info(pos, target, [(45, 30), (30, 45)])
    dec = greedy_move(0, pos, [P], [target], grid, 0.001)
    assert not np.array_equal(dec.chosen_pos, pos + (-1, -1))
    assert dec.new_volume <= dec.old_volume
    brute = min(v for _, v in dec.evaluated)
    assert dec.new_volume == pytest.approx(brute)


@given(st.integers(0, 500))
def test_greedy_monotone_and_theta_invariant(seed):
    rng = np.random.default_rng(seed)
    grid = MoveGrid(1.0, (0, 0), (10, 10))
    pos = rng.integers(0, 11, 2).astype(float)
    target = rng.uniform(0, 10, 2)
    others = rng.integers(0, 11, (3, 2)).astype(float)
    P = _network_info(pos, target, list(others))
    picks = []
    for theta in (0.5, 0.95, 0.99):
        dec = greedy_move(0, pos, [P], [target], grid, 0.001, theta=theta)
        if dec.flag:
            return
        assert dec.new_volume <= dec.old_volume
        picks.append(tuple(dec.chosen_pos))
    assert len(set(picks)) == 1


def test_singular_information_stays_with_flag():
    dec = greedy_move(0, (1, 1), [np.zeros((3, 3))], [(5, 5)], MoveGrid(1.0, (0, 0), (10, 10)), 0.001)
    assert dec.flag == "singular-information"
    np.testing.assert_array_equal(dec.chosen_pos, (1, 1))


def test_scheduler_modes():
    seq = [select_movers(SchedulerMode.RANDOM_SINGLE, range(4), make_rng(1, 1)) for _ in range(1)]
    assert seq == [select_movers("random_single", range(4), make_rng(1, 1))]
    assert select_movers("sequential_all", [3, 1, 2, 0], make_rng(0)) == [0, 1, 2, 3]
    assert select_movers("random_single", [7], make_rng(0)) == [7]
