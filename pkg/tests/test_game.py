import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from sbw.game import (
    DegenerateProfileError,
    GameConfig,
    GameError,
    StrategyProfile,
    contribution_of,
    leader_probability,
    random_game,
    utility,
    utility_gradient,
    utility_second_derivative,
)

from .conftest import direct_utility


def game(costs, caps, reward):
    return GameConfig.build(costs, caps, reward)


# -- types -----------------------------------------------------------------


def test_config_validation():
    with pytest.raises(GameError):
        game([[1.0, 0.0]], 10, 100)
    with pytest.raises(GameError):
        game([[1.0]], -1, 100)
    with pytest.raises(GameError):
        game([[1.0]], 10, 0)
    with pytest.raises(GameError):
        GameConfig(2, 1, 100.0, np.array([1.0]), np.ones((1, 1)))


def test_config_is_immutable():
    cfg = random_game(3)
    with pytest.raises(ValueError):
        cfg.costs[0, 0] = 5.0
    with pytest.raises(AttributeError):
        cfg.block_reward = 1.0


def test_profile_feasibility():
    cfg = game(np.ones((2, 2)), [10, 5], 100)
    assert StrategyProfile(np.array([[5.0, 2.0], [5.0, 3.0]])).is_feasible(cfg)
    assert not StrategyProfile(np.array([[5.0, 2.0], [5.0, 3.1]])).is_feasible(cfg)
    with pytest.raises(GameError):
        StrategyProfile(np.array([[-1.0, 0.0]]))


def test_random_game_is_seeded():
    a, b = random_game(7), random_game(7)
    assert np.array_equal(a.costs, b.costs)
    assert not np.array_equal(a.costs, random_game(8).costs)
    assert a.costs.min() >= 1.0 and a.costs.max() < 2.0


# -- leader probability ----------------------------------------------------


@pytest.mark.parametrize(
    "stakes, expected",
    [([1, 1, 1, 1], [0.25] * 4), ([2, 1, 1], [0.5, 0.25, 0.25]), ([0, 5], [0.0, 1.0])],
)
def test_leader_probability_examples(stakes, expected):
    assert leader_probability(stakes).tolist() == expected


def test_leader_probability_degenerate():
    with pytest.raises(DegenerateProfileError, match="degenerate stake vector"):
        leader_probability([0.0, 0.0])


positive_stakes = arrays(
    np.float64, st.integers(1, 30), elements=st.one_of(st.just(0.0), st.floats(1e-6, 1e6))
).filter(lambda a: a.sum() > 0)


@given(positive_stakes)
def test_leader_probability_is_simplex_point(stakes):
    p = leader_probability(stakes)
    assert (p >= 0).all()
    assert abs(math.fsum(p) - 1.0) <= 1e-12


@given(positive_stakes, st.floats(1e-3, 1e3))
def test_leader_probability_scale_invariant(stakes, k):
    p, q = leader_probability(stakes), leader_probability(stakes * k)
    assert np.argmax(p) == np.argmax(q)
    np.testing.assert_allclose(p, q, rtol=1e-12, atol=1e-15)


# -- utility ---------------------------------------------------------------


def test_utility_examples():
    rep = utility(game([[1.0], [1.0]], 1000, 100), StrategyProfile(np.array([[10.0], [10.0]])))
    assert rep.utilities.tolist() == [40.0, 40.0]
    rep = utility(game([[1.0], [2.0]], 1000, 100), StrategyProfile(np.array([[30.0], [10.0]])))
    assert rep.utilities.tolist() == [45.0, 5.0]
    assert rep.grand_total == 40.0 and rep.others_total(0) == 10.0


def test_utility_zero_profile():
    cfg = random_game(1)
    assert utility(cfg, StrategyProfile.zeros(cfg)).utilities.tolist() == [0.0] * 4


def test_utility_dimension_mismatch():
    with pytest.raises(GameError):
        utility(random_game(1), StrategyProfile(np.ones((2, 2))))


def _random_profile(seed, n=None, m=None):
    rng = np.random.default_rng(seed)
    n = n or int(rng.integers(2, 7))
    m = m or int(rng.integers(1, 9))
    s = rng.uniform(0.5, 50, (n, m))
    cfg = game(rng.uniform(1, 2, (n, m)), s.sum(axis=0) * 1.5, rng.uniform(100, 2000))
    return cfg, StrategyProfile(s), rng


def test_utility_matches_direct_formula():
    for seed in range(50):
        cfg, p, _ = _random_profile(seed)
        rep = utility(cfg, p)
        for n in range(cfg.num_nodes):
            expect = direct_utility(cfg.costs.tolist(), p.purchases.tolist(), cfg.block_reward, n)
            assert rep.utilities[n] == pytest.approx(expect, rel=1e-12, abs=1e-9)


def test_grand_total_is_sum_of_totals_at_scale():
    cfg, p, _ = _random_profile(0, n=75, m=100)
    rep = utility(cfg, p)
    assert abs(rep.grand_total - math.fsum(rep.totals)) <= 1e-9 * rep.grand_total


@pytest.mark.parametrize("seed", range(10))
def test_reward_shares_sum_to_reward(seed):
    cfg, p, _ = _random_profile(seed)
    rep = utility(cfg, p)
    spend = float((cfg.costs * p.purchases).sum())
    assert math.fsum(rep.utilities) == pytest.approx(cfg.block_reward - spend, rel=1e-12, abs=1e-9)


@pytest.mark.parametrize("seed", range(10))
def test_doubling_keeps_shares_and_doubles_cost(seed):
    cfg, p, _ = _random_profile(seed)
    a = utility(cfg, p)
    b = utility(cfg, StrategyProfile(p.purchases * 2))
    share_a = cfg.block_reward * a.totals / a.grand_total
    share_b = cfg.block_reward * b.totals / b.grand_total
    np.testing.assert_allclose(share_a, share_b, rtol=1e-12)
    np.testing.assert_allclose(share_b - b.utilities, 2 * (share_a - a.utilities), rtol=1e-12)


def test_contribution_of():
    p = StrategyProfile(np.array([[1.0, 2.0, 3.0], [0.0, 0.0, 0.0]]))
    assert contribution_of(p, 0) == 6.0
    assert contribution_of(p, 1) == 0.0
    init = StrategyProfile.uniform(random_game(0), 2.0)
    assert [contribution_of(init, n) for n in range(4)] == [12.0] * 4


# -- derivatives -----------------------------------------------------------


def test_gradient_example():
    cfg = game([[1.0], [1.0]], 1000, 100)
    g = utility_gradient(cfg, StrategyProfile(np.array([[10.0], [10.0]])), 0)
    assert g.tolist() == [1.5]


def test_gradient_differences_are_cost_differences():
    cfg, p, _ = _random_profile(4, m=5)
    g = utility_gradient(cfg, p, 2)
    np.testing.assert_allclose(g[:, None] - g[None, :], cfg.costs[2][None, :] - cfg.costs[2][:, None], atol=1e-12)


def test_gradient_zero_profile():
    cfg = random_game(0)
    with pytest.raises(DegenerateProfileError, match="gradient undefined at zero profile"):
        utility_gradient(cfg, StrategyProfile.zeros(cfg), 0)


def test_second_derivative_example():
    cfg = game([[1.0], [1.0]], 1000, 100)
    h = utility_second_derivative(cfg, StrategyProfile(np.array([[10.0], [10.0]])), 0, 0)
    assert h == pytest.approx(-0.25, rel=1e-15)


def test_second_derivative_degenerate():
    cfg = game([[1.0], [1.0]], 1000, 100)
    with pytest.raises(DegenerateProfileError, match="degenerate opponent profile"):
        utility_second_derivative(cfg, StrategyProfile(np.array([[10.0], [0.0]])), 0, 0)


def _fd_case(seed):
    cfg, p, rng = _random_profile(seed)
    n, m = int(rng.integers(cfg.num_nodes)), int(rng.integers(cfg.num_users))
    costs, s, R = cfg.costs.tolist(), p.purchases.tolist(), cfg.block_reward

    def U(delta):
        shifted = [row[:] for row in s]
        shifted[n][m] += delta
        return direct_utility(costs, shifted, R, n)

    return cfg, p, n, m, U


@pytest.mark.parametrize("seed", range(100))
def test_gradient_matches_central_difference(seed):
    cfg, p, n, m, U = _fd_case(seed)
    h = 1e-5
    fd = (U(h) - U(-h)) / (2 * h)
    analytic = utility_gradient(cfg, p, n)[m]
    assert abs(fd - analytic) <= 1e-4 * abs(analytic)


@pytest.mark.parametrize("seed", range(100))
def test_second_derivative_matches_central_difference(seed):
    cfg, p, n, m, U = _fd_case(seed)
    h = 1e-3 * float(p.purchases.sum())
    fd = (U(h) - 2 * U(0.0) + U(-h)) / h**2
    analytic = utility_second_derivative(cfg, p, n, m)
    assert analytic < 0
    assert abs(fd - analytic) <= 1e-3 * abs(analytic)


@settings(max_examples=200)
@given(
    st.floats(1, 1e4), st.floats(1e-3, 1e4), st.floats(1e-3, 1e4),
)
def test_second_derivative_always_negative(reward, own, others):
    cfg = game([[1.0], [1.0]], math.inf, reward)
    assert utility_second_derivative(cfg, StrategyProfile(np.array([[own], [others]])), 0, 0) < 0
