"""Game-theoretic core: instances, strategy profiles and utility evaluation.

Nodes buy information units from users; a node's share of the block reward is
its total purchase over the grand total, and every unit bought costs the
node/user unit cost. All functions here are pure.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .rng import stream

# Relative slack on the shared capacity constraint, absorbs solver rounding.
FEASIBILITY_RTOL = 1e-9


class GameError(ValueError):
    """Invalid game instance or profile."""


class DegenerateProfileError(GameError):
    """Raised where a quantity is 0/0 or has no maximizer."""


def _frozen(values, ndim: int, name: str) -> np.ndarray:
    arr = np.array(values, dtype=np.float64)
    if arr.ndim != ndim:
        raise GameError(f"{name} must be {ndim}-dimensional, got shape {arr.shape}")
    if np.isnan(arr).any():
        raise GameError(f"{name} contains NaN")
    arr.flags.writeable = False
    return arr


@dataclass(frozen=True)
class GameConfig:
    """A complete game instance.

    ``capacities[m]`` is how many units user m can sell in total (``inf`` for
    unlimited); ``costs[n, m]`` is node n's unit cost when buying from user m.
    """

    num_nodes: int
    num_users: int
    block_reward: float
    capacities: np.ndarray
    costs: np.ndarray

    def __post_init__(self):
        if int(self.num_nodes) < 1 or int(self.num_users) < 1:
            raise GameError("num_nodes and num_users must be positive")
        object.__setattr__(self, "num_nodes", int(self.num_nodes))
        object.__setattr__(self, "num_users", int(self.num_users))
        object.__setattr__(self, "block_reward", float(self.block_reward))
        caps = _frozen(self.capacities, 1, "capacities")
        costs = _frozen(self.costs, 2, "costs")
        object.__setattr__(self, "capacities", caps)
        object.__setattr__(self, "costs", costs)
        if not (self.block_reward > 0 and math.isfinite(self.block_reward)):
            raise GameError(f"block_reward must be positive and finite, got {self.block_reward}")
        if caps.shape != (self.num_users,):
            raise GameError(f"capacities has shape {caps.shape}, expected ({self.num_users},)")
        if costs.shape != (self.num_nodes, self.num_users):
            raise GameError(
                f"costs has shape {costs.shape}, expected ({self.num_nodes}, {self.num_users})"
            )
        if (caps < 0).any():
            raise GameError("capacities must be non-negative")
        if not (costs > 0).all() or not np.isfinite(costs).all():
            raise GameError("costs must be strictly positive and finite")

    @classmethod
    def build(cls, costs, capacities, block_reward: float) -> "GameConfig":
        costs = np.asarray(costs, dtype=np.float64)
        if costs.ndim != 2:
            raise GameError(f"costs must be a matrix, got shape {costs.shape}")
        n, m = costs.shape
        capacities = np.broadcast_to(np.asarray(capacities, dtype=np.float64), (m,))
        return cls(n, m, block_reward, capacities, costs)

    def with_costs(self, costs) -> "GameConfig":
        return GameConfig(self.num_nodes, self.num_users, self.block_reward, self.capacities, costs)

    def with_reward(self, block_reward: float) -> "GameConfig":
        return GameConfig(self.num_nodes, self.num_users, block_reward, self.capacities, self.costs)

    def to_dict(self) -> dict:
        return {
            "num_nodes": self.num_nodes,
            "num_users": self.num_users,
            "block_reward": self.block_reward,
            "capacities": [c if math.isfinite(c) else None for c in self.capacities.tolist()],
            "costs": self.costs.tolist(),
        }


def draw_costs(seed: int, num_nodes: int, num_users: int, lo: float = 1.0, hi: float = 2.0, *keys: int):
    """Unit-cost matrix drawn uniformly from ``[lo, hi)`` on the ``costs`` stream."""
    if not 0 < lo <= hi:
        raise GameError(f"cost range must satisfy 0 < lo <= hi, got [{lo}, {hi}]")
    rng = stream(seed, "costs", num_nodes, num_users, *keys)
    return rng.uniform(lo, hi, size=(num_nodes, num_users))


def random_game(
    seed: int,
    num_nodes: int = 4,
    num_users: int = 6,
    block_reward: float = 1000.0,
    capacity: float = 150.0,
    cost_range: tuple[float, float] = (1.0, 2.0),
) -> GameConfig:
    """The experimental default: uniform costs and equal user capacities."""
    costs = draw_costs(seed, num_nodes, num_users, *cost_range)
    return GameConfig.build(costs, capacity, block_reward)


@dataclass(frozen=True)
class StrategyProfile:
    """Purchase matrix ``purchases[n, m]``: units node n buys from user m."""

    purchases: np.ndarray

    def __post_init__(self):
        arr = _frozen(self.purchases, 2, "purchases")
        if (arr < 0).any():
            raise GameError("purchases must be non-negative")
        if not np.isfinite(arr).all():
            raise GameError("purchases must be finite")
        object.__setattr__(self, "purchases", arr)

    @classmethod
    def uniform(cls, config: GameConfig, units: float) -> "StrategyProfile":
        return cls(np.full((config.num_nodes, config.num_users), float(units)))

    @classmethod
    def zeros(cls, config: GameConfig) -> "StrategyProfile":
        return cls.uniform(config, 0.0)

    @property
    def shape(self) -> tuple[int, int]:
        return self.purchases.shape

    def totals(self) -> np.ndarray:
        return self.purchases.sum(axis=1)

    def with_row(self, node: int, row) -> "StrategyProfile":
        arr = self.purchases.copy()
        arr[node] = row
        return StrategyProfile(arr)

    def column_usage(self) -> np.ndarray:
        return self.purchases.sum(axis=0)

    def is_feasible(self, config: GameConfig) -> bool:
        if self.shape != (config.num_nodes, config.num_users):
            return False
        usage = self.column_usage()
        caps = config.capacities
        slack = FEASIBILITY_RTOL * np.maximum(1.0, np.where(np.isfinite(caps), caps, 0.0))
        return bool((usage <= caps + slack).all())


def check_dims(config: GameConfig, profile: StrategyProfile) -> None:
    if profile.shape != (config.num_nodes, config.num_users):
        raise GameError(
            f"profile shape {profile.shape} does not match game ({config.num_nodes}, {config.num_users})"
        )


def check_feasible(config: GameConfig, profile: StrategyProfile) -> None:
    check_dims(config, profile)
    if not profile.is_feasible(config):
        over = profile.column_usage() - config.capacities
        m = int(np.argmax(over))
        raise GameError(f"profile infeasible: user {m} oversold by {over[m]:.6g} units")


def _check_node(config: GameConfig, node: int) -> int:
    node = int(node)
    if not 0 <= node < config.num_nodes:
        raise IndexError(f"node index {node} out of range for {config.num_nodes} nodes")
    return node


@dataclass(frozen=True)
class UtilityReport:
    utilities: np.ndarray
    totals: np.ndarray
    grand_total: float

    def others_total(self, node: int) -> float:
        """Opponents' combined purchase, ``X - x_n``."""
        return self.grand_total - float(self.totals[node])


def leader_probability(contributions) -> np.ndarray:
    """Election probability of each node, proportional to its contribution."""
    s = np.asarray(contributions, dtype=np.float64)
    if s.ndim != 1 or s.size == 0:
        raise GameError("contributions must be a non-empty vector")
    if (s < 0).any() or not np.isfinite(s).all():
        raise GameError("contributions must be finite and non-negative")
    total = math.fsum(s)
    if total <= 0:
        raise DegenerateProfileError("degenerate stake vector")
    return s / total


def contribution_of(profile: StrategyProfile, node: int) -> float:
    return math.fsum(profile.purchases[int(node)])


def _totals(profile: StrategyProfile) -> tuple[np.ndarray, float]:
    totals = np.array([math.fsum(row) for row in profile.purchases])
    return totals, math.fsum(totals)


def utility(config: GameConfig, profile: StrategyProfile) -> UtilityReport:
    """Per-node utility: reward share minus purchase cost.

    At the all-zero profile the reward share is 0/0; every utility is 0 there.
    """
    check_dims(config, profile)
    totals, grand = _totals(profile)
    spend = np.array([math.fsum(c * s) for c, s in zip(config.costs, profile.purchases)])
    if grand > 0:
        utilities = config.block_reward * totals / grand - spend
    else:
        utilities = np.zeros(config.num_nodes)
    utilities.flags.writeable = False
    totals.flags.writeable = False
    return UtilityReport(utilities, totals, grand)


def utility_gradient(config: GameConfig, profile: StrategyProfile, node: int) -> np.ndarray:
    """Partial derivatives of node ``node``'s utility w.r.t. its own purchases."""
    check_dims(config, profile)
    node = _check_node(config, node)
    totals, grand = _totals(profile)
    if grand <= 0:
        raise DegenerateProfileError("gradient undefined at zero profile")
    others = grand - totals[node]
    return config.block_reward * others / grand**2 - config.costs[node]


def utility_second_derivative(config: GameConfig, profile: StrategyProfile, node: int, user: int) -> float:
    """Diagonal second derivative ``-2 R T / X^3`` (T: opponents' total, X: grand total).

    Identical for every ``user``; the index is validated only.
    """
    check_dims(config, profile)
    node = _check_node(config, node)
    if not 0 <= int(user) < config.num_users:
        raise IndexError(f"user index {user} out of range for {config.num_users} users")
    totals, grand = _totals(profile)
    others = grand - totals[node]
    if others <= 0:
        raise DegenerateProfileError("degenerate opponent profile")
    return -2.0 * config.block_reward * others / grand**3
