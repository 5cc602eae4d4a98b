"""Best responses and iterated best-response (Gauss-Seidel) equilibrium search.

A node's reward depends only on its total purchase x, so for a fixed x the
cheapest way to buy is to fill users in ascending cost order. That turns each
best response into a one-dimensional concave problem over a piecewise-linear
convex cost, solved exactly by ``kernels.optimal_total``.
"""

from __future__ import annotations

import logging
import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .game import (
    DegenerateProfileError,
    GameConfig,
    GameError,
    StrategyProfile,
    check_dims,
    check_feasible,
    utility,
)

log = logging.getLogger(__name__)

DEFAULT_MAX_ITERS = 1000
MAX_GRID_POINTS = 10**7


class DegenerateEquilibriumWarning(UserWarning):
    """A node faces no opponents' purchases, so its best response has no maximizer."""


@dataclass(frozen=True)
class BestResponse:
    allocation: np.ndarray
    achieved_utility: float

    @property
    def total(self) -> float:
        return math.fsum(self.allocation)


@dataclass(frozen=True)
class SweepRecord:
    """State after one full sweep; ``update_gains[n]`` is node n's utility change at its own update."""

    iteration: int
    utilities: np.ndarray
    totals: np.ndarray
    max_change: float
    update_gains: np.ndarray | None = None


@dataclass(frozen=True)
class EquilibriumResult:
    profile: StrategyProfile
    utilities: np.ndarray
    iterations: int
    converged: bool
    trace: list[SweepRecord] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "converged": self.converged,
            "iterations": self.iterations,
            "profile": self.profile.purchases.tolist(),
            "utilities": self.utilities.tolist(),
            "totals": self.profile.totals().tolist(),
            "trace": [
                {
                    "iteration": r.iteration,
                    "utilities": r.utilities.tolist(),
                    "totals": r.totals.tolist(),
                    "max_change": None if math.isnan(r.max_change) else r.max_change,
                }
                for r in self.trace
            ],
        }


def cost_order(costs_row) -> np.ndarray:
    """User indices by ascending cost; equal costs keep the lower index first."""
    return np.argsort(costs_row, kind="stable").astype(np.int64)


def residual_capacities(config: GameConfig, profile: StrategyProfile, node: int) -> np.ndarray:
    """Units node ``node`` could still buy from each user given everyone else's purchases."""
    check_dims(config, profile)
    others = np.delete(profile.purchases, int(node), axis=0).sum(axis=0)
    return np.maximum(config.capacities - others, 0.0)


def _others_total(profile: StrategyProfile, node: int) -> float:
    totals = profile.totals()
    return math.fsum(np.delete(totals, int(node)))


def best_response(config: GameConfig, profile: StrategyProfile, node: int) -> BestResponse:
    check_dims(config, profile)
    T = _others_total(profile, node)
    if T <= 0:
        raise DegenerateProfileError("undefined best response: reward share is constant in own total")
    residual = np.ascontiguousarray(residual_capacities(config, profile, node))
    alloc = kernels.best_response(
        config.costs[node], cost_order(config.costs[node]), residual, T, config.block_reward
    )
    alloc = np.minimum(alloc, residual)
    achieved = utility(config, profile.with_row(node, alloc)).utilities[node]
    return BestResponse(alloc, float(achieved))


def _grid_axis(limit: float, step: float) -> np.ndarray:
    if limit <= 0:
        return np.zeros(1)
    k = math.floor(limit / step + 1e-9)
    axis = step * np.arange(k + 1, dtype=np.float64)
    axis = axis[axis <= limit]
    if limit - axis[-1] > 1e-12 * max(1.0, limit):
        axis = np.append(axis, limit)
    return axis


def grid_lipschitz_gap(config: GameConfig, profile: StrategyProfile, node: int, step: float) -> float:
    """Bound on how far a grid optimum at spacing ``step`` can fall below the true optimum.

    Each partial derivative of the node's utility is bounded by ``R/T + C_m``.
    """
    T = _others_total(profile, node)
    return step * math.fsum(config.block_reward / T + config.costs[node])


def brute_force_best_response(
    config: GameConfig, profile: StrategyProfile, node: int, step: float
) -> BestResponse:
    """Exhaustive grid search over the node's own purchases (at most 3 users)."""
    check_dims(config, profile)
    if not step > 0:
        raise ValueError(f"step must be positive, got {step}")
    if config.num_users > 3:
        raise ValueError(f"grid search supports at most 3 users, got {config.num_users}")
    T = _others_total(profile, node)
    if T <= 0:
        raise DegenerateProfileError("undefined best response: reward share is constant in own total")
    residual = residual_capacities(config, profile, node)
    if not np.isfinite(residual).all():
        raise ValueError("grid search needs finite residual capacities")
    axes = [_grid_axis(r, step) for r in residual]
    points = math.prod(a.size for a in axes)
    if points > MAX_GRID_POINTS:
        raise ValueError(f"grid too large: {points} points exceeds {MAX_GRID_POINTS}")
    costs = list(config.costs[node])
    while len(axes) < 3:
        axes.append(np.zeros(1))
        costs.append(0.0)
    i, j, k, _ = kernels.grid_argmax(axes[0], axes[1], axes[2], costs[0], costs[1], costs[2], T, config.block_reward)
    alloc = np.array([axes[0][i], axes[1][j], axes[2][k]])[: config.num_users]
    achieved = utility(config, profile.with_row(node, alloc)).utilities[node]
    return BestResponse(alloc, float(achieved))


def default_eps_strategy(config: GameConfig) -> float:
    caps = config.capacities[np.isfinite(config.capacities)]
    if caps.size and caps.max() > 0:
        return 1e-6 * float(caps.max())
    # No finite capacity: scale by the largest total any best response can reach, R / (4 C_min).
    return 1e-6 * config.block_reward / (4.0 * float(config.costs.min()))


def solve_equilibrium(
    config: GameConfig,
    initial: StrategyProfile,
    eps_strategy: float | None = None,
    max_iters: int = DEFAULT_MAX_ITERS,
) -> EquilibriumResult:
    """Iterate best responses node by node (in index order) until strategies settle.

    Stops once the largest per-entry change over a full sweep drops below
    ``eps_strategy``; otherwise returns ``converged=False`` after ``max_iters``
    sweeps.
    """
    check_feasible(config, initial)
    if (initial.totals() <= 0).any():
        raise GameError("initial profile must give every node a positive total")
    if max_iters < 1:
        raise ValueError("max_iters must be positive")
    eps = default_eps_strategy(config) if eps_strategy is None else float(eps_strategy)
    if not eps > 0:
        raise ValueError("eps_strategy must be positive")

    costs = np.ascontiguousarray(config.costs)
    orders = np.ascontiguousarray(np.vstack([cost_order(row) for row in costs]))
    caps = np.ascontiguousarray(config.capacities)
    work = np.array(initial.purchases, dtype=np.float64, order="C")

    start = utility(config, initial)
    trace = [SweepRecord(0, start.utilities, start.totals, math.nan)]
    converged = False
    it = 0
    for it in range(1, max_iters + 1):
        try:
            change, before, after = kernels.gauss_seidel_sweep(costs, orders, caps, work, config.block_reward)
        except ZeroDivisionError as exc:
            raise DegenerateProfileError(
                f"undefined best response for node {exc.args[0]}: opponents purchase nothing"
            ) from None
        report = utility(config, StrategyProfile(work))
        trace.append(SweepRecord(it, report.utilities, report.totals, float(change), after - before))
        if change < eps:
            converged = True
            break
    if not converged:
        log.warning("no convergence after %d sweeps (last change %.3g)", it, trace[-1].max_change)
    profile = StrategyProfile(work)
    return EquilibriumResult(profile, trace[-1].utilities, it, converged, trace)


def deviation_gains(config: GameConfig, profile: StrategyProfile) -> np.ndarray:
    """Per node, best achievable utility from a unilateral change minus current utility.

    A node whose opponents buy nothing has no best response; its supremum
    ``R`` (approached by an arbitrarily small purchase) is used instead and a
    ``DegenerateEquilibriumWarning`` is emitted.
    """
    check_dims(config, profile)
    current = utility(config, profile).utilities
    gains = np.empty(config.num_nodes)
    for n in range(config.num_nodes):
        if _others_total(profile, n) > 0:
            gains[n] = best_response(config, profile, n).achieved_utility - current[n]
            continue
        warnings.warn(
            f"node {n} faces a zero opponent total; using the supremum utility R",
            DegenerateEquilibriumWarning,
            stacklevel=2,
        )
        can_buy = (residual_capacities(config, profile, n) > 0).any()
        best = config.block_reward if can_buy else current[n]
        gains[n] = best - current[n]
    return gains


def verify_equilibrium(config: GameConfig, profile: StrategyProfile, eps_dev: float) -> bool:
    """True iff no node can gain more than ``eps_dev`` by deviating alone."""
    return bool((deviation_gains(config, profile) <= eps_dev).all())
