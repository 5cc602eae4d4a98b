"""Information-market game solver and contribution-weighted PoS ledger simulator."""

__version__ = "0.1.0"

from .game import (  # noqa: E402
    DegenerateProfileError,
    GameConfig,
    GameError,
    StrategyProfile,
    UtilityReport,
    contribution_of,
    leader_probability,
    random_game,
    utility,
    utility_gradient,
    utility_second_derivative,
)
from .solver import (  # noqa: E402
    BestResponse,
    EquilibriumResult,
    best_response,
    brute_force_best_response,
    residual_capacities,
    solve_equilibrium,
    verify_equilibrium,
)

__all__ = [
    "__version__",
    "BestResponse",
    "DegenerateProfileError",
    "EquilibriumResult",
    "GameConfig",
    "GameError",
    "StrategyProfile",
    "UtilityReport",
    "best_response",
    "brute_force_best_response",
    "contribution_of",
    "leader_probability",
    "random_game",
    "residual_capacities",
    "solve_equilibrium",
    "utility",
    "utility_gradient",
    "utility_second_derivative",
    "verify_equilibrium",
]
