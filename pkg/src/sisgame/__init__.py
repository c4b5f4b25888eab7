"""Game-theoretic curing rates against SIS epidemics under the DBMF model."""

__version__ = "0.1.0"

from .dbmf import (
    ConvergenceError,
    DegreeDistribution,
    EndemicState,
    Regime,
    delta_hat,
    endemic_state,
    endemic_v,
    infection_probs,
    integrate_dbmf,
    neighbor_dist,
    reproduction_number,
)
from .game import (
    EquilibriumResult,
    GameSpec,
    NoEquilibriumFound,
    best_response,
    check_equilibrium_structure,
    check_lower_bound,
    class_cost,
    solve_dbe,
    verify_dbe,
)
from .regular import optimal_neutral, optimal_weighted, regular_infection, sweep_cost
from .weighting import WeightingSpec, check_assumption1, solve_wprime_level, w_deriv, w_eval, x_min

__all__ = [
    "ConvergenceError",
    "DegreeDistribution",
    "EndemicState",
    "EquilibriumResult",
    "GameSpec",
    "NoEquilibriumFound",
    "Regime",
    "WeightingSpec",
    "best_response",
    "check_assumption1",
    "check_equilibrium_structure",
    "check_lower_bound",
    "class_cost",
    "delta_hat",
    "endemic_state",
    "endemic_v",
    "infection_probs",
    "integrate_dbmf",
    "neighbor_dist",
    "optimal_neutral",
    "optimal_weighted",
    "regular_infection",
    "reproduction_number",
    "solve_dbe",
    "solve_wprime_level",
    "sweep_cost",
    "verify_dbe",
    "w_deriv",
    "w_eval",
    "x_min",
]
