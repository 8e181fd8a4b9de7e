"""Equilibrium annuity prices in an economy with Poisson population growth.

The price ``A(j)`` and consumption adjustments ``k_i(j)`` are computed
level by level, backwards from a truncation level, by a safeguarded Newton
solve on a Lambert-W reformulation. A path simulator checks clearing,
self-financing and optimality of the resulting strategies.
"""

__version__ = "0.1.0"

from .model import (AgentParams, AssumptionViolation, LevelTable, ModelError, ModelSpec,
                    aggregate, compute_beta)
from .solver import (ConvergenceError, EquilibriumSolution, SolverError, check_bounds,
                     solve_limit, solve_truncated)
from .special_functions import lambert_w0, lambert_w0_of_log
