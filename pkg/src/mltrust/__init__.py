"""Maximum-likelihood equilibria of a dynamic trust game with costly beliefs.

Players best-reply to beliefs formed by pooling contingencies into cells;
the partition trades prediction error against a per-cell complexity cost.
The package verifies and searches for such equilibria, checks the
cooperation bounds numerically, and exposes a command-line front end.
"""

__version__ = "0.1.0"

from .equilibrium import (
    EquilibriumCandidate,
    Verdict,
    nash_benchmark,
    solve_n1,
    solve_n2,
    verify_all,
    verify_mleq,
    verify_monotone_mleq,
    verify_smleq,
    zero_trust,
)
from .gridsearch import grid_search
from .partitions import Partition, ml_optimal_partitions, objective_v, representative_strategies
from .trust_game import StateSpace, ergodic_distribution, make_strategy

__all__ = [
    "__version__",
    "StateSpace",
    "Partition",
    "EquilibriumCandidate",
    "Verdict",
    "make_strategy",
    "ergodic_distribution",
    "representative_strategies",
    "objective_v",
    "ml_optimal_partitions",
    "verify_mleq",
    "verify_smleq",
    "verify_monotone_mleq",
    "verify_all",
    "zero_trust",
    "nash_benchmark",
    "solve_n1",
    "solve_n2",
    "grid_search",
]
