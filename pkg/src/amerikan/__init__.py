"""American option valuation on dividend-paying geometric Brownian motion.

Four equivalent routes to the value function — obstacle, penalized and
semilinear finite-difference formulations, and two regression Monte Carlo
backward schemes — cross-validated against an independent binomial lattice
and quadrature oracle.
"""

from .bsde import (
    BsdeSolution,
    RegressionBasis,
    driver_bsde_solve,
    doob_meyer_K,
    k_formula,
    prop_bound_check,
    snell_lsmc,
)
from .harness import SuiteConfig, SuiteReport, refinement_study, run_equivalence_suite
from .lattice import (
    OracleError,
    TreeConfig,
    european_quadrature,
    oracle_price,
    tree_price_american,
    tree_price_european,
)
from .model import (
    EvalPoint,
    MarketParams,
    OptionKind,
    OptionSpec,
    PathBundle,
    TimeSchedule,
    payoff,
    simulate_paths,
)
from .pde import (
    BoundaryResult,
    GridSpec,
    PdeSolution,
    SolverError,
    WeightSpec,
    eep_premium,
    extract_boundary,
    reconstruct_measure,
    solve_obstacle,
    solve_penalized,
    solve_semilinear,
    weighted_norm,
)

__version__ = "0.1.0"

__all__ = [
    "BsdeSolution",
    "BoundaryResult",
    "EvalPoint",
    "GridSpec",
    "MarketParams",
    "OptionKind",
    "OptionSpec",
    "OracleError",
    "PathBundle",
    "PdeSolution",
    "RegressionBasis",
    "SolverError",
    "SuiteConfig",
    "SuiteReport",
    "TimeSchedule",
    "TreeConfig",
    "WeightSpec",
    "doob_meyer_K",
    "driver_bsde_solve",
    "eep_premium",
    "european_quadrature",
    "extract_boundary",
    "k_formula",
    "oracle_price",
    "payoff",
    "prop_bound_check",
    "reconstruct_measure",
    "refinement_study",
    "run_equivalence_suite",
    "simulate_paths",
    "snell_lsmc",
    "solve_obstacle",
    "solve_penalized",
    "solve_semilinear",
    "tree_price_american",
    "tree_price_european",
    "weighted_norm",
]
