"""
SemiStatic - utility maximization in finite markets with static derivative positions
"""

__version__ = "0.1.0"

from .config import Config
from .dual import DualSolution, DualStatus, dual_w_tilde, solve_v, solve_v_tilde
from .errors import (
    ArbitrageError,
    ArbitragePriceError,
    DimensionMismatchError,
    DimensionTooLargeError,
    DomainError,
    MarketSpecError,
    NumericalFailureError,
    ProbabilitySumError,
    SemiStaticError,
    SolverError,
    UnboundedPolytopeError,
    VerificationFailure,
)
from .geometry import (
    PriceSet,
    check_nonreplicability,
    cone_K_contains,
    cone_L_contains,
    cone_radius,
    largest_feasible_position,
    price_set,
    superhedging_strategy,
    superreplication_price,
)
from .lp_core import LinearProgram, LpResult, LpStatus, Polytope, enumerate_vertices, solve_lp, strict_feasibility
from .market import (
    MarketModel,
    ScenarioTree,
    TerminalWealth,
    TradingStrategy,
    combined_payoff,
    instance_a,
    load_market,
    nonconvex_example_market,
    terminal_wealth,
)
from .primal import PrimalSolution, SolveStatus, solve_u, solve_u_tilde, stock_only_value
from .utility import LogUtility, PiecewiseLinearUtility, PowerUtility, Utility, bidual_check, parse_utility
from .verify import (
    SweepReport,
    VerificationReport,
    bipolarity_probe,
    divergence_probe,
    first_order_check,
    gradient_relation_check,
    marginal_price_set,
    nonconvexity_counterexample,
    optimizer_consistency,
    power_identity_check,
    radial_smoothness_check,
    stability_probe,
    sweep_1d,
)

__all__ = [
    'Config',
    'MarketModel', 'ScenarioTree', 'TradingStrategy', 'TerminalWealth',
    'load_market', 'terminal_wealth', 'combined_payoff', 'instance_a', 'nonconvex_example_market',
    'Utility', 'LogUtility', 'PowerUtility', 'PiecewiseLinearUtility', 'parse_utility', 'bidual_check',
    'LinearProgram', 'LpResult', 'LpStatus', 'Polytope', 'solve_lp', 'enumerate_vertices', 'strict_feasibility',
    'PriceSet', 'price_set', 'superreplication_price', 'superhedging_strategy', 'cone_K_contains',
    'cone_L_contains', 'largest_feasible_position', 'cone_radius', 'check_nonreplicability',
    'PrimalSolution', 'SolveStatus', 'solve_u', 'solve_u_tilde', 'stock_only_value',
    'DualSolution', 'DualStatus', 'solve_v', 'solve_v_tilde', 'dual_w_tilde',
    'VerificationReport', 'SweepReport', 'first_order_check', 'optimizer_consistency',
    'gradient_relation_check', 'marginal_price_set', 'sweep_1d', 'divergence_probe', 'bipolarity_probe',
    'nonconvexity_counterexample', 'power_identity_check', 'radial_smoothness_check', 'stability_probe',
    'SemiStaticError', 'MarketSpecError', 'ProbabilitySumError', 'ArbitrageError', 'ArbitragePriceError',
    'DimensionMismatchError', 'DomainError', 'UnboundedPolytopeError', 'DimensionTooLargeError',
    'NumericalFailureError', 'SolverError', 'VerificationFailure',
]
