"""Dual problems: v(y, r), its price form and the stock-only dual."""

import logging
from dataclasses import dataclass, field
from enum import Enum
from typing import Optional, Sequence, Tuple

import numpy as np

from .config import Config, resolve_config
from .errors import ArbitragePriceError, DomainError, SolverError
from .geometry import price_set
from .lp_core import LinearProgram, LpStatus, solve_lp
from .market import MarketModel
from .newton import maximize_separable, reduce_to_face
from .utility import PiecewiseLinearUtility, Utility
from .utils import as_vector, null_space


logger = logging.getLogger(__name__)


class DualStatus(Enum):
    OPTIMAL = "optimal"
    INFEASIBLE = "infeasible"
    INFINITE = "infinite"


@dataclass
class DualSolution:
    """Optimal density h over states with its value and sensitivities.

    ``gradient`` holds (dv/dy, dv/dr) taken from the multipliers of the
    moment constraints; ``marginal`` is the derivative along the problem's
    own y-direction.
    """
    value: float
    status: DualStatus
    y: float = float('nan')
    r: np.ndarray = field(default_factory=lambda: np.zeros(0))
    density: Optional[np.ndarray] = None
    measure: Optional[np.ndarray] = None
    gradient: np.ndarray = field(default_factory=lambda: np.zeros(0))
    marginal: float = float('nan')
    iterations: int = 0

    @property
    def optimal(self) -> bool:
        return self.status is DualStatus.OPTIMAL


def moment_system(model: MarketModel, y: float, r: Optional[np.ndarray]) -> Tuple[np.ndarray, np.ndarray]:
    """Rows E[h] = y, E[h f] = r (skipped when r is None) and the martingale rows."""
    P = model.P
    blocks = [P[None, :]]
    rhs = [np.array([float(y)])]
    if r is not None:
        blocks.append(model.F * P)
        rhs.append(np.asarray(r, dtype=float))
    blocks.append(model.G.T * P)
    rhs.append(np.zeros(model.G.shape[1]))
    return np.vstack(blocks), np.concatenate(rhs)


@dataclass
class _Minimum:
    value: float
    status: DualStatus
    h: Optional[np.ndarray] = None
    multipliers: Optional[np.ndarray] = None
    iterations: int = 0


def _negated_conjugate(utility: Utility):
    def evaluate(s: np.ndarray):
        value, first, second = utility.conjugate_derivatives(s)
        return -np.asarray(value), -np.asarray(first), -np.asarray(second)
    return evaluate


def _minimize_smooth(model: MarketModel, utility: Utility, C: np.ndarray, b: np.ndarray,
                     config: Config) -> _Minimum:
    P = model.P
    h0 = np.linalg.lstsq(C, b, rcond=None)[0]
    scale = max(1.0, float(np.abs(b).max(initial=0.0)))
    if np.max(np.abs(C @ h0 - b), initial=0.0) > 1e-9 * scale:
        return _Minimum(float('inf'), DualStatus.INFEASIBLE)
    Z = null_space(C)
    face = reduce_to_face(h0, Z, config)
    if face is None:
        return _Minimum(float('inf'), DualStatus.INFEASIBLE)

    evaluate = _negated_conjugate(utility)
    free = face.free
    if face.full:
        result = maximize_separable(P, evaluate, h0, Z, face.start, config)
        h = h0 + Z @ result.z
    else:
        if np.isposinf(utility.value_at_infinity):
            return _Minimum(float('inf'), DualStatus.INFINITE)
        reduced_base = h0[free] + Z[free] @ face.z0
        reduced_A = Z[free] @ face.N
        result = maximize_separable(P[free], evaluate, reduced_base, reduced_A, face.start, config)
        h = h0 + Z @ face.lift(result.z)
    h[~free] = 0.0

    values = np.full(h.shape, utility.value_at_infinity)
    values[free] = utility.conjugate(h[free])
    value = float(P @ values)
    multipliers = None
    if face.full:
        multipliers = np.linalg.lstsq(C.T, P * np.asarray(utility.conjugate_marginal(h)), rcond=None)[0]
    return _Minimum(value, DualStatus.OPTIMAL, h, multipliers, result.iterations)


def _minimize_piecewise(model: MarketModel, utility: PiecewiseLinearUtility, C: np.ndarray,
                        b: np.ndarray, config: Config) -> _Minimum:
    """Epigraph LP: min P.tau with tau >= U(b_j) - b_j h and h >= last slope."""
    P = model.P
    N = model.num_states
    rows, rhs = [], []
    for level, knot in zip(utility.levels, utility.breakpoints):
        rows.append(np.hstack([-knot * np.eye(N), -np.eye(N)]))
        rhs.append(np.full(N, -level))
    objective = np.concatenate([np.zeros(N), P])
    lp = LinearProgram(objective, A_eq=np.hstack([C, np.zeros((C.shape[0], N))]), b_eq=b,
                       A_ub=np.vstack(rows), b_ub=np.concatenate(rhs),
                       lower=[utility.last_slope] * N + [None] * N)
    result = solve_lp(lp, config)
    if result.status is LpStatus.INFEASIBLE:
        relaxed = solve_lp(LinearProgram(np.zeros(N), A_eq=C, b_eq=b), config)
        if relaxed.status is LpStatus.OPTIMAL:
            return _Minimum(float('inf'), DualStatus.INFINITE, iterations=result.iterations)
        return _Minimum(float('inf'), DualStatus.INFEASIBLE, iterations=result.iterations)
    if result.status is not LpStatus.OPTIMAL:
        raise SolverError(f"Dual LP ended with status {result.status.value}")
    h = result.x[:N]
    value = float(P @ np.asarray(utility.conjugate(h)))
    return _Minimum(value, DualStatus.OPTIMAL, h, result.eq_duals, result.iterations)


def _minimize(model: MarketModel, utility: Utility, C: np.ndarray, b: np.ndarray,
              config: Config) -> _Minimum:
    if isinstance(utility, PiecewiseLinearUtility):
        return _minimize_piecewise(model, utility, C, b, config)
    if not utility.smooth:
        raise SolverError(f"No dual solver path for utility {utility.describe()}")
    return _minimize_smooth(model, utility, C, b, config)


def _measure(model: MarketModel, h: np.ndarray) -> Optional[np.ndarray]:
    mass = model.P * h
    total = mass.sum()
    return mass / total if total > 0 else None


def solve_v(model: MarketModel, utility: Utility, y: float, r: Sequence[float],
            config: Optional[Config] = None) -> DualSolution:
    """v(y, r) = min E[V(h)] over densities with E[h] = y, E[h f] = r."""
    config = resolve_config(config)
    n = model.num_derivatives
    r = as_vector(r, n, 'r')
    if y < 0:
        return DualSolution(float('inf'), DualStatus.INFEASIBLE, float(y), r)
    C, b = moment_system(model, y, r)
    best = _minimize(model, utility, C, b, config)
    if best.h is None:
        logger.debug("v(%g, %s) is %s", y, r, best.status.value)
        return DualSolution(best.value, best.status, float(y), r, iterations=best.iterations)
    gradient = best.multipliers[:1 + n] if best.multipliers is not None else np.full(1 + n, np.nan)
    solution = DualSolution(
        value=best.value,
        status=best.status,
        y=float(y),
        r=r,
        density=best.h,
        measure=_measure(model, best.h),
        gradient=gradient,
        marginal=float(gradient[0]),
        iterations=best.iterations,
    )
    logger.debug("v(%g, %s) = %.12g", y, r, solution.value)
    return solution


def solve_v_tilde(model: MarketModel, utility: Utility, y: float, p: Sequence[float],
                  config: Optional[Config] = None) -> DualSolution:
    """Dual of the semi-static problem, v(y, y p)."""
    config = resolve_config(config)
    p = as_vector(p, model.num_derivatives, 'p')
    if not y > 0:
        raise DomainError(f"Dual variable y must be positive, got {y}")
    if model.num_derivatives and not price_set(model, config).contains(p):
        raise ArbitragePriceError(f"Price {p.tolist()} is not arbitrage-free for market {model.name!r}")
    solution = solve_v(model, utility, y, y * p, config)
    if solution.optimal:
        solution.marginal = float(solution.gradient[0] + p @ solution.gradient[1:])
    return solution


def dual_w_tilde(model: MarketModel, utility: Utility, y: float,
                 config: Optional[Config] = None) -> Tuple[float, np.ndarray]:
    """min over prices of v(y, y p); returns (value, minimizing p)."""
    config = resolve_config(config)
    if not y > 0:
        raise DomainError(f"Dual variable y must be positive, got {y}")
    C, b = moment_system(model, y, None)
    best = _minimize(model, utility, C, b, config)
    if best.h is None:
        raise SolverError(f"Stock-only dual is {best.status.value} at y = {y}")
    price = model.F @ (model.P * best.h) / y
    logger.debug("w~(%g) = %.12g at p* = %s", y, best.value, price)
    return best.value, price
