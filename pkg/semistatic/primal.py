"""Primal utility maximization: u(x, q), the semi-static value and w(x)."""

import logging
from dataclasses import dataclass, field
from enum import Enum
from typing import Optional, Sequence, Tuple

import numpy as np
from scipy import optimize

from .config import Config, resolve_config
from .errors import ArbitragePriceError, DomainError, SolverError
from .geometry import check_nonreplicability, martingale_polytope, price_directions, price_set
from .lp_core import LinearProgram, LpStatus, solve_lp
from .market import MarketModel, TerminalWealth, TradingStrategy
from .newton import maximize_separable, reduce_to_face
from .utility import PiecewiseLinearUtility, Utility
from .utils import as_vector


logger = logging.getLogger(__name__)


class SolveStatus(Enum):
    INTERIOR = "interior"
    BOUNDARY = "boundary"
    INFEASIBLE = "infeasible"
    INFINITE = "infinite"


@dataclass
class PrimalSolution:
    """Optimal terminal wealth, strategy and static position.

    ``marginal`` is the derivative of the value in x, i.e. E[density], and
    ``density`` is the optimal dual density U'(g) per state.
    """
    value: float
    status: SolveStatus
    wealth: Optional[TerminalWealth] = None
    strategy: Optional[TradingStrategy] = None
    position: np.ndarray = field(default_factory=lambda: np.zeros(0))
    marginal: float = float('nan')
    density: Optional[np.ndarray] = None
    unique: bool = True
    iterations: int = 0

    @property
    def feasible(self) -> bool:
        return self.status in (SolveStatus.INTERIOR, SolveStatus.BOUNDARY)


@dataclass
class _Maximum:
    value: float
    status: SolveStatus
    z: Optional[np.ndarray] = None
    g: Optional[np.ndarray] = None
    density: Optional[np.ndarray] = None
    iterations: int = 0


def _boundary_tolerance(base: np.ndarray) -> float:
    return 1e-12 * max(1.0, float(np.max(np.abs(base), initial=0.0)))


def _maximize_smooth(model: MarketModel, utility: Utility, base: np.ndarray,
                     A: np.ndarray, config: Config) -> _Maximum:
    face = reduce_to_face(base, A, config)
    if face is None:
        return _Maximum(float('-inf'), SolveStatus.INFEASIBLE)

    P = model.P
    free = face.free
    if face.full:
        positive = bool(np.all(base > config.interior_threshold * max(1.0, float(np.abs(base).max()))))
        start = np.zeros(A.shape[1]) if positive else face.start
        result = maximize_separable(P, utility.derivatives, base, A, start, config)
        z = result.z
        iterations = result.iterations
    else:
        if np.any(~free) and np.isneginf(utility.value_at_zero):
            z = face.lift(face.start)
            g = base + A @ z
            g[~free] = 0.0
            return _Maximum(float('-inf'), SolveStatus.BOUNDARY, z, g)
        reduced_base = base[free] + A[free] @ face.z0
        reduced_A = A[free] @ face.N
        result = maximize_separable(P[free], utility.derivatives, reduced_base, reduced_A,
                                    face.start, config)
        z = face.lift(result.z)
        iterations = result.iterations

    g = base + A @ z
    g[~free] = 0.0
    value = float(P @ np.asarray(utility.value(g)))
    if np.all(free):
        density = np.asarray(utility.marginal(g))
        status = SolveStatus.INTERIOR
    else:
        density = np.full(g.shape, np.inf)
        density[free] = utility.marginal(g[free])
        status = SolveStatus.BOUNDARY
    return _Maximum(value, status, z, g, density, iterations)


def _maximize_piecewise(model: MarketModel, utility: PiecewiseLinearUtility, base: np.ndarray,
                        A: np.ndarray, config: Config) -> _Maximum:
    """Epigraph LP: max P.t with t <= U(b_j) + s_j (g - b_j), g = base + A z >= 0."""
    P = model.P
    N, k = A.shape
    slopes, knots, levels = utility.slopes, utility.breakpoints, utility.levels
    pieces = len(slopes)

    rows, rhs = [], []
    for j in range(pieces):
        block = np.hstack([-slopes[j] * A, np.eye(N)])
        rows.append(block)
        rhs.append(levels[j] - slopes[j] * knots[j] + slopes[j] * base)
    rows.append(np.hstack([-A, np.zeros((N, N))]))
    rhs.append(base)
    objective = np.concatenate([np.zeros(k), P])
    lp = LinearProgram(objective, A_ub=np.vstack(rows), b_ub=np.concatenate(rhs),
                       lower=[None] * (k + N), maximize=True)
    result = solve_lp(lp, config)
    if result.status is LpStatus.INFEASIBLE:
        return _Maximum(float('-inf'), SolveStatus.INFEASIBLE, iterations=result.iterations)
    if result.status is LpStatus.UNBOUNDED:
        return _Maximum(float('inf'), SolveStatus.INFINITE, iterations=result.iterations)

    z = result.x[:k]
    g = np.maximum(base + A @ z, 0.0)
    duals = result.ub_duals.reshape(pieces + 1, N)
    density = (slopes @ duals[:pieces] + duals[pieces]) / P
    value = float(P @ np.asarray(utility.value(g)))
    status = SolveStatus.BOUNDARY if np.any(g <= _boundary_tolerance(base)) else SolveStatus.INTERIOR
    return _Maximum(value, status, z, g, density, result.iterations)


def _maximize(model: MarketModel, utility: Utility, base: np.ndarray, A: np.ndarray,
              config: Config) -> _Maximum:
    if isinstance(utility, PiecewiseLinearUtility):
        return _maximize_piecewise(model, utility, base, A, config)
    if not utility.smooth:
        raise SolverError(f"No solver path for utility {utility.describe()}")
    return _maximize_smooth(model, utility, base, A, config)


def _solution(model: MarketModel, best: _Maximum, position: np.ndarray,
              strategy_vector: Optional[np.ndarray], unique: bool = True) -> PrimalSolution:
    if best.g is None:
        return PrimalSolution(best.value, best.status, position=position, iterations=best.iterations)
    marginal = float(model.P @ best.density) if best.density is not None else float('nan')
    return PrimalSolution(
        value=best.value,
        status=best.status,
        wealth=TerminalWealth(best.g, list(model.states)),
        strategy=TradingStrategy.from_vector(model, strategy_vector),
        position=position,
        marginal=marginal,
        density=best.density,
        unique=unique,
        iterations=best.iterations,
    )


def solve_u(model: MarketModel, utility: Utility, x: float, q: Sequence[float],
            config: Optional[Config] = None) -> PrimalSolution:
    """u(x, q): optimal investment holding q derivatives and initial wealth x."""
    config = resolve_config(config)
    q = as_vector(q, model.num_derivatives, 'q')
    base = float(x) + model.F.T @ q
    best = _maximize(model, utility, base, model.G, config)
    if best.status is SolveStatus.INFEASIBLE:
        logger.debug("(x, q) = (%g, %s) lies outside the feasible cone", x, q)
    solution = _solution(model, best, q, best.z)
    logger.debug("u(%g, %s) = %.12g [%s]", x, q, solution.value, solution.status.value)
    return solution


def solve_u_tilde(model: MarketModel, utility: Utility, x: float, p: Sequence[float],
                  config: Optional[Config] = None) -> PrimalSolution:
    """Semi-static value: joint choice of the static position and the strategy."""
    config = resolve_config(config)
    n = model.num_derivatives
    p = as_vector(p, n, 'p')
    if not x > 0:
        raise DomainError(f"Initial wealth must be positive, got {x}")
    if n and not price_set(model, config).contains(p):
        raise ArbitragePriceError(f"Price {p.tolist()} is not arbitrage-free for market {model.name!r}")

    A = np.hstack([model.F.T - p, model.G])
    base = np.full(model.num_states, float(x))
    best = _maximize(model, utility, base, A, config)
    if best.g is None:
        return _solution(model, best, np.zeros(n), None)

    unique = True
    z = best.z
    if n and not check_nonreplicability(model, config):
        unique = False
        z = np.linalg.lstsq(A, best.g - base, rcond=None)[0]
    solution = _solution(model, best, z[:n], z[n:], unique)
    logger.debug("u~(%g, %s) = %.12g, q~ = %s", x, p, solution.value, solution.position)
    return solution


def stock_only_value(model: MarketModel, utility: Utility, x: float,
                     config: Optional[Config] = None) -> PrimalSolution:
    """w(x): optimal investment in the stocks alone."""
    return solve_u(model, utility, x, np.zeros(model.num_derivatives), config)


def utility_gradient(model: MarketModel, utility: Utility, x: float, q: Sequence[float],
                     config: Optional[Config] = None) -> Tuple[float, np.ndarray]:
    """(du/dx, du/dq) at an interior endowment, from the optimal density."""
    solution = solve_u(model, utility, x, q, config)
    if solution.status is not SolveStatus.INTERIOR:
        raise SolverError(f"Gradient of u needs an interior optimum, got {solution.status.value}")
    weighted = model.P * solution.density
    return float(weighted.sum()), model.F @ weighted


def marginal_utility_price(model: MarketModel, utility: Utility, x: float, q: Sequence[float],
                           config: Optional[Config] = None) -> np.ndarray:
    """Price E[h f] / E[h] under the optimal density of u(x, q)."""
    y, r = utility_gradient(model, utility, x, q, config)
    return r / y


@dataclass
class StaticDecomposition:
    value: float
    position: np.ndarray
    inner: PrimalSolution


def _position_bounds(model: MarketModel, x: float, p: np.ndarray, config: Config) -> Tuple[float, float]:
    prices = martingale_polytope(model, config).price_vertices[:, 0]
    lo, hi = -np.inf, np.inf
    for pi in prices:
        if pi > p[0]:
            lo = max(lo, -x / (pi - p[0]))
        elif pi < p[0]:
            hi = min(hi, x / (p[0] - pi))
    return lo, hi


def solve_static_decomposition(model: MarketModel, utility: Utility, x: float, p: Sequence[float],
                               config: Optional[Config] = None) -> StaticDecomposition:
    """sup_q u(x - q.p, q), searched directly over the static position."""
    config = resolve_config(config)
    n = model.num_derivatives
    p = as_vector(p, n, 'p')

    def loss(q) -> float:
        q = np.atleast_1d(q)
        value = solve_u(model, utility, x - float(q @ p), q, config).value
        return 1e300 if not np.isfinite(value) else -value

    free, _ = price_directions(model, config)
    if free.shape[1] == 0:
        # every position in a pinned combination gives the same wealth set
        q_hat = np.zeros(n)
    elif n == 1:
        lo, hi = _position_bounds(model, x, p, config)
        if not (np.isfinite(lo) and np.isfinite(hi)):
            raise ArbitragePriceError(f"Price {p.tolist()} leaves the position unbounded")
        result = optimize.minimize_scalar(loss, bounds=(lo, hi), method='bounded',
                                          options={'xatol': 1e-10 * max(1.0, hi - lo)})
        q_hat = np.array([result.x])
    else:
        result = optimize.minimize(lambda y: loss(free @ np.atleast_1d(y)), np.zeros(free.shape[1]),
                                   method='Nelder-Mead',
                                   options={'xatol': 1e-10, 'fatol': 1e-14, 'maxiter': 20000})
        q_hat = free @ np.atleast_1d(result.x)
    inner = solve_u(model, utility, x - float(q_hat @ p), q_hat, config)
    return StaticDecomposition(inner.value, q_hat, inner)
