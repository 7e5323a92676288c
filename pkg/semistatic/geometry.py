"""Martingale polytope, arbitrage-free prices, feasible cones and position bounds."""

import logging
import threading
from dataclasses import dataclass
from functools import lru_cache
from typing import List, Optional, Sequence, Tuple, Union

import numpy as np

from .config import Config, resolve_config
from .errors import UnboundedPolytopeError
from .lp_core import LinearProgram, LpStatus, Polytope, enumerate_vertices, solve_lp, strict_feasibility
from .market import MarketModel, TerminalWealth, TradingStrategy
from .utils import as_vector


logger = logging.getLogger(__name__)

Claim = Union[TerminalWealth, Sequence[float], np.ndarray]


def _claim_values(model: MarketModel, claim: Claim) -> np.ndarray:
    if isinstance(claim, TerminalWealth):
        claim = claim.values
    return as_vector(claim, model.num_states, 'claim')


class MartingalePolytope:
    """Terminal measures under which every stock is a martingale."""

    def __init__(self, model: MarketModel, config: Optional[Config] = None):
        self.model = model
        self.config = resolve_config(config)
        A_eq, b_eq = model.martingale_system()
        N = model.num_states
        self.polytope = Polytope(-np.eye(N), np.zeros(N), A_eq, b_eq)
        self.lock = threading.RLock()
        self._price_vertices: Optional[np.ndarray] = None

    @property
    def vertices(self) -> List[np.ndarray]:
        with self.lock:
            return enumerate_vertices(self.polytope, self.config)

    @property
    def price_vertices(self) -> np.ndarray:
        """Distinct derivative prices E_Q[f] at the vertices, one row each."""
        with self.lock:
            if self._price_vertices is None:
                F = self.model.F
                points: List[np.ndarray] = []
                for Q in self.vertices:
                    price = F @ Q
                    if not any(np.allclose(price, other, atol=1e-10) for other in points):
                        points.append(price)
                self._price_vertices = np.array(points).reshape(len(points), self.model.num_derivatives)
            return self._price_vertices

    def contains(self, Q: np.ndarray, tol: float = 1e-9) -> bool:
        return self.polytope.contains(np.asarray(Q, dtype=float), tol)

    def optimize(self, objective: np.ndarray, maximize: bool = True,
                 extra_eq: Optional[Tuple[np.ndarray, np.ndarray]] = None):
        """LP over the polytope, optionally with extra equality rows."""
        A_eq, b_eq = self.polytope.A_eq, self.polytope.b_eq
        if extra_eq is not None:
            A_eq = np.vstack([A_eq, extra_eq[0]])
            b_eq = np.concatenate([b_eq, extra_eq[1]])
        lp = LinearProgram(objective, A_eq=A_eq, b_eq=b_eq, maximize=maximize)
        return solve_lp(lp, self.config)


@lru_cache(maxsize=64)
def _cached_polytope(model: MarketModel, config: Config) -> MartingalePolytope:
    return MartingalePolytope(model, config)


def martingale_polytope(model: MarketModel, config: Optional[Config] = None) -> MartingalePolytope:
    """Shared polytope per (model, config) pair."""
    return _cached_polytope(model, resolve_config(config))


@dataclass
class Nonreplicability:
    """Whether no non-zero combination q f is replicable."""
    passed: bool
    direction: Optional[np.ndarray] = None

    def __bool__(self) -> bool:
        return self.passed


class PriceSet:
    """Arbitrage-free prices {E_Q[f] : Q equivalent martingale measure}."""

    def __init__(self, model: MarketModel, config: Optional[Config] = None):
        self.model = model
        self.config = resolve_config(config)
        self.polytope = martingale_polytope(model, self.config)
        self._bounds: Optional[np.ndarray] = None

    @property
    def dim(self) -> int:
        return self.model.num_derivatives

    @property
    def vertices(self) -> np.ndarray:
        return self.polytope.price_vertices

    def _pin(self, p: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        return self.model.F, as_vector(p, self.dim, 'p')

    def closure_contains(self, p: Sequence[float]) -> bool:
        F, p = self._pin(p)
        result = self.polytope.optimize(np.zeros(self.model.num_states), extra_eq=(F, p))
        return result.status is LpStatus.OPTIMAL

    def contains(self, p: Sequence[float]) -> bool:
        """Membership in the set itself, i.e. the relative interior of its closure."""
        F, p = self._pin(p)
        A_eq, b_eq = self.model.martingale_system()
        result = strict_feasibility(np.vstack([A_eq, F]), np.concatenate([b_eq, p]), config=self.config)
        return result.strictly_positive(self.config.interior_threshold)

    def interior_contains(self, p: Sequence[float]) -> bool:
        """Membership in the full-dimensional interior."""
        return self.is_open and self.contains(p)

    @property
    def is_open(self) -> bool:
        return bool(check_nonreplicability(self.model, self.config))

    def bounds(self) -> np.ndarray:
        """Per-coordinate (min, max) prices, shape (n, 2)."""
        if self._bounds is None:
            rows = []
            for j in range(self.dim):
                lo = self.polytope.optimize(self.model.F[j], maximize=False).value
                hi = self.polytope.optimize(self.model.F[j], maximize=True).value
                rows.append((lo, hi))
            self._bounds = np.array(rows).reshape(self.dim, 2)
        return self._bounds

    def interval(self) -> Tuple[float, float]:
        """Closure endpoints when there is a single derivative."""
        if self.dim != 1:
            raise ValueError(f"Price interval needs exactly one derivative, model has {self.dim}")
        lo, hi = self.bounds()[0]
        return float(lo), float(hi)

    def sample(self, rng: np.random.Generator, count: int) -> np.ndarray:
        """Prices from strictly positive mixtures of the vertex measures."""
        Qs = np.array(self.polytope.vertices)
        weights = rng.dirichlet(np.ones(len(Qs)), size=count)
        return weights @ Qs @ self.model.F.T


def price_set(model: MarketModel, config: Optional[Config] = None) -> PriceSet:
    return PriceSet(model, config)


class ConeDescription:
    """Halfspaces x + q.pi >= 0, one per vertex price pi, describing the closed feasible cone.

    Its polar (the dual domain) is the cone generated by the rows (1, pi).
    """

    def __init__(self, model: MarketModel, config: Optional[Config] = None):
        self.model = model
        self.config = resolve_config(config)
        prices = martingale_polytope(model, self.config).price_vertices
        self.normals = np.hstack([np.ones((prices.shape[0], 1)), prices])

    def slack(self, x: float, q: Sequence[float]) -> np.ndarray:
        q = as_vector(q, self.model.num_derivatives, 'q')
        return self.normals @ np.concatenate([[float(x)], q])

    def contains(self, x: float, q: Sequence[float]) -> bool:
        q = as_vector(q, self.model.num_derivatives, 'q')
        tol = self.config.lp_tolerance * (1.0 + abs(x) + float(np.abs(q).sum()))
        return bool(np.all(self.slack(x, q) >= -tol))

    def interior_contains(self, x: float, q: Sequence[float]) -> bool:
        q = as_vector(q, self.model.num_derivatives, 'q')
        tol = self.config.interior_threshold * (1.0 + abs(x) + float(np.abs(q).sum()))
        return bool(np.all(self.slack(x, q) > tol))

    def polar_contains(self, y: float, r: Sequence[float]) -> bool:
        r = as_vector(r, self.model.num_derivatives, 'r')
        tol = self.config.lp_tolerance
        if y < -tol:
            return False
        if y <= tol:
            return bool(np.all(np.abs(r) <= tol))
        return PriceSet(self.model, self.config).closure_contains(r / y)


def cone_K_contains(model: MarketModel, x: float, q: Sequence[float],
                    config: Optional[Config] = None) -> bool:
    return ConeDescription(model, config).contains(x, q)


def cone_L_contains(model: MarketModel, y: float, r: Sequence[float],
                    config: Optional[Config] = None) -> bool:
    return ConeDescription(model, config).polar_contains(y, r)


def superreplication_price(model: MarketModel, claim: Claim, config: Optional[Config] = None) -> float:
    """sup over martingale measures of E_Q[claim]."""
    values = _claim_values(model, claim)
    result = martingale_polytope(model, config).optimize(values, maximize=True)
    if result.status is not LpStatus.OPTIMAL:
        raise UnboundedPolytopeError(f"Superreplication LP ended with status {result.status.value}")
    return float(result.value)


def superhedging_strategy(model: MarketModel, claim: Claim,
                          config: Optional[Config] = None) -> Tuple[float, TradingStrategy]:
    """Least capital x and a strategy H with x + (H.S)_T >= claim."""
    values = _claim_values(model, claim)
    k = model.G.shape[1]
    objective = np.zeros(1 + k)
    objective[0] = 1.0
    A_ub = -np.hstack([np.ones((model.num_states, 1)), model.G])
    lp = LinearProgram(objective, A_ub=A_ub, b_ub=-values, lower=[None] * (1 + k))
    result = solve_lp(lp, config)
    if result.status is not LpStatus.OPTIMAL:
        raise UnboundedPolytopeError(f"Superhedging LP ended with status {result.status.value}")
    return float(result.x[0]), TradingStrategy.from_vector(model, result.x[1:])


def _farthest_vertex(poly: Polytope, config: Config) -> Tuple[float, np.ndarray]:
    vertices = enumerate_vertices(poly, config)
    if not vertices:
        raise UnboundedPolytopeError("Feasible position set is empty")
    norms = [float(np.linalg.norm(v)) for v in vertices]
    best = int(np.argmax(norms))
    return norms[best], vertices[best]


def largest_feasible_position(model: MarketModel, x: float, p: Sequence[float],
                              config: Optional[Config] = None) -> Tuple[float, np.ndarray]:
    """max |q| over {q : (x - q.p, q) in the closed feasible cone}.

    A replicable claim combination can be held in any size at no risk, so
    the maximum is infinite and the returned vector is that combination.
    """
    config = resolve_config(config)
    p = as_vector(p, model.num_derivatives, 'p')
    nonrep = check_nonreplicability(model, config)
    if not nonrep:
        logger.debug("Largest feasible position is unbounded along %s", nonrep.direction)
        return float('inf'), nonrep.direction
    prices = martingale_polytope(model, config).price_vertices
    poly = Polytope(-(prices - p), np.full(prices.shape[0], float(x)))
    return _farthest_vertex(poly, config)


def cone_radius(model: MarketModel, w: Sequence[float],
                config: Optional[Config] = None) -> Tuple[float, np.ndarray]:
    """sup{|v| : v in the closed feasible cone, v.w <= 1}.

    Infinite when the cone contains a line, i.e. some claim combination is
    replicable; the returned vector then spans that line.
    """
    config = resolve_config(config)
    w = as_vector(w, model.num_derivatives + 1, 'w')
    nonrep = check_nonreplicability(model, config)
    if not nonrep:
        cost = float(martingale_polytope(model, config).price_vertices[0] @ nonrep.direction)
        line = np.concatenate([[-cost], nonrep.direction])
        return float('inf'), -line if line @ w > 0 else line
    cone = ConeDescription(model, config)
    poly = Polytope(np.vstack([-cone.normals, w]),
                    np.concatenate([np.zeros(cone.normals.shape[0]), [1.0]]))
    return _farthest_vertex(poly, config)


def _normalize_direction(direction: np.ndarray) -> np.ndarray:
    nonzero = np.abs(direction) > 1e-9 * np.abs(direction).max()
    direction = direction / np.abs(direction[nonzero]).min()
    if direction[np.flatnonzero(nonzero)[0]] < 0:
        direction = -direction
    direction[~nonzero] = 0.0
    return direction


def price_directions(model: MarketModel, config: Optional[Config] = None) -> Tuple[np.ndarray, np.ndarray]:
    """Orthonormal bases (free, pinned) of the claim combinations.

    Pinned combinations cost the same under every martingale measure, so
    they are replicable; free ones span the directions the price set moves in.
    """
    n = model.num_derivatives
    prices = martingale_polytope(model, config).price_vertices
    spread = prices[1:] - prices[0]
    if n == 0 or spread.shape[0] == 0:
        return np.zeros((n, 0)), np.eye(n)
    _, singular, vt = np.linalg.svd(spread)
    scale = max(1.0, float(np.abs(prices).max()))
    rank = int(np.sum(singular > 1e-9 * scale))
    return vt[:rank].T, vt[rank:].T


def check_nonreplicability(model: MarketModel, config: Optional[Config] = None) -> Nonreplicability:
    """True iff the price polytope is full-dimensional.

    Otherwise returns a combination q whose price is the same under every
    martingale measure.
    """
    if model.num_derivatives == 0:
        return Nonreplicability(True)
    _, pinned = price_directions(model, config)
    if pinned.shape[1] == 0:
        return Nonreplicability(True)
    direction = _normalize_direction(pinned[:, 0])
    logger.debug("Replicable derivative combination %s", direction)
    return Nonreplicability(False, direction)
