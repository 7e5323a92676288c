"""Dense linear programming and small-polytope utilities."""

import itertools
import logging
from dataclasses import dataclass, field
from enum import Enum
from typing import List, Optional, Sequence, Tuple

import numpy as np

from .config import Config, resolve_config
from .errors import (
    DimensionMismatchError,
    DimensionTooLargeError,
    NumericalFailureError,
    UnboundedPolytopeError,
)


logger = logging.getLogger(__name__)

PIVOT_TOLERANCE = 1e-9
REDUCED_COST_TOLERANCE = 1e-10


class LpStatus(Enum):
    """Outcome of a linear program."""
    OPTIMAL = "optimal"
    INFEASIBLE = "infeasible"
    UNBOUNDED = "unbounded"


def _as_matrix(matrix, columns: int) -> np.ndarray:
    if matrix is None:
        return np.zeros((0, columns))
    arr = np.asarray(matrix, dtype=float)
    if arr.size == 0:
        return np.zeros((0, columns))
    return np.atleast_2d(arr)


def _as_rhs(rhs, rows: int) -> np.ndarray:
    if rhs is None:
        return np.zeros(rows)
    return np.atleast_1d(np.asarray(rhs, dtype=float)).reshape(-1)


@dataclass
class LinearProgram:
    """min (or max) c.x  s.t.  A_eq x = b_eq,  A_ub x <= b_ub,  x >= lower.

    A ``None`` entry in ``lower`` marks a free variable; ``lower=None``
    means every variable is non-negative.
    """
    objective: np.ndarray
    A_eq: Optional[np.ndarray] = None
    b_eq: Optional[np.ndarray] = None
    A_ub: Optional[np.ndarray] = None
    b_ub: Optional[np.ndarray] = None
    lower: Optional[Sequence[Optional[float]]] = None
    maximize: bool = False

    def __post_init__(self):
        self.objective = np.atleast_1d(np.asarray(self.objective, dtype=float))
        n = self.objective.shape[0]
        self.A_eq = _as_matrix(self.A_eq, n)
        self.b_eq = _as_rhs(self.b_eq, self.A_eq.shape[0])
        self.A_ub = _as_matrix(self.A_ub, n)
        self.b_ub = _as_rhs(self.b_ub, self.A_ub.shape[0])
        if self.lower is None:
            self.lower = [0.0] * n
        self.lower = [None if (lb is None or np.isneginf(lb)) else float(lb) for lb in self.lower]

        if self.A_eq.shape[1] != n or self.A_ub.shape[1] != n:
            raise DimensionMismatchError("Constraint matrices must have one column per variable")
        if self.A_eq.shape[0] != self.b_eq.shape[0] or self.A_ub.shape[0] != self.b_ub.shape[0]:
            raise DimensionMismatchError("Right-hand sides must have one entry per row")
        if len(self.lower) != n:
            raise DimensionMismatchError("Lower bounds must have one entry per variable")
        if not (np.all(np.isfinite(self.b_eq)) and np.all(np.isfinite(self.b_ub))):
            raise ValueError("Right-hand sides must be finite")

    @property
    def num_variables(self) -> int:
        return self.objective.shape[0]

    def residual(self, x: np.ndarray) -> float:
        """Largest constraint violation of a candidate point."""
        parts = [0.0]
        if self.A_eq.shape[0]:
            parts.append(float(np.max(np.abs(self.A_eq @ x - self.b_eq))))
        if self.A_ub.shape[0]:
            parts.append(float(np.max(self.A_ub @ x - self.b_ub)))
        for xj, lb in zip(x, self.lower):
            if lb is not None:
                parts.append(lb - xj)
        return max(parts)


@dataclass
class LpResult:
    """Solution of a linear program.

    Dual multipliers are sensitivities of the optimal value (in the
    program's own sense) to each row's right-hand side.
    """
    status: LpStatus
    x: Optional[np.ndarray] = None
    value: float = float('nan')
    eq_duals: np.ndarray = field(default_factory=lambda: np.zeros(0))
    ub_duals: np.ndarray = field(default_factory=lambda: np.zeros(0))
    gap: float = 0.0
    residual: float = 0.0
    iterations: int = 0

    @property
    def optimal(self) -> bool:
        return self.status is LpStatus.OPTIMAL


class _Tableau:
    """Two-phase tableau simplex with Bland's rule."""

    def __init__(self, M: np.ndarray, b: np.ndarray, max_iterations: int):
        m, N = M.shape
        self.N = N
        self.max_iterations = max_iterations
        self.iterations = 0
        self.T = np.zeros((m + 1, N + m + 1))
        self.T[:m, :N] = M
        self.T[:m, N:N + m] = np.eye(m)
        self.T[:m, -1] = b
        self.basis = list(range(N, N + m))
        self.rows = list(range(m))
        # phase one: minimise the sum of artificials
        self.T[-1, :N] = -M.sum(axis=0)
        self.T[-1, -1] = -b.sum()

    @property
    def m(self) -> int:
        return len(self.basis)

    def pivot(self, row: int, col: int):
        T = self.T
        T[row] /= T[row, col]
        factors = T[:, col].copy()
        factors[row] = 0.0
        T -= np.outer(factors, T[row])
        T[:, col] = 0.0
        T[row, col] = 1.0
        self.basis[row] = col

    def run(self, allowed: np.ndarray) -> LpStatus:
        """Iterate until optimal or unbounded over the allowed columns."""
        while True:
            if self.iterations >= self.max_iterations:
                raise NumericalFailureError(
                    f"Simplex exceeded {self.max_iterations} iterations"
                )
            reduced = self.T[-1, :-1]
            entering = np.flatnonzero(allowed & (reduced < -REDUCED_COST_TOLERANCE))
            if entering.size == 0:
                return LpStatus.OPTIMAL
            col = int(entering[0])
            column = self.T[:self.m, col]
            positive = np.flatnonzero(column > PIVOT_TOLERANCE)
            if positive.size == 0:
                return LpStatus.UNBOUNDED
            rhs = np.maximum(self.T[positive, -1], 0.0)
            ratios = rhs / column[positive]
            best = ratios.min()
            ties = positive[ratios <= best + 1e-12 * (1.0 + abs(best))]
            row = int(min(ties, key=lambda r: self.basis[r]))
            self.pivot(row, col)
            self.iterations += 1

    def drive_out_artificials(self):
        """Pivot artificials out of the basis, dropping redundant rows."""
        keep = []
        for r in range(self.m):
            if self.basis[r] < self.N:
                keep.append(r)
                continue
            candidates = np.flatnonzero(np.abs(self.T[r, :self.N]) > PIVOT_TOLERANCE)
            if candidates.size:
                self.pivot(r, int(candidates[0]))
                keep.append(r)
        if len(keep) < self.m:
            logger.debug("Dropping %d redundant rows", self.m - len(keep))
        self.T = np.vstack([self.T[keep], self.T[-1:]])
        self.basis = [self.basis[r] for r in keep]
        self.rows = [self.rows[r] for r in keep]

    def set_objective(self, cost: np.ndarray):
        """Install a phase-two cost row for the current basis."""
        width = self.T.shape[1]
        row = np.zeros(width)
        row[:self.N] = cost
        cb = cost[self.basis]
        row -= cb @ self.T[:-1]
        row[self.N:-1] = 0.0
        self.T[-1] = row


def _standard_form(lp: LinearProgram):
    """Rewrite as min c'x' s.t. M x' = b', x' >= 0 (rows scaled, rhs >= 0)."""
    n = lp.num_variables
    cost = -lp.objective if lp.maximize else lp.objective
    columns: List[Tuple[int, float]] = []
    shift = np.zeros(n)
    for j, lb in enumerate(lp.lower):
        if lb is None:
            columns.append((j, 1.0))
            columns.append((j, -1.0))
        else:
            shift[j] = lb
            columns.append((j, 1.0))

    m_eq, m_ub = lp.A_eq.shape[0], lp.A_ub.shape[0]
    A = np.vstack([lp.A_eq, lp.A_ub])
    b = np.concatenate([lp.b_eq, lp.b_ub]) - A @ shift
    k = len(columns)
    M = np.zeros((m_eq + m_ub, k + m_ub))
    c = np.zeros(k + m_ub)
    for idx, (j, sign) in enumerate(columns):
        M[:, idx] = sign * A[:, j]
        c[idx] = sign * cost[j]
    M[m_eq:, k:] = np.eye(m_ub)

    scale = np.abs(M).max(axis=1) if M.size else np.ones(0)
    scale[scale == 0.0] = 1.0
    factor = np.where(b < 0, -1.0, 1.0) / scale
    return M * factor[:, None], b * factor, c, columns, shift, factor


def solve_lp(lp: LinearProgram, config: Optional[Config] = None) -> LpResult:
    """Solve a dense linear program by the two-phase simplex method."""
    config = resolve_config(config)
    M, b, c, columns, shift, factor = _standard_form(lp)
    m, N = M.shape
    n = lp.num_variables
    m_eq = lp.A_eq.shape[0]

    tableau = _Tableau(M, b, config.lp_max_iterations)
    all_columns = np.ones(N + m, dtype=bool)
    tableau.run(all_columns)
    phase_one = -tableau.T[-1, -1]
    if phase_one > config.lp_tolerance * max(1.0, float(np.abs(b).max(initial=0.0))):
        logger.debug("LP infeasible (phase one value %.3e)", phase_one)
        return LpResult(LpStatus.INFEASIBLE, iterations=tableau.iterations)

    tableau.drive_out_artificials()
    tableau.set_objective(c)
    original = np.zeros(N + m, dtype=bool)
    original[:N] = True
    status = tableau.run(original)
    if status is LpStatus.UNBOUNDED:
        return LpResult(LpStatus.UNBOUNDED, iterations=tableau.iterations)

    rows, basis = tableau.rows, tableau.basis
    x_std = np.zeros(N)
    y = np.zeros(m)
    if rows:
        B = M[np.ix_(rows, basis)]
        try:
            x_basic = np.linalg.solve(B, b[rows])
            y_kept = np.linalg.solve(B.T, c[basis])
        except np.linalg.LinAlgError:
            x_basic = tableau.T[:-1, -1]
            y_kept = np.linalg.lstsq(B.T, c[basis], rcond=None)[0]
        x_std[basis] = x_basic
        y[rows] = y_kept
    x_std[(x_std < 0) & (x_std > -config.lp_tolerance)] = 0.0

    x = shift.copy()
    for idx, (j, sign) in enumerate(columns):
        x[j] += sign * x_std[idx]

    gap = abs(float(c @ x_std - b @ y))
    duals = y * factor
    if lp.maximize:
        duals = -duals
    return LpResult(
        status=LpStatus.OPTIMAL,
        x=x,
        value=float(lp.objective @ x),
        eq_duals=duals[:m_eq],
        ub_duals=duals[m_eq:],
        gap=gap,
        residual=lp.residual(x),
        iterations=tableau.iterations,
    )


@dataclass
class Polytope:
    """{x : A x <= b, A_eq x = b_eq} with an optional vertex cache."""
    A: np.ndarray
    b: np.ndarray
    A_eq: Optional[np.ndarray] = None
    b_eq: Optional[np.ndarray] = None
    vertices: Optional[List[np.ndarray]] = None

    def __post_init__(self):
        self.A = np.atleast_2d(np.asarray(self.A, dtype=float))
        self.b = np.atleast_1d(np.asarray(self.b, dtype=float))
        dim = self.A.shape[1]
        self.A_eq = _as_matrix(self.A_eq, dim)
        self.b_eq = _as_rhs(self.b_eq, self.A_eq.shape[0])

    @property
    def dim(self) -> int:
        return self.A.shape[1]

    @classmethod
    def box(cls, lower: Sequence[float], upper: Sequence[float]) -> 'Polytope':
        lower = np.asarray(lower, dtype=float)
        upper = np.asarray(upper, dtype=float)
        eye = np.eye(lower.shape[0])
        return cls(np.vstack([eye, -eye]), np.concatenate([upper, -lower]))

    def contains(self, x: np.ndarray, tol: float = 1e-9) -> bool:
        x = np.asarray(x, dtype=float)
        if np.any(self.A @ x > self.b + tol):
            return False
        if self.A_eq.shape[0] and np.any(np.abs(self.A_eq @ x - self.b_eq) > tol):
            return False
        return True

    def linear_program(self, objective: np.ndarray, maximize: bool = True) -> LinearProgram:
        return LinearProgram(
            objective=objective, A_eq=self.A_eq, b_eq=self.b_eq,
            A_ub=self.A, b_ub=self.b, lower=[None] * self.dim, maximize=maximize,
        )


def _check_bounded(poly: Polytope, config: Config) -> bool:
    """Return False for an empty polytope; raise if unbounded."""
    for j in range(poly.dim):
        for sign in (1.0, -1.0):
            direction = np.zeros(poly.dim)
            direction[j] = sign
            result = solve_lp(poly.linear_program(direction), config)
            if result.status is LpStatus.INFEASIBLE:
                return False
            if result.status is LpStatus.UNBOUNDED:
                raise UnboundedPolytopeError(
                    f"Polytope is unbounded along {'+' if sign > 0 else '-'}x{j}"
                )
    return True


def enumerate_vertices(poly: Polytope, config: Optional[Config] = None) -> List[np.ndarray]:
    """Extreme points by basis enumeration, deduplicated and sorted."""
    config = resolve_config(config)
    if poly.vertices is not None:
        return poly.vertices
    d = poly.dim
    if d > config.max_vertex_dim:
        raise DimensionTooLargeError(
            f"Vertex enumeration limited to {config.max_vertex_dim} dimensions, got {d}"
        )
    if not _check_bounded(poly, config):
        poly.vertices = []
        return poly.vertices

    tol = max(config.lp_tolerance, 1e-9)
    rank_eq = np.linalg.matrix_rank(poly.A_eq) if poly.A_eq.shape[0] else 0
    needed = d - rank_eq
    found: List[np.ndarray] = []
    for active in itertools.combinations(range(poly.A.shape[0]), needed):
        S = np.vstack([poly.A_eq, poly.A[list(active)]])
        rhs = np.concatenate([poly.b_eq, poly.b[list(active)]])
        point, _, rank, _ = np.linalg.lstsq(S, rhs, rcond=None)
        if rank < d:
            continue
        if np.max(np.abs(S @ point - rhs), initial=0.0) > tol * (1.0 + np.abs(rhs).max(initial=0.0)):
            continue
        if not poly.contains(point, tol * (1.0 + np.abs(point).max(initial=0.0))):
            continue
        if any(np.allclose(point, v, atol=1e-8, rtol=1e-9) for v in found):
            continue
        found.append(point)

    found.sort(key=lambda v: tuple(np.round(v, 9)))
    poly.vertices = found
    logger.debug("Enumerated %d vertices in dimension %d", len(found), d)
    return found


@dataclass
class StrictFeasibility:
    """Largest uniform slack of {A x = b, x >= 0}."""
    feasible: bool
    value: float
    witness: Optional[np.ndarray] = None

    def strictly_positive(self, threshold: float) -> bool:
        return self.feasible and self.value > threshold


def strict_feasibility(A_eq: np.ndarray, b_eq: np.ndarray, cap: float = 1.0,
                       config: Optional[Config] = None) -> StrictFeasibility:
    """Maximise t subject to A x = b, x_i >= t, 0 <= t <= cap."""
    A_eq = np.atleast_2d(np.asarray(A_eq, dtype=float))
    b_eq = np.atleast_1d(np.asarray(b_eq, dtype=float))
    n = A_eq.shape[1]
    objective = np.zeros(n + 1)
    objective[-1] = 1.0
    A_ub = np.zeros((n + 1, n + 1))
    A_ub[:n, :n] = -np.eye(n)
    A_ub[:n, -1] = 1.0
    A_ub[n, -1] = 1.0
    b_ub = np.zeros(n + 1)
    b_ub[n] = cap
    lp = LinearProgram(
        objective=objective,
        A_eq=np.hstack([A_eq, np.zeros((A_eq.shape[0], 1))]),
        b_eq=b_eq, A_ub=A_ub, b_ub=b_ub, maximize=True,
    )
    result = solve_lp(lp, config)
    if result.status is LpStatus.INFEASIBLE:
        return StrictFeasibility(False, float('-inf'))
    return StrictFeasibility(True, max(result.value, 0.0), result.x[:n])
