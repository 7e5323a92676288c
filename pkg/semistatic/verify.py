"""Numerical checks of the structural properties of the semi-static problem."""

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Any, Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np
from scipy import optimize
from sortedcontainers import SortedDict

from .config import Config, resolve_config
from .dual import solve_v, solve_v_tilde
from .errors import DomainError, SolverError
from .geometry import ConeDescription, check_nonreplicability, largest_feasible_position, price_set
from .lp_core import LinearProgram, LpStatus, Polytope, enumerate_vertices, solve_lp
from .market import MarketModel, nonconvex_example_market
from .primal import SolveStatus, solve_static_decomposition, solve_u, solve_u_tilde
from .utility import PiecewiseLinearUtility, PowerUtility, Utility, nonconvex_example_utility
from .utils import as_vector, deserialize, format_float, serialize


logger = logging.getLogger(__name__)


@dataclass
class Check:
    """One named residual compared against a tolerance."""
    name: str
    residual: float
    tolerance: float
    passed: bool
    note: str = ''
    skipped: bool = False

    @classmethod
    def measure(cls, name: str, residual: float, tolerance: float, note: str = '') -> 'Check':
        residual = float(residual)
        return cls(name, residual, float(tolerance), bool(residual <= tolerance), note)

    @classmethod
    def skip(cls, name: str, reason: str) -> 'Check':
        return cls(name, float('nan'), float('nan'), False, reason, skipped=True)

    def as_dict(self) -> Dict[str, Any]:
        return {
            'name': self.name,
            'residual': self.residual,
            'tolerance': self.tolerance,
            'passed': self.passed,
            'note': self.note,
            'skipped': self.skipped,
        }


class VerificationReport:
    """Named checks; passes iff every check that ran passed."""

    CSV_HEADER = ['check', 'residual', 'tolerance', 'passed', 'skipped', 'note']

    def __init__(self, title: str = '', checks: Optional[Iterable[Check]] = None):
        self.title = title
        self.checks: List[Check] = []
        for check in checks or ():
            self.add(check)

    def add(self, check: Check) -> Check:
        if not check.skipped and not check.passed:
            logger.warning("Check %s failed: residual %.3e > tolerance %.3e %s",
                           check.name, check.residual, check.tolerance, check.note)
        self.checks.append(check)
        return check

    def extend(self, other: 'VerificationReport', prefix: str = '') -> 'VerificationReport':
        for check in other.checks:
            name = f"{prefix}{check.name}" if prefix else check.name
            self.checks.append(Check(name, check.residual, check.tolerance, check.passed,
                                     check.note, check.skipped))
        return self

    @property
    def passed(self) -> bool:
        return all(check.passed for check in self.checks if not check.skipped)

    def failures(self) -> List[Check]:
        return [check for check in self.checks if not check.skipped and not check.passed]

    def __getitem__(self, name: str) -> Check:
        for check in self.checks:
            if check.name == name:
                return check
        raise KeyError(name)

    def __contains__(self, name: str) -> bool:
        return any(check.name == name for check in self.checks)

    def to_dict(self) -> Dict[str, Any]:
        return {'title': self.title, 'passed': self.passed,
                'checks': [check.as_dict() for check in self.checks]}

    def to_bytes(self) -> bytes:
        return serialize(self.to_dict())

    @classmethod
    def from_bytes(cls, data: bytes) -> 'VerificationReport':
        raw = deserialize(data)
        report = cls(raw.get('title', ''))
        report.checks = [Check(**item) for item in raw['checks']]
        return report

    def csv_rows(self) -> List[List[str]]:
        rows = []
        for check in self.checks:
            rows.append([check.name, format_float(check.residual), format_float(check.tolerance),
                         str(check.passed).lower(), str(check.skipped).lower(), check.note])
        return rows

    def summary(self) -> str:
        lines = [f"{self.title or 'verification'}: {'PASS' if self.passed else 'FAIL'}"]
        for check in self.checks:
            if check.skipped:
                lines.append(f"  [skip] {check.name}: {check.note}")
            else:
                mark = 'ok' if check.passed else 'FAIL'
                lines.append(f"  [{mark}] {check.name}: residual {check.residual:.3e} "
                             f"(tol {check.tolerance:.1e}) {check.note}".rstrip())
        return '\n'.join(lines)


def first_order_check(model: MarketModel, utility: Utility, x: float, p: Sequence[float],
                      config: Optional[Config] = None) -> VerificationReport:
    """Dual density equals U'(optimal wealth) and E[h g] = x y."""
    config = resolve_config(config)
    p = as_vector(p, model.num_derivatives, 'p')
    report = VerificationReport('first_order')
    primal = solve_u_tilde(model, utility, x, p, config)
    budget = abs(float(model.P @ (primal.density * primal.wealth.values)) - x * primal.marginal)

    if isinstance(utility, PiecewiseLinearUtility):
        worst = 0.0
        knots = utility.breakpoints
        for h, g in zip(primal.density, primal.wealth.values):
            nearest = knots[int(np.argmin(np.abs(knots - g)))]
            g = nearest if abs(g - nearest) <= 1e-9 * (1.0 + abs(g)) else max(float(g), 0.0)
            right, left = utility.subdifferential(float(g))
            worst = max(worst, right - h, h - left)
        report.add(Check.skip('first_order.marginal', 'utility has kinks; subdifferential membership checked'))
        report.add(Check.measure('first_order.subdifferential', max(worst, 0.0), 1e-6))
        report.add(Check.measure('first_order.budget', budget, 1e-6))
        return report

    if primal.status is not SolveStatus.INTERIOR:
        report.add(Check.skip('first_order.marginal', f"primal optimum is {primal.status.value}"))
        return report
    dual = solve_v_tilde(model, utility, primal.marginal, p, config)
    marginal_gap = float(np.max(np.abs(dual.density - np.asarray(utility.marginal(primal.wealth.values)))))
    budget_dual = abs(float(model.P @ (dual.density * primal.wealth.values)) - x * primal.marginal)
    report.add(Check.measure('first_order.marginal', marginal_gap, 1e-6))
    report.add(Check.measure('first_order.budget', max(budget, budget_dual), 1e-6))
    return report


def optimizer_consistency(model: MarketModel, utility: Utility, x: float, p: Sequence[float],
                          config: Optional[Config] = None) -> VerificationReport:
    """(x - q.p, q) equals minus the gradient of v at (y, y p)."""
    config = resolve_config(config)
    p = as_vector(p, model.num_derivatives, 'p')
    report = VerificationReport('optimizer_consistency')
    if not check_nonreplicability(model, config):
        report.add(Check.skip('consistency.gradient', 'optimal position is not unique'))
        return report

    primal = solve_u_tilde(model, utility, x, p, config)
    y = primal.marginal
    dual = solve_v(model, utility, y, y * p, config)
    endowment = np.concatenate([[x - float(primal.position @ p)], primal.position])

    if isinstance(utility, PiecewiseLinearUtility):
        gap = abs(dual.value + x * y - primal.value)
        g, h = primal.wealth.values, primal.density
        fenchel = np.abs(np.asarray(utility.value(g)) - np.asarray(utility.conjugate(h)) - g * h)
        report.add(Check.measure('consistency.strong_duality', gap, 1e-6 * (1.0 + abs(primal.value))))
        report.add(Check.measure('consistency.fenchel_young', float(fenchel.max()), 1e-6,
                                 'certificate for a kinked utility'))
        return report

    residual = float(np.linalg.norm(endowment + dual.gradient))
    report.add(Check.measure('consistency.gradient', residual, 1e-5))
    return report


def gradient_relation_check(model: MarketModel, utility: Utility, x: float, p: Sequence[float],
                            step: float = 1e-4, config: Optional[Config] = None) -> VerificationReport:
    """Central differences of the value in p against -(d/dx value) q."""
    config = resolve_config(config)
    p = as_vector(p, model.num_derivatives, 'p')
    report = VerificationReport('gradient_relation')
    if not utility.smooth:
        report.add(Check.skip('gradient.price', 'utility is not differentiable'))
        return report
    prices = price_set(model, config)
    base = solve_u_tilde(model, utility, x, p, config)
    expected = -base.marginal * base.position
    numeric = np.zeros(model.num_derivatives)
    for j in range(model.num_derivatives):
        bump = np.zeros_like(p)
        bump[j] = step
        if not (prices.contains(p + bump) and prices.contains(p - bump)):
            report.add(Check.skip('gradient.price', 'perturbed price leaves the arbitrage-free set'))
            return report
        up = solve_u_tilde(model, utility, x, p + bump, config).value
        down = solve_u_tilde(model, utility, x, p - bump, config).value
        forward, backward = (up - base.value) / step, (base.value - down) / step
        if abs(forward - backward) > 1e3 * step * max(1.0, abs(forward)):
            report.add(Check.skip('gradient.price', f"kink detected in coordinate {j}"))
            return report
        numeric[j] = (up - down) / (2 * step)
    residual = float(np.linalg.norm(numeric - expected))
    report.add(Check.measure('gradient.price', residual, max(1e-4, step ** 2)))
    return report


def radial_smoothness_check(model: MarketModel, utility: Utility, x: float, q: Sequence[float],
                            step: float = 1e-5, config: Optional[Config] = None) -> VerificationReport:
    """t -> u(t x, t q) is differentiable at t = 1 with derivative E[U'(g) g].

    Only meaningful for (x, q) strictly inside the feasible cone.
    """
    config = resolve_config(config)
    q = as_vector(q, model.num_derivatives, 'q')
    report = VerificationReport('radial')
    if not utility.smooth:
        report.add(Check.skip('radial.one_sided', 'utility is not differentiable'))
        return report
    if not ConeDescription(model, config).interior_contains(x, q):
        report.add(Check.skip('radial.one_sided', 'endowment is not inside the open feasible cone'))
        return report
    base = solve_u(model, utility, x, q, config)
    if base.status is not SolveStatus.INTERIOR:
        report.add(Check.skip('radial.one_sided', f"optimum is {base.status.value}"))
        return report

    up = solve_u(model, utility, (1.0 + step) * x, (1.0 + step) * q, config).value
    down = solve_u(model, utility, (1.0 - step) * x, (1.0 - step) * q, config).value
    forward, backward = (up - base.value) / step, (base.value - down) / step
    envelope = float(model.P @ (base.density * base.wealth.values))
    scale = max(1.0, abs(envelope))
    report.add(Check.measure('radial.one_sided', abs(forward - backward) / scale, 1e-4,
                             f"forward {forward:.8g}, backward {backward:.8g}"))
    report.add(Check.measure('radial.derivative', abs(0.5 * (forward + backward) - envelope) / scale, 1e-5,
                             f"E[U'(g) g] = {envelope:.8g}"))
    return report


class MarginalPriceSet:
    """Prices at which an agent with endowment (x, q) does not trade."""

    def __init__(self, model: MarketModel, utility: Utility, x: float, q: Sequence[float],
                 config: Optional[Config] = None):
        if model.num_derivatives == 0:
            raise ValueError("Marginal prices need at least one derivative")
        self.model = model
        self.utility = utility
        self.x = float(x)
        self.q = as_vector(q, model.num_derivatives, 'q')
        self.config = resolve_config(config)
        self.prices = price_set(model, self.config)
        self.reference = solve_u(model, utility, self.x, self.q, self.config)
        if not np.isfinite(self.reference.value):
            raise DomainError(f"Endowment ({x}, {self.q.tolist()}) has no finite utility")

    def excess_position(self, p: Sequence[float]) -> Tuple[float, float]:
        """(q~ - q, zero tolerance) for a single derivative at price p."""
        p = as_vector(p, 1, 'p')
        wealth = self.x + float(self.q @ p)
        solution = solve_u_tilde(self.model, self.utility, wealth, p, self.config)
        m, _ = largest_feasible_position(self.model, wealth, p, self.config)
        return float(solution.position[0] - self.q[0]), self.config.q_tolerance_at(m)

    def _bisect(self, left: float, right: float, predicate) -> float:
        """Boundary between predicate False at left and True at right."""
        for _ in range(self.config.bisection_max_iterations):
            if right - left <= self.config.bisection_width:
                break
            mid = 0.5 * (left + right)
            if predicate(mid):
                right = mid
            else:
                left = mid
        return 0.5 * (left + right)

    def locate(self) -> Tuple[float, float]:
        """Endpoints [a, b] by bisection on the sign of the excess position."""
        if self.model.num_derivatives != 1:
            raise ValueError("Interval form needs exactly one derivative")
        lo, hi = self.prices.interval()
        margin = 1e-3 * (hi - lo)
        lo, hi = lo + margin, hi - margin

        def not_buying(p: float) -> bool:
            excess, tol = self.excess_position([p])
            return excess <= tol

        def selling(p: float) -> bool:
            excess, tol = self.excess_position([p])
            return excess < -tol

        a = lo if not_buying(lo) else (hi if not not_buying(hi) else self._bisect(lo, hi, not_buying))
        b = hi if not selling(hi) else (lo if selling(lo) else self._bisect(lo, hi, selling))
        return a, max(a, b)

    def contains(self, p: Sequence[float]) -> bool:
        """Necessary conditions: no utility gain from trading at p, and p is a local minimiser."""
        p = as_vector(p, self.model.num_derivatives, 'p')
        if not self.prices.contains(p):
            return False
        tol = 1e-8 * (1.0 + abs(self.reference.value))

        def shifted(price: np.ndarray) -> float:
            return solve_u_tilde(self.model, self.utility, self.x + float(self.q @ price), price,
                                 self.config).value

        at_p = shifted(p)
        if at_p > self.reference.value + tol:
            return False
        bounds = self.prices.bounds()
        for j in range(self.model.num_derivatives):
            step = 1e-3 * (bounds[j, 1] - bounds[j, 0])
            for sign in (1.0, -1.0):
                other = p.copy()
                other[j] += sign * step
                if self.prices.contains(other) and shifted(other) < at_p - tol:
                    return False
        return True


def marginal_price_set(model: MarketModel, utility: Utility, x: float, q: Sequence[float],
                       config: Optional[Config] = None) -> MarginalPriceSet:
    return MarginalPriceSet(model, utility, x, q, config)


@dataclass
class SweepRow:
    p: float
    value: float
    position: np.ndarray
    marginal: float
    m: float


@dataclass
class SweepReport:
    """Rows of a one-dimensional price sweep, kept sorted by price."""
    x: float
    lower: float
    upper: float
    rows: SortedDict = field(default_factory=SortedDict)
    flat: Optional[Tuple[float, float]] = None
    shape: Tuple[str, ...] = ()
    findings: List[str] = field(default_factory=list)
    divergence: List[float] = field(default_factory=list)

    def add(self, row: SweepRow):
        self.rows[row.p] = row

    @property
    def header(self) -> List[str]:
        first = next(iter(self.rows.values()), None)
        n = 1 if first is None else len(first.position)
        return ['p', 'u_tilde'] + [f'q_tilde_{j + 1}' for j in range(n)] + ['dx_u', 'm']

    def csv_rows(self) -> List[List[str]]:
        out = []
        for row in self.rows.values():
            out.append([format_float(row.p), format_float(row.value)]
                       + [format_float(v) for v in row.position]
                       + [format_float(row.marginal), format_float(row.m)])
        return out

    def check(self) -> VerificationReport:
        report = VerificationReport('sweep')
        report.add(Check.measure('sweep.shape', float(len(self.findings)), 0.0,
                                 '; '.join(self.findings) or '/'.join(self.shape)))
        return report


def _classify(report: SweepReport, locate_zero, config: Config):
    prices = list(report.rows.keys())
    rows = list(report.rows.values())
    q = np.array([row.position[0] for row in rows])
    tol = np.array([config.q_tolerance_at(row.m) for row in rows])
    flat = np.flatnonzero(np.abs(q) <= tol)

    if flat.size:
        if flat[-1] - flat[0] + 1 != flat.size:
            report.findings.append("flat run is not contiguous")
        a, b = prices[flat[0]], prices[flat[-1]]
    else:
        crossing = [i for i in range(len(rows) - 1) if q[i] > tol[i] and q[i + 1] < -tol[i + 1]]
        if crossing:
            i = crossing[0]
            a = b = locate_zero(prices[i], prices[i + 1])
        elif np.all(q > tol):
            a = b = report.upper
        else:
            a = b = report.lower
    report.flat = (a, b)

    for i, (p, row) in enumerate(zip(prices, rows)):
        if p < a and not q[i] > tol[i]:
            report.findings.append(f"position not positive at p={p:.6g} before the flat interval")
        if p > b and not q[i] < -tol[i]:
            report.findings.append(f"position not negative at p={p:.6g} after the flat interval")
    for i in range(len(rows) - 1):
        left, right = prices[i], prices[i + 1]
        diff = rows[i + 1].value - rows[i].value
        if right <= a and diff >= config.noise_floor:
            report.findings.append(f"value not decreasing on [{left:.6g}, {right:.6g}]")
        elif left >= b and diff <= -config.noise_floor:
            report.findings.append(f"value not increasing on [{left:.6g}, {right:.6g}]")
        elif a <= left and right <= b and abs(diff) > config.noise_floor:
            report.findings.append(f"value not constant on [{left:.6g}, {right:.6g}]")

    segments = []
    if prices[0] < a:
        segments.append('decreasing')
    if prices[0] <= b and a <= prices[-1]:
        segments.append('flat')
    if prices[-1] > b:
        segments.append('increasing')
    report.shape = tuple(segments)
    report.divergence = [p for p, row in zip(prices, rows) if row.m > config.divergence_m_threshold]


def sweep_1d(model: MarketModel, utility: Utility, x: float, grid: Sequence[float],
             config: Optional[Config] = None) -> SweepReport:
    """Semi-static value, position, marginal value and m along a price grid."""
    config = resolve_config(config)
    if model.num_derivatives != 1:
        raise ValueError(f"Sweep needs exactly one derivative, model has {model.num_derivatives}")
    prices = price_set(model, config)
    grid = sorted(float(p) for p in grid)
    if not grid:
        raise ValueError("Sweep grid is empty")
    lower, upper = prices.interval()
    report = SweepReport(float(x), lower, upper)

    def evaluate(p: float) -> SweepRow:
        solution = solve_u_tilde(model, utility, x, [p], config)
        m, _ = largest_feasible_position(model, x, [p], config)
        return SweepRow(p, solution.value, solution.position, solution.marginal, m)

    with ThreadPoolExecutor(max_workers=max(1, config.threads)) as pool:
        for row in pool.map(evaluate, grid):
            report.add(row)

    marginal = MarginalPriceSet(model, utility, x, [0.0], config)

    def locate_zero(left: float, right: float) -> float:
        return marginal._bisect(left, right, lambda p: marginal.excess_position([p])[0] < 0)

    _classify(report, locate_zero, config)
    logger.info("Sweep over %d prices: shape %s, flat interval %s", len(grid), report.shape, report.flat)
    return report


def linear_grid(lower: float, upper: float, count: int) -> List[float]:
    if count < 2:
        raise ValueError("Grid needs at least two points")
    return [float(v) for v in np.linspace(lower, upper, count)]


def divergence_probe(model: MarketModel, utility: Utility, x: float,
                     path: Optional[Sequence[Sequence[float]]] = None,
                     config: Optional[Config] = None) -> VerificationReport:
    """Value, |position| and m grow along a path towards the boundary of the price set."""
    config = resolve_config(config)
    report = VerificationReport('divergence')
    if not utility.unbounded_above:
        report.add(Check.skip('divergence.trend', 'utility is bounded above'))
        return report
    if not utility.smooth:
        report.add(Check.skip('divergence.trend', 'kinked utility is affine past its last breakpoint; '
                                                     'its growth does not show on a boundary path'))
        return report
    if path is None:
        if model.num_derivatives != 1:
            raise ValueError("Default path needs exactly one derivative")
        _, upper = price_set(model, config).interval()
        path = [[upper - 10.0 ** (-k)] for k in range(1, 7)]

    values, positions, radii = [], [], []
    for p in path:
        solution = solve_u_tilde(model, utility, x, p, config)
        values.append(solution.value)
        positions.append(float(np.linalg.norm(solution.position)))
        radii.append(largest_feasible_position(model, x, p, config)[0])

    for name, series in (('value', values), ('position', positions), ('m', radii)):
        steps = np.diff(series[-5:])
        report.add(Check.measure(f'divergence.{name}_increasing', float(np.sum(steps <= 0)), 0.0,
                                 'non-increasing steps along the path'))
    report.add(Check.measure('divergence.value_gain', config.divergence_utility_gain - (values[-1] - values[0]),
                             0.0, f"gain {values[-1] - values[0]:.4g}"))
    report.add(Check.measure('divergence.position_size', config.divergence_position_threshold - positions[-1],
                             0.0, f"|q| = {positions[-1]:.4g}"))
    report.add(Check.measure('divergence.m_size', config.divergence_m_threshold - radii[-1],
                             0.0, f"m = {radii[-1]:.4g}"))
    return report


def bipolarity_probe(model: MarketModel, samples: int = 100, p: Optional[Sequence[float]] = None,
                     seed: Optional[int] = None, config: Optional[Config] = None) -> VerificationReport:
    """E[g h] <= 1 between budget-feasible wealths and scaled pricing densities."""
    config = resolve_config(config)
    rng = np.random.default_rng(config.random_seed if seed is None else seed)
    n = model.num_derivatives
    if p is None:
        p = model.F @ model.equivalent_measure
    p = as_vector(p, n, 'p')
    report = VerificationReport('bipolarity')
    P = model.P
    A = np.hstack([model.F.T - p, model.G])
    N, k = A.shape

    A_eq, b_eq = model.martingale_system()
    slice_poly = Polytope(-np.eye(N), np.zeros(N), np.vstack([A_eq, model.F]), np.concatenate([b_eq, p]))
    measures = enumerate_vertices(slice_poly, config)
    densities = [Q / P for Q in measures]

    def feasible_reach() -> Tuple[np.ndarray, float]:
        reach = A @ rng.normal(size=k)
        falling = reach < 0
        return reach, float(np.min(-1.0 / reach[falling])) if np.any(falling) else 1.0

    worst = -np.inf
    for _ in range(samples):
        reach, limit = feasible_reach()
        wealth = (1.0 + rng.uniform(0.0, limit) * reach) * rng.uniform(0.0, 1.0, size=N)
        weights = rng.dirichlet(np.ones(len(densities)))
        h = rng.uniform(0.0, 1.0) * sum(w * d for w, d in zip(weights, densities))
        worst = max(worst, float(P @ (wealth * h)))
    unit = max(float(P @ d) for d in densities)
    worst = max(worst, unit)
    report.add(Check.measure('bipolarity.polar', worst - 1.0, 1e-9, f"max E[gh] = {worst:.12g}"))

    reach, limit = feasible_reach()
    violator = 1.01 * (1.0 + 0.5 * limit * reach)
    detected = max(float(P @ (violator * d)) for d in densities)
    report.add(Check.measure('bipolarity.separation', max(0.0, 1.0 - detected), 0.0,
                             f"max E[gh] = {detected:.6g} for a 1% budget violation"))
    return report


def nonconvexity_counterexample(deltas: Sequence[float] = (1e-2, 1e-3, 1e-4), step: float = 1e-3,
                                config: Optional[Config] = None) -> VerificationReport:
    """One-sided slopes of the value in p at 0 and midpoint convexity failure."""
    config = resolve_config(config)
    model = nonconvex_example_market()
    utility = nonconvex_example_utility()
    report = VerificationReport('nonconvexity')

    def value(p: float) -> float:
        return solve_u_tilde(model, utility, 2.0, [p], config).value

    at_zero = value(0.0)
    strict = 1e-9 * (1.0 + abs(at_zero))
    right = (value(step) - at_zero) / step
    left = (at_zero - value(-step)) / step
    report.add(Check.measure('nonconvexity.value_at_zero', abs(at_zero - 4.0 / 3.0), 1e-9,
                             f"value {at_zero:.12g}"))
    report.add(Check.measure('nonconvexity.right_slope', abs(right + 4.0 / 3.0), 1e-2, f"slope {right:.6f}"))
    report.add(Check.measure('nonconvexity.left_slope', abs(left + 2.0 / 3.0), 1e-2, f"slope {left:.6f}"))
    for delta in deltas:
        midpoint = 0.5 * (value(-delta) + value(delta))
        report.add(Check.measure(f'nonconvexity.midpoint[{delta:g}]', midpoint - at_zero, -strict,
                                 f"excess {at_zero - midpoint:.3e}"))
    return report


def power_identity_check(model: MarketModel, alpha: float, x: float, p: Sequence[float],
                         config: Optional[Config] = None) -> VerificationReport:
    """Value against (x^a / a)(-b v~(1, p))^(1 - a) and positive homogeneity in x."""
    config = resolve_config(config)
    utility = PowerUtility(alpha)
    report = VerificationReport('power_identity')
    primal = solve_u_tilde(model, utility, x, p, config)
    dual = solve_v_tilde(model, utility, 1.0, p, config)
    closed_form = (x ** alpha / alpha) * (-utility.beta * dual.value) ** (1.0 - alpha)
    report.add(Check.measure('power.identity', abs(primal.value - closed_form) / abs(closed_form), 1e-6))
    doubled = solve_u_tilde(model, utility, 2.0 * x, p, config).value
    report.add(Check.measure('power.homogeneity', abs(doubled / primal.value - 2.0 ** alpha), 1e-6))
    return report


def stability_probe(model: MarketModel, utility: Utility, x: float, p: Sequence[float],
                    radius: float = 1e-2, directions: int = 4, levels: int = 5,
                    config: Optional[Config] = None) -> VerificationReport:
    """Deviations of the optimizers shrink as the perturbation radius shrinks."""
    config = resolve_config(config)
    p = as_vector(p, model.num_derivatives, 'p')
    report = VerificationReport('stability')
    prices = price_set(model, config)
    rng = np.random.default_rng(config.random_seed)
    units = rng.normal(size=(directions, 1 + model.num_derivatives))
    units /= np.linalg.norm(units, axis=1, keepdims=True)
    base = solve_u_tilde(model, utility, x, p, config)

    radii = [radius * 10.0 ** (-k) for k in range(levels)]
    deviations = np.zeros((len(radii), 4))
    for i, r in enumerate(radii):
        for unit in units:
            x_new, p_new = x + r * unit[0], p + r * unit[1:]
            if x_new <= 0 or (model.num_derivatives and not prices.contains(p_new)):
                report.add(Check.skip('stability.monotone', f"radius {r:g} leaves the domain"))
                return report
            moved = solve_u_tilde(model, utility, x_new, p_new, config)
            deviations[i] = np.maximum(deviations[i], [
                float(np.max(np.abs(moved.position - base.position), initial=0.0)),
                float(np.max(np.abs(moved.wealth.values - base.wealth.values))),
                abs(moved.value - base.value),
                abs(moved.marginal - base.marginal),
            ])

    growth = np.diff(deviations, axis=0)
    worst = float(growth.max(initial=0.0))
    names = ('position', 'wealth', 'value', 'marginal')
    note = ', '.join(f"{name} {deviations[-1, j]:.2e}" for j, name in enumerate(names))
    report.add(Check.measure('stability.monotone', worst, 2 * config.noise_floor, note))
    return report


def decomposition_check(model: MarketModel, utility: Utility, x: float, p: Sequence[float],
                        config: Optional[Config] = None) -> VerificationReport:
    """The joint problem equals sup_q u(x - q.p, q) with the same position and wealth."""
    config = resolve_config(config)
    p = as_vector(p, model.num_derivatives, 'p')
    report = VerificationReport('decomposition')
    if not utility.smooth:
        report.add(Check.skip('decomposition.value', 'direct search needs a smooth utility'))
        return report
    joint = solve_u_tilde(model, utility, x, p, config)
    static = solve_static_decomposition(model, utility, x, p, config)
    report.add(Check.measure('decomposition.value', abs(joint.value - static.value),
                             1e-7 * (1.0 + abs(joint.value))))
    if not joint.unique:
        report.add(Check.skip('decomposition.position', 'optimal position is not unique'))
        return report
    report.add(Check.measure('decomposition.position',
                             float(np.max(np.abs(joint.position - static.position), initial=0.0)), 1e-4))
    report.add(Check.measure('decomposition.wealth',
                             float(np.max(np.abs(joint.wealth.values - static.inner.wealth.values))), 1e-4))
    return report


def duality_gap(model: MarketModel, utility: Utility, x: float, p: Sequence[float],
                config: Optional[Config] = None) -> VerificationReport:
    """min_y (v~(y, p) + x y) against the primal value, plus sampled weak duality."""
    config = resolve_config(config)
    p = as_vector(p, model.num_derivatives, 'p')
    report = VerificationReport('duality')
    primal = solve_u_tilde(model, utility, x, p, config)
    y_star = primal.marginal

    def bound(y: float) -> float:
        value = solve_v_tilde(model, utility, y, p, config).value
        return value + x * y if np.isfinite(value) else 1e300

    result = optimize.minimize_scalar(bound, bounds=(0.25 * y_star, 4.0 * y_star), method='bounded',
                                      options={'xatol': 1e-10 * y_star})
    best = min(float(result.fun), bound(y_star))
    report.add(Check.measure('duality.strong', abs(best - primal.value) / (1.0 + abs(primal.value)), 1e-7))

    rng = np.random.default_rng(config.random_seed)
    worst = max(primal.value - bound(y) for y in y_star * np.exp(rng.uniform(-1.5, 1.5, size=10)))
    report.add(Check.measure('duality.weak', worst, 1e-9 * (1.0 + abs(primal.value))))
    return report


def dual_boundary_probe(model: MarketModel, utility: Utility, y: float = 1.0, levels: int = 5,
                        config: Optional[Config] = None) -> VerificationReport:
    """Difference quotients of v towards the interior fall without bound near the boundary."""
    config = resolve_config(config)
    report = VerificationReport('dual_boundary')
    if model.num_derivatives != 1:
        report.add(Check.skip('dual_boundary.trend', 'needs exactly one derivative'))
        return report
    _, upper = price_set(model, config).interval()
    quotients = []
    for k in range(1, levels + 1):
        gap = 10.0 ** (-k)
        r = y * (upper - gap)
        h = 0.1 * gap * y
        near = solve_v(model, utility, y, [r], config).value
        inner = solve_v(model, utility, y, [r - h], config).value
        quotients.append((inner - near) / h)
    steps = np.diff(quotients)
    report.add(Check.measure('dual_boundary.decreasing', float(max(0.0, steps.max(initial=-1.0))), 0.0))
    report.add(Check.measure('dual_boundary.magnitude', quotients[-1] + 1e3, 0.0,
                             f"last quotient {quotients[-1]:.4g}"))
    return report


def position_convexity_probe(model: MarketModel, x: float = 1.0, samples: int = 100,
                             seed: Optional[int] = None, config: Optional[Config] = None) -> VerificationReport:
    """Midpoint convexity of the largest feasible position in p."""
    config = resolve_config(config)
    report = VerificationReport('position_convexity')
    if not check_nonreplicability(model, config):
        report.add(Check.skip('position.midpoint_convexity', 'a replicable claim combination makes m infinite'))
        return report
    rng = np.random.default_rng(config.random_seed if seed is None else seed)
    prices = price_set(model, config)
    worst = -np.inf
    pairs = zip(prices.sample(rng, samples), prices.sample(rng, samples))
    for p0, p1 in pairs:
        m0 = largest_feasible_position(model, x, p0, config)[0]
        m1 = largest_feasible_position(model, x, p1, config)[0]
        mid = largest_feasible_position(model, x, 0.5 * (p0 + p1), config)[0]
        worst = max(worst, mid - 0.5 * (m0 + m1))
    report.add(Check.measure('position.midpoint_convexity', worst, 1e-9))
    return report


def brute_force_u_tilde(model: MarketModel, utility: Utility, x: float, p: Sequence[float],
                        points: int = 41, rounds: int = 14) -> float:
    """Nested grid search over (q, H) for one-period markets with one stock and one claim."""
    if model.horizon != 1 or model.num_stocks != 1 or model.num_derivatives != 1:
        raise ValueError("Brute force oracle handles one period, one stock and one claim")
    p = as_vector(p, 1, 'p')
    A = np.hstack([model.F.T - p, model.G])
    base = np.full(model.num_states, float(x))
    box = []
    for j in range(2):
        limits = []
        for maximize in (False, True):
            lp = LinearProgram(np.eye(2)[j], A_ub=-A, b_ub=base, lower=[None, None], maximize=maximize)
            result = solve_lp(lp)
            if result.status is not LpStatus.OPTIMAL:
                raise SolverError("Feasible strategy set is unbounded")
            limits.append(result.value)
        box.append(limits)
    box = np.array(box)

    best_value, best_point = -np.inf, box.mean(axis=1)
    for _ in range(rounds):
        qs = np.linspace(box[0, 0], box[0, 1], points)
        hs = np.linspace(box[1, 0], box[1, 1], points)
        Q, Hh = np.meshgrid(qs, hs, indexing='ij')
        wealth = base[None, None, :] + Q[..., None] * A[:, 0] + Hh[..., None] * A[:, 1]
        with np.errstate(divide='ignore', invalid='ignore'):
            values = np.where(np.all(wealth >= 0, axis=-1),
                              (np.asarray(utility.value(np.maximum(wealth, 0.0))) * model.P).sum(axis=-1),
                              -np.inf)
        values = np.where(np.isnan(values), -np.inf, values)
        idx = np.unravel_index(int(np.argmax(values)), values.shape)
        if values[idx] > best_value:
            best_value, best_point = float(values[idx]), np.array([qs[idx[0]], hs[idx[1]]])
        width = (box[:, 1] - box[:, 0]) / 4.0
        box = np.stack([best_point - width / 2.0, best_point + width / 2.0], axis=1)
    return best_value


def oracle_equivalence(model: MarketModel, utility: Utility, x: float, p: Sequence[float],
                       config: Optional[Config] = None) -> VerificationReport:
    report = VerificationReport('oracle')
    solved = solve_u_tilde(model, utility, x, p, config).value
    brute = brute_force_u_tilde(model, utility, x, p)
    report.add(Check.measure('oracle.value', abs(solved - brute), 1e-3))
    return report


def full_suite(model: MarketModel, utility: Utility, x: float, prices: Sequence[Sequence[float]],
               config: Optional[Config] = None) -> VerificationReport:
    """Every applicable check at each price, merged into one report.

    Checks built on the largest feasible position m are recorded as skipped
    when some claim combination is replicable, since m is then infinite.
    """
    config = resolve_config(config)
    report = VerificationReport(f"{model.name or 'market'} / {utility.describe()}")
    for p in prices:
        tag = '[' + ','.join(format_float(v) for v in np.atleast_1d(p)) + ']'
        report.extend(first_order_check(model, utility, x, p, config), f"{tag} ")
        report.extend(optimizer_consistency(model, utility, x, p, config), f"{tag} ")
        report.extend(duality_gap(model, utility, x, p, config), f"{tag} ")
        report.extend(decomposition_check(model, utility, x, p, config), f"{tag} ")
        report.extend(gradient_relation_check(model, utility, x, p, config=config), f"{tag} ")
        primal = solve_u_tilde(model, utility, x, p, config)
        if primal.wealth is not None:
            endowment = x - float(primal.position @ np.atleast_1d(p)) if model.num_derivatives else x
            report.extend(radial_smoothness_check(model, utility, endowment, primal.position,
                                                  config=config), f"{tag} ")
        if isinstance(utility, PowerUtility):
            report.extend(power_identity_check(model, utility.alpha, x, p, config), f"{tag} ")
    if model.num_derivatives:
        report.extend(bipolarity_probe(model, p=prices[0] if len(prices) else None, config=config))
        report.extend(position_convexity_probe(model, x, samples=20, config=config))
    if model.num_derivatives == 1:
        if not check_nonreplicability(model, config):
            reason = 'the claim is replicable, so the price set is a single point'
            report.add(Check.skip('sweep.shape', reason))
            report.add(Check.skip('divergence.trend', reason))
            return report
        lower, upper = price_set(model, config).interval()
        width = upper - lower
        grid = linear_grid(lower + 0.03 * width, upper - 0.03 * width, 41)
        report.extend(sweep_1d(model, utility, x, grid, config).check())
        report.extend(divergence_probe(model, utility, x, config=config))
    return report
