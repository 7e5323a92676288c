"""Utility functions on the positive half-line and their conjugates."""

import logging
import math
from pathlib import Path
from typing import Callable, List, Optional, Sequence, Tuple, Union

import numpy as np

from .errors import DomainError


logger = logging.getLogger(__name__)

ArrayLike = Union[float, np.ndarray]


def _vectorized(func: Callable[[np.ndarray], np.ndarray], values: ArrayLike) -> ArrayLike:
    arr = np.asarray(values, dtype=float)
    with np.errstate(divide='ignore', invalid='ignore', over='ignore'):
        out = func(arr)
    if arr.ndim == 0:
        return float(out)
    return out


def _require_positive(values: np.ndarray, name: str):
    if np.any(values <= 0.0) or np.any(np.isnan(values)):
        raise DomainError(f"{name} requires positive arguments")


class Utility:
    """Base class for utility functions.

    ``value`` is extended by -inf on the negative half-line and by its right
    limit at zero. The conjugate is V(y) = sup_x (U(x) - x y).
    """

    kind = 'base'
    smooth = True
    inada = True

    @property
    def value_at_zero(self) -> float:
        """U(0+)."""
        raise NotImplementedError

    @property
    def value_at_infinity(self) -> float:
        """U(+inf), which is also V(0+)."""
        raise NotImplementedError

    @property
    def unbounded_above(self) -> bool:
        return math.isinf(self.value_at_infinity)

    def value(self, x: ArrayLike) -> ArrayLike:
        raise NotImplementedError

    def marginal(self, x: ArrayLike) -> ArrayLike:
        raise NotImplementedError

    def curvature(self, x: ArrayLike) -> ArrayLike:
        raise NotImplementedError

    def conjugate(self, y: ArrayLike) -> ArrayLike:
        raise NotImplementedError

    def conjugate_marginal(self, y: ArrayLike) -> ArrayLike:
        """V'(y) = -I(y)."""
        return _vectorized(lambda a: -np.asarray(self.inverse_marginal(a)), y)

    def conjugate_curvature(self, y: ArrayLike) -> ArrayLike:
        raise NotImplementedError

    def inverse_marginal(self, y: ArrayLike) -> ArrayLike:
        raise NotImplementedError

    def derivatives(self, x: np.ndarray) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
        """(U, U', U'') on a positive array."""
        return self.value(x), self.marginal(x), self.curvature(x)

    def conjugate_derivatives(self, y: np.ndarray) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
        """(V, V', V'') on a positive array."""
        return self.conjugate(y), self.conjugate_marginal(y), self.conjugate_curvature(y)

    def describe(self) -> str:
        return self.kind


class PowerUtility(Utility):
    """U(x) = x^alpha / alpha, alpha < 1, alpha != 0."""

    kind = 'power'

    def __init__(self, alpha: float):
        alpha = float(alpha)
        if not alpha < 1.0 or alpha == 0.0:
            raise DomainError(f"Power utility needs alpha < 1 and alpha != 0, got {alpha}")
        self.alpha = alpha
        self.beta = alpha / (alpha - 1.0)

    @property
    def value_at_zero(self) -> float:
        return 0.0 if self.alpha > 0 else float('-inf')

    @property
    def value_at_infinity(self) -> float:
        return float('inf') if self.alpha > 0 else 0.0

    def value(self, x: ArrayLike) -> ArrayLike:
        a = self.alpha

        def f(arr):
            out = np.where(arr > 0, np.power(np.maximum(arr, 1e-300), a) / a, -np.inf)
            return np.where(arr == 0, self.value_at_zero, out)

        return _vectorized(f, x)

    def marginal(self, x: ArrayLike) -> ArrayLike:
        _require_positive(np.asarray(x, dtype=float), 'u_marginal')
        return _vectorized(lambda arr: np.power(arr, self.alpha - 1.0), x)

    def curvature(self, x: ArrayLike) -> ArrayLike:
        _require_positive(np.asarray(x, dtype=float), 'u_curvature')
        return _vectorized(lambda arr: (self.alpha - 1.0) * np.power(arr, self.alpha - 2.0), x)

    def conjugate(self, y: ArrayLike) -> ArrayLike:
        _require_positive(np.asarray(y, dtype=float), 'conjugate')
        return _vectorized(lambda arr: -np.power(arr, self.beta) / self.beta, y)

    def conjugate_curvature(self, y: ArrayLike) -> ArrayLike:
        _require_positive(np.asarray(y, dtype=float), 'conjugate')
        return _vectorized(lambda arr: np.power(arr, self.beta - 2.0) / (1.0 - self.alpha), y)

    def inverse_marginal(self, y: ArrayLike) -> ArrayLike:
        _require_positive(np.asarray(y, dtype=float), 'inverse_marginal')
        return _vectorized(lambda arr: np.power(arr, 1.0 / (self.alpha - 1.0)), y)

    def describe(self) -> str:
        return f"power:{self.alpha:g}"


class LogUtility(Utility):
    """U(x) = ln x."""

    kind = 'log'

    @property
    def value_at_zero(self) -> float:
        return float('-inf')

    @property
    def value_at_infinity(self) -> float:
        return float('inf')

    def value(self, x: ArrayLike) -> ArrayLike:
        return _vectorized(lambda arr: np.where(arr > 0, np.log(np.maximum(arr, 1e-300)), -np.inf), x)

    def marginal(self, x: ArrayLike) -> ArrayLike:
        _require_positive(np.asarray(x, dtype=float), 'u_marginal')
        return _vectorized(lambda arr: 1.0 / arr, x)

    def curvature(self, x: ArrayLike) -> ArrayLike:
        _require_positive(np.asarray(x, dtype=float), 'u_curvature')
        return _vectorized(lambda arr: -1.0 / (arr * arr), x)

    def conjugate(self, y: ArrayLike) -> ArrayLike:
        _require_positive(np.asarray(y, dtype=float), 'conjugate')
        return _vectorized(lambda arr: -np.log(arr) - 1.0, y)

    def conjugate_curvature(self, y: ArrayLike) -> ArrayLike:
        _require_positive(np.asarray(y, dtype=float), 'conjugate')
        return _vectorized(lambda arr: 1.0 / (arr * arr), y)

    def inverse_marginal(self, y: ArrayLike) -> ArrayLike:
        _require_positive(np.asarray(y, dtype=float), 'inverse_marginal')
        return _vectorized(lambda arr: 1.0 / arr, y)


class PiecewiseLinearUtility(Utility):
    """Concave increasing piecewise-linear utility.

    Slope ``slopes[j]`` applies on [breakpoints[j], breakpoints[j+1]), the last
    slope on [breakpoints[-1], inf). ``anchor`` pins the level as (x, U(x)).
    """

    kind = 'piecewise_linear'
    smooth = False
    inada = False

    def __init__(self, breakpoints: Sequence[float], slopes: Sequence[float],
                 anchor: Tuple[float, float] = (0.0, 0.0)):
        self.breakpoints = np.asarray(breakpoints, dtype=float)
        self.slopes = np.asarray(slopes, dtype=float)
        if self.breakpoints.shape != self.slopes.shape or self.breakpoints.size == 0:
            raise DomainError("Need one slope per breakpoint")
        if self.breakpoints[0] != 0.0:
            raise DomainError("First breakpoint must be 0")
        if np.any(np.diff(self.breakpoints) <= 0):
            raise DomainError("Breakpoints must be strictly increasing")
        if np.any(self.slopes <= 0) or np.any(np.diff(self.slopes) >= 0):
            raise DomainError("Slopes must be positive and strictly decreasing")

        levels = np.concatenate([[0.0], np.cumsum(self.slopes[:-1] * np.diff(self.breakpoints))])
        x_a, u_a = anchor
        self.levels = levels + (u_a - self._interpolate(np.asarray(float(x_a)), levels))

    def _interpolate(self, arr: np.ndarray, levels: np.ndarray) -> np.ndarray:
        idx = np.clip(np.searchsorted(self.breakpoints, arr, side='right') - 1, 0, len(self.breakpoints) - 1)
        return levels[idx] + self.slopes[idx] * (arr - self.breakpoints[idx])

    @property
    def value_at_zero(self) -> float:
        return float(self.levels[0])

    @property
    def value_at_infinity(self) -> float:
        return float('inf')

    @property
    def last_slope(self) -> float:
        return float(self.slopes[-1])

    def value(self, x: ArrayLike) -> ArrayLike:
        return _vectorized(lambda arr: np.where(arr >= 0, self._interpolate(arr, self.levels), -np.inf), x)

    def marginal(self, x: ArrayLike) -> ArrayLike:
        """Left slope at a breakpoint; the first slope at zero."""
        arr = np.asarray(x, dtype=float)
        if np.any(arr < 0):
            raise DomainError("u_marginal requires non-negative arguments")

        def f(a):
            idx = np.clip(np.searchsorted(self.breakpoints, a, side='left') - 1, 0, len(self.slopes) - 1)
            return self.slopes[idx]

        return _vectorized(f, x)

    def curvature(self, x: ArrayLike) -> ArrayLike:
        return _vectorized(lambda arr: np.zeros_like(arr), x)

    def subdifferential(self, x: float) -> Tuple[float, float]:
        """Superdifferential interval [right slope, left slope] of U at x."""
        if x < 0:
            raise DomainError("subdifferential requires x >= 0")
        j = int(np.searchsorted(self.breakpoints, x, side='right') - 1)
        right = float(self.slopes[j])
        if x == 0.0:
            return right, float('inf')
        if x == self.breakpoints[j]:
            return right, float(self.slopes[j - 1])
        return right, right

    def conjugate(self, y: ArrayLike) -> ArrayLike:
        """max_j (U(b_j) - b_j y) for y >= last slope, +inf below."""
        arr = np.asarray(y, dtype=float)
        if np.any(arr <= 0):
            raise DomainError("conjugate requires positive arguments")

        def f(a):
            candidates = self.levels[:, None] - self.breakpoints[:, None] * a.reshape(1, -1)
            best = candidates.max(axis=0).reshape(a.shape)
            return np.where(a >= self.last_slope, best, np.inf)

        return _vectorized(f, y)

    def conjugate_curvature(self, y: ArrayLike) -> ArrayLike:
        return _vectorized(lambda arr: np.zeros_like(arr), y)

    def inverse_marginal(self, y: ArrayLike) -> ArrayLike:
        """Smallest maximizer of U(x) - x y."""
        arr = np.asarray(y, dtype=float)
        if np.any(arr <= 0):
            raise DomainError("inverse_marginal requires positive arguments")

        def f(a):
            count = (self.slopes[None, :] > a.reshape(-1, 1)).sum(axis=1).reshape(a.shape)
            safe = np.minimum(count, len(self.breakpoints) - 1)
            return np.where(count >= len(self.breakpoints), np.inf, self.breakpoints[safe])

        return _vectorized(f, y)

    def describe(self) -> str:
        return f"pwl[{len(self.breakpoints)} pieces]"


def nonconvex_example_utility() -> PiecewiseLinearUtility:
    """Slopes 1000, 1, 1/1000 on (1/2,1), (1,3), (3,4) with U(1) = 0.

    Extended by slope 1e6 below 1/2 and 1e-6 above 4.
    """
    return PiecewiseLinearUtility(
        breakpoints=[0.0, 0.5, 1.0, 3.0, 4.0],
        slopes=[1e6, 1e3, 1.0, 1e-3, 1e-6],
        anchor=(1.0, 0.0),
    )


def load_pwl_utility(path: Union[str, Path]) -> PiecewiseLinearUtility:
    """Read breakpoint/slope pairs, one per line.

    Blank lines and ``#`` comments are ignored; an optional line
    ``anchor <x> <U(x)>`` sets the level (default U(0) = 0).
    """
    breakpoints: List[float] = []
    slopes: List[float] = []
    anchor = (0.0, 0.0)
    for lineno, line in enumerate(Path(path).read_text().splitlines(), start=1):
        line = line.split('#', 1)[0].replace(',', ' ').strip()
        if not line:
            continue
        parts = line.split()
        try:
            if parts[0] == 'anchor':
                anchor = (float(parts[1]), float(parts[2]))
                continue
            if len(parts) != 2:
                raise ValueError("expected two numbers")
            breakpoints.append(float(parts[0]))
            slopes.append(float(parts[1]))
        except (ValueError, IndexError) as e:
            raise ValueError(f"{path}:{lineno}: cannot parse {line!r}: {e}") from e
    return PiecewiseLinearUtility(breakpoints, slopes, anchor)


def parse_utility(selector: str) -> Utility:
    """Build a utility from ``log``, ``power:<alpha>``, ``pwl:<file>`` or ``s10``."""
    kind, _, arg = selector.partition(':')
    if kind == 'log' and not arg:
        return LogUtility()
    if kind == 'power':
        try:
            alpha = float(arg)
        except ValueError as e:
            raise ValueError(f"Invalid power exponent: {arg!r}") from e
        return PowerUtility(alpha)
    if kind == 'pwl' and arg:
        return load_pwl_utility(arg)
    if kind == 's10' and not arg:
        return nonconvex_example_utility()
    raise ValueError(f"Unknown utility selector: {selector}")


def bidual_check(utility: Utility, xs: Sequence[float], points: int = 10000,
                 include_envelope: bool = False, max_refinements: int = 4) -> float:
    """Largest |U(x) - min_y (V(y) + x y)| over a log-spaced y-grid.

    The grid spans a decade either side of U'(x) and is doubled until the
    residual stops changing.
    """
    xs = np.asarray(xs, dtype=float)
    if np.any(xs <= 0):
        raise DomainError("bidual_check requires positive sample points")

    def residual(n: int) -> float:
        worst = 0.0
        for x in xs:
            centre = float(utility.marginal(x))
            grid = np.geomspace(centre / 10.0, centre * 10.0, n)
            if include_envelope:
                grid = np.append(grid, centre)
            values = np.asarray(utility.conjugate(grid)) + x * grid
            worst = max(worst, abs(float(utility.value(x)) - float(np.min(values))))
        return worst

    current = residual(points)
    for _ in range(max_refinements):
        points *= 2
        refined = residual(points)
        if abs(refined - current) <= 1e-12 * (1.0 + current):
            return refined
        current = refined
    logger.debug("bidual residual still moving after %d refinements", max_refinements)
    return current
