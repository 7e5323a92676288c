"""Damped Newton ascent for separable concave objectives over affine images."""

import logging
from dataclasses import dataclass
from typing import Callable, List, Optional, Tuple

import numpy as np

from .config import Config, resolve_config
from .errors import NumericalFailureError
from .lp_core import LinearProgram, LpStatus, solve_lp
from .utils import null_space


logger = logging.getLogger(__name__)

# s -> (phi(s), phi'(s), phi''(s)) elementwise on a positive array
Evaluator = Callable[[np.ndarray], Tuple[np.ndarray, np.ndarray, np.ndarray]]

FRACTION_TO_BOUNDARY = 0.99


@dataclass
class NewtonResult:
    z: np.ndarray
    s: np.ndarray
    objective: float
    gradient_norm: float
    iterations: int
    converged: bool
    used_fallback: bool = False


@dataclass
class Face:
    """Smallest face of {s = base + A z >= 0}, parametrised as z = z0 + N y.

    ``free`` marks the coordinates that are positive somewhere on the set;
    the others vanish identically. ``start`` is a y with every free
    coordinate strictly positive.
    """
    z0: np.ndarray
    N: np.ndarray
    free: np.ndarray
    start: np.ndarray
    slack: float

    @property
    def full(self) -> bool:
        return bool(np.all(self.free))

    def lift(self, y: np.ndarray) -> np.ndarray:
        return self.z0 + self.N @ y


def _scale(base: np.ndarray) -> float:
    return max(1.0, float(np.max(np.abs(base), initial=0.0)))


def find_interior_point(base: np.ndarray, A: np.ndarray,
                        config: Optional[Config] = None) -> Tuple[np.ndarray, float]:
    """Maximise t subject to base + A z >= t and t <= scale.

    Returns (z, t). t > 0 means a strictly positive point exists, t < 0
    means the set is empty.
    """
    config = resolve_config(config)
    rows, k = A.shape
    objective = np.zeros(k + 1)
    objective[-1] = 1.0
    A_ub = np.zeros((rows + 1, k + 1))
    A_ub[:rows, :k] = -A
    A_ub[:rows, -1] = 1.0
    A_ub[rows, -1] = 1.0
    b_ub = np.concatenate([base, [_scale(base)]])
    lp = LinearProgram(objective, A_ub=A_ub, b_ub=b_ub, lower=[None] * (k + 1), maximize=True)
    result = solve_lp(lp, config)
    if result.status is not LpStatus.OPTIMAL:
        raise NumericalFailureError(f"Interior-point LP ended with status {result.status.value}")
    return result.x[:k], float(result.value)


def reduce_to_face(base: np.ndarray, A: np.ndarray,
                   config: Optional[Config] = None) -> Optional[Face]:
    """Locate the coordinates forced to zero on {base + A z >= 0}.

    Returns None when the set is empty.
    """
    config = resolve_config(config)
    base = np.asarray(base, dtype=float)
    rows, k = A.shape
    threshold = config.interior_threshold * _scale(base)

    z, t = find_interior_point(base, A, config)
    if t > threshold:
        return Face(np.zeros(k), np.eye(k), np.ones(rows, dtype=bool), z, t)
    if t < -max(threshold, config.lp_tolerance * _scale(base)):
        return None

    positive = np.zeros(rows, dtype=bool)
    witnesses: List[np.ndarray] = []
    for i in range(rows):
        if positive[i]:
            continue
        A_ub = np.vstack([-A, A[i:i + 1]])
        b_ub = np.concatenate([base, [_scale(base) - base[i]]])
        lp = LinearProgram(A[i], A_ub=A_ub, b_ub=b_ub, lower=[None] * k, maximize=True)
        result = solve_lp(lp, config)
        if result.status is LpStatus.OPTIMAL and base[i] + result.value > threshold:
            positive |= (base + A @ result.x) > threshold
            witnesses.append(result.x)

    zero = ~positive
    if np.any(zero):
        z0 = np.linalg.lstsq(A[zero], -base[zero], rcond=None)[0] if k else np.zeros(0)
        N = null_space(A[zero]) if k else np.zeros((0, 0))
    else:
        z0, N = np.zeros(k), np.eye(k)
    if witnesses:
        start = N.T @ (np.mean(witnesses, axis=0) - z0)
    else:
        start = np.zeros(N.shape[1])
    logger.debug("Reduced to a face with %d of %d coordinates free", int(positive.sum()), rows)
    return Face(z0, N, positive, start, 0.0)


def _backtrack(objective: Callable[[np.ndarray], float], z: np.ndarray, fz: float,
               direction: np.ndarray, slope: float, s: np.ndarray, ds: np.ndarray,
               config: Config) -> float:
    """Armijo backtracking capped by the fraction-to-boundary rule."""
    step = 1.0
    shrinking = ds < 0
    if np.any(shrinking):
        step = min(1.0, FRACTION_TO_BOUNDARY * float(np.min(-s[shrinking] / ds[shrinking])))
    threshold = 1e-14 * (1.0 + abs(fz))
    while step > 1e-16:
        f_new = objective(z + step * direction)
        if f_new >= fz + config.armijo_alpha * step * slope - threshold:
            return step
        step *= config.armijo_beta
    return 0.0


def maximize_separable(weights: np.ndarray, evaluate: Evaluator, base: np.ndarray,
                       A: np.ndarray, start: np.ndarray,
                       config: Optional[Config] = None) -> NewtonResult:
    """Maximise sum_i w_i phi((base + A z)_i) from a point with base + A z > 0.

    Newton directions are minimum-norm least-squares solutions, so a
    singular Hessian (redundant columns of A) is tolerated.
    """
    config = resolve_config(config)
    z = np.array(start, dtype=float)

    def objective(candidate: np.ndarray) -> float:
        s_c = base + A @ candidate
        if np.any(s_c <= 0):
            return float('-inf')
        return float(weights @ evaluate(s_c)[0])

    def gradient_at(s_c: np.ndarray):
        values, d1, d2 = evaluate(s_c)
        return float(weights @ values), A.T @ (weights * d1), weights * d2

    s = base + A @ z
    fz, grad, curvature = gradient_at(s)
    tolerance = config.newton_tolerance * max(1.0, float(np.linalg.norm(grad)))
    iterations = 0
    converged = False

    while iterations < config.newton_max_iterations:
        if np.linalg.norm(grad) <= tolerance:
            converged = True
            break
        hessian = A.T @ (curvature[:, None] * A)
        direction = np.linalg.lstsq(-hessian, grad, rcond=None)[0]
        slope = float(grad @ direction)
        if 0 < slope <= config.newton_decrement_tolerance * (1.0 + abs(fz)):
            # squared Newton decrement bounds the remaining objective gap
            converged = True
            break
        if not slope > 0:
            direction, slope = grad, float(grad @ grad)
        step = _backtrack(objective, z, fz, direction, slope, s, A @ direction, config)
        iterations += 1
        if step == 0.0:
            logger.debug("Newton line search stalled at iteration %d", iterations)
            break
        z = z + step * direction
        s = base + A @ z
        fz, grad, curvature = gradient_at(s)

    gnorm = float(np.linalg.norm(grad))
    if converged or gnorm <= tolerance:
        logger.debug("Newton converged in %d iterations (|grad| = %.3e)", iterations, gnorm)
        return NewtonResult(z, s, fz, gnorm, iterations, True)

    logger.warning("Newton did not converge (|grad| = %.3e); falling back to gradient ascent", gnorm)
    best = NewtonResult(z, s, fz, gnorm, iterations, False)
    for _ in range(config.gradient_fallback_iterations):
        if np.linalg.norm(grad) <= tolerance:
            break
        slope = float(grad @ grad)
        step = _backtrack(objective, z, fz, grad, slope, s, A @ grad, config)
        iterations += 1
        if step == 0.0:
            break
        z = z + step * grad
        s = base + A @ z
        fz, grad, curvature = gradient_at(s)
        gnorm = float(np.linalg.norm(grad))
        if gnorm < best.gradient_norm and fz >= best.objective - 1e-14 * (1.0 + abs(best.objective)):
            best = NewtonResult(z, s, fz, gnorm, iterations, False, used_fallback=True)

    best.iterations = iterations
    best.converged = best.gradient_norm <= tolerance
    if best.gradient_norm > 1e-6 * max(1.0, tolerance / config.newton_tolerance):
        raise NumericalFailureError(f"Ascent failed to converge: |grad| = {best.gradient_norm:.3e}")
    return best
