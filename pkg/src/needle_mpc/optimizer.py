"""Box-constrained smooth minimization via spectral projected gradient.

Iterates x+ = x + lam * (P(x - alpha*g) - x) with P the box projection,
alpha a safeguarded Barzilai-Borwein steplength (a one-pair curvature
estimate refreshed every iteration) and lam from a monotone Armijo
backtracking line search. Every iterate satisfies the bounds exactly and the
objective never increases across accepted steps.

Convergence is declared when the unit-step projected gradient
||x - P(x - g)||_inf drops below gradient_tolerance * (1 + |f|).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .errors import InvalidConfigError, InvalidInputError, NumericalFailureError

Array = np.ndarray

_ALPHA_MIN = 1e-12
_ALPHA_MAX = 1e10
_ARMIJO = 1e-4
_LAMBDA_MIN = 1e-14

STATUS_CONVERGED = "converged"
STATUS_MAX_ITER = "max_iter"
STATUS_STALLED = "stalled"


@dataclass
class BoxNlp:
    """A smooth objective with elementwise bounds.

    objective maps x to (value, gradient). objective_value, when given, is a
    cheaper value-only path used inside the line search; it must agree with
    objective's value to roundoff.
    """

    dimension: int
    objective: Callable[[Array], tuple[float, Array]]
    lower: Array
    upper: Array
    max_iterations: int = 500
    gradient_tolerance: float = 1e-8   # scaled by 1 + |f|
    step_tolerance: float = 1e-12      # scaled by 1 + ||x||_inf
    objective_value: Optional[Callable[[Array], float]] = None

    def __post_init__(self):
        if self.dimension < 1:
            raise InvalidConfigError(f"dimension must be >= 1, got {self.dimension}")
        lower = np.asarray(self.lower, dtype=float)
        upper = np.asarray(self.upper, dtype=float)
        if lower.shape != (self.dimension,) or upper.shape != (self.dimension,):
            raise InvalidConfigError(
                f"bounds must have shape ({self.dimension},), got {lower.shape} and {upper.shape}"
            )
        if np.any(np.isnan(lower)) or np.any(np.isnan(upper)):
            raise InvalidConfigError("bounds contain NaN")
        if np.any(lower > upper):
            bad = int(np.argmax(lower > upper))
            raise InvalidConfigError(
                f"lower bound exceeds upper bound at index {bad}: {lower[bad]} > {upper[bad]}"
            )
        if self.max_iterations < 1:
            raise InvalidConfigError(f"max_iterations must be >= 1, got {self.max_iterations}")
        if not (self.gradient_tolerance > 0.0 and self.step_tolerance > 0.0):
            raise InvalidConfigError("tolerances must be positive")
        self.lower = lower
        self.upper = upper


@dataclass
class MinimizeResult:
    x: Array
    value: float
    status: str
    iterations: int = 0
    projected_gradient_norm: float = field(default=float("nan"))


def _require_finite(f: float, g: Array, x: Array, iteration: int) -> None:
    if not math.isfinite(f) or not np.all(np.isfinite(g)):
        raise NumericalFailureError(
            f"objective returned non-finite value or gradient at iteration {iteration}, x={x}"
        )


def _solve_from(problem: BoxNlp, x0: Array) -> MinimizeResult:
    lo, hi = problem.lower, problem.upper
    value_of = problem.objective_value or (lambda z: problem.objective(z)[0])

    x = np.clip(np.asarray(x0, dtype=float), lo, hi)
    f, g = problem.objective(x)
    _require_finite(f, g, x, 0)

    pg = x - np.clip(x - g, lo, hi)
    pg_norm = float(np.max(np.abs(pg))) if pg.size else 0.0
    alpha = min(_ALPHA_MAX, max(_ALPHA_MIN, 1.0 / max(pg_norm, 1e-10)))

    status = STATUS_MAX_ITER
    iteration = 0
    for iteration in range(1, problem.max_iterations + 1):
        if pg_norm <= problem.gradient_tolerance * (1.0 + abs(f)):
            status = STATUS_CONVERGED
            break

        d = np.clip(x - alpha * g, lo, hi) - x
        gtd = float(g @ d)
        if not np.any(d != 0.0) or gtd >= 0.0:
            # projection arc gives no descent direction: x is stationary
            status = STATUS_CONVERGED if pg_norm <= math.sqrt(
                problem.gradient_tolerance
            ) * (1.0 + abs(f)) else STATUS_STALLED
            break

        lam = 1.0
        f_trial = value_of(x + d)
        while not (math.isfinite(f_trial) and f_trial <= f + _ARMIJO * lam * gtd):
            lam *= 0.5
            if lam < _LAMBDA_MIN:
                break
            f_trial = value_of(x + lam * d)
        if lam < _LAMBDA_MIN:
            status = STATUS_STALLED
            break

        x_new = np.clip(x + lam * d, lo, hi)
        f_new, g_new = problem.objective(x_new)
        _require_finite(f_new, g_new, x_new, iteration)

        s = x_new - x
        y = g_new - g
        sy = float(s @ y)
        if sy > 0.0:
            alpha = min(_ALPHA_MAX, max(_ALPHA_MIN, float(s @ s) / sy))
        else:
            alpha = _ALPHA_MAX

        step_norm = float(np.max(np.abs(s)))
        x, f, g = x_new, f_new, g_new
        pg = x - np.clip(x - g, lo, hi)
        pg_norm = float(np.max(np.abs(pg)))

        if step_norm <= problem.step_tolerance * (1.0 + float(np.max(np.abs(x)))):
            status = (
                STATUS_CONVERGED
                if pg_norm <= problem.gradient_tolerance * (1.0 + abs(f))
                else STATUS_STALLED
            )
            break

    return MinimizeResult(
        x=x, value=f, status=status, iterations=iteration, projected_gradient_norm=pg_norm
    )


def minimize(
    problem: BoxNlp,
    x0,
    multi_start: int = 0,
    seed: int = 0,
) -> MinimizeResult:
    """Minimize a BoxNlp from x0 (clipped into the box first).

    multi_start > 0 additionally solves from that many uniform random points
    in the box (seeded, so results are reproducible) and returns the best
    solution by value. Requires finite bounds.
    """
    x0 = np.asarray(x0, dtype=float)
    if x0.shape != (problem.dimension,):
        raise InvalidInputError(f"x0 must have shape ({problem.dimension},), got {x0.shape}")
    if not np.all(np.isfinite(x0)):
        raise InvalidInputError("x0 contains non-finite values")

    best = _solve_from(problem, x0)
    if multi_start > 0:
        if not (np.all(np.isfinite(problem.lower)) and np.all(np.isfinite(problem.upper))):
            raise InvalidConfigError("multi_start requires finite bounds")
        rng = np.random.default_rng(seed)
        for _ in range(multi_start):
            start = rng.uniform(problem.lower, problem.upper)
            res = _solve_from(problem, start)
            if res.value < best.value:
                best = res
    return best


def gradient_check(
    objective: Callable[[Array], tuple[float, Array]], x, h_scale: float = 1e-6
) -> float:
    """Largest relative disagreement between the analytic gradient and
    central differences with per-coordinate step h = h_scale * (1 + |x_i|)."""
    x = np.asarray(x, dtype=float)
    _, g = objective(x)
    fd = np.empty_like(x)
    for i in range(x.size):
        h = h_scale * (1.0 + abs(x[i]))
        e = np.zeros_like(x)
        e[i] = h
        fd[i] = (objective(x + e)[0] - objective(x - e)[0]) / (2.0 * h)
    scale = max(1.0, float(np.max(np.abs(fd))) if fd.size else 0.0)
    return float(np.max(np.abs(g - fd))) / scale
