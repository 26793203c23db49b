"""Receding-horizon tracking controller for the bilinear needle model.

Each control step minimizes

    J = sum_{i=0..N} (p_i - ref_i)' Q (p_i - ref_i) + sum_{i=0..N-1} u_i' R u_i

over the N inputs of a short horizon, subject to per-channel box bounds.
Predictions use the Euler-discretized model with direction renormalization,
and the cost gradient is accumulated in reverse through the rollout,
renormalization included, so it is exact to roundoff. The first input of the
optimized sequence is applied; the shifted remainder warm-starts the next
step.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .errors import InvalidConfigError, InvalidInputError, NumericalFailureError
from .kinematics import Array, NeedleState, VirtualInput, rollout
from .optimizer import BoxNlp, minimize

STATUS_FAULT = "fault"


def _pair(value, name: str) -> tuple[float, float]:
    lo, hi = (float(v) for v in value)
    if not (math.isfinite(lo) and math.isfinite(hi)):
        raise InvalidConfigError(f"{name} must be finite, got {value}")
    if lo > hi:
        raise InvalidConfigError(f"{name}: lower bound {lo:g} exceeds upper bound {hi:g}")
    return lo, hi


def _triple(value, name: str) -> tuple[float, float, float]:
    vals = tuple(float(v) for v in value)
    if len(vals) != 3:
        raise InvalidConfigError(f"{name} must have 3 entries, got {len(vals)}")
    if any(not math.isfinite(v) or v < 0.0 for v in vals):
        raise InvalidConfigError(f"{name} entries must be finite and nonnegative, got {value}")
    return vals


@dataclass(frozen=True)
class MpcConfig:
    """Horizon, weights and input bounds of the tracking controller.

    planar_mode collapses the u_y bounds to [0, 0] so the tip stays in the
    plane spanned by the initial direction and the u_x bending axis.
    """

    ts: float = 0.05                                # control period, s
    horizon: int = 5                                # number of inputs N
    q_weights: tuple[float, float, float] = (100.0, 100.0, 200.0)
    r_weights: tuple[float, float, float] = (1.0, 1.0, 1.0)
    u_s_bounds: tuple[float, float] = (-1.0, 24.0)  # mm/s
    u_x_bounds: tuple[float, float] = (-5.0, 5.0)   # rad/s
    u_y_bounds: tuple[float, float] = (-5.0, 5.0)   # rad/s
    planar_mode: bool = False
    max_iterations: int = 500
    gradient_tolerance: float = 1e-8
    multi_start: int = 0
    seed: int = 0

    def __post_init__(self):
        ts = float(self.ts)
        if not (math.isfinite(ts) and ts > 0.0):
            raise InvalidConfigError(f"ts must be positive and finite, got {self.ts!r}")
        object.__setattr__(self, "ts", ts)
        if int(self.horizon) < 1:
            raise InvalidConfigError(f"horizon must be >= 1, got {self.horizon}")
        object.__setattr__(self, "horizon", int(self.horizon))
        object.__setattr__(self, "q_weights", _triple(self.q_weights, "q_weights"))
        object.__setattr__(self, "r_weights", _triple(self.r_weights, "r_weights"))
        object.__setattr__(self, "u_s_bounds", _pair(self.u_s_bounds, "u_s_bounds"))
        object.__setattr__(self, "u_x_bounds", _pair(self.u_x_bounds, "u_x_bounds"))
        object.__setattr__(self, "u_y_bounds", _pair(self.u_y_bounds, "u_y_bounds"))
        if self.max_iterations < 1:
            raise InvalidConfigError(f"max_iterations must be >= 1, got {self.max_iterations}")
        if not float(self.gradient_tolerance) > 0.0:
            raise InvalidConfigError("gradient_tolerance must be positive")
        if int(self.multi_start) < 0:
            raise InvalidConfigError("multi_start must be >= 0")

    def input_bounds(self) -> tuple[Array, Array]:
        """Per-step (lower, upper) bound triples, planar mode applied."""
        u_y = (0.0, 0.0) if self.planar_mode else self.u_y_bounds
        lo = np.array([self.u_s_bounds[0], self.u_x_bounds[0], u_y[0]])
        hi = np.array([self.u_s_bounds[1], self.u_x_bounds[1], u_y[1]])
        return lo, hi

    def horizon_bounds(self) -> tuple[Array, Array]:
        lo, hi = self.input_bounds()
        return np.tile(lo, self.horizon), np.tile(hi, self.horizon)


@dataclass(frozen=True)
class HorizonSolution:
    """Optimized input sequence with its Euler-predicted states and cost."""

    inputs: tuple[VirtualInput, ...]
    predicted_states: tuple[NeedleState, ...]
    cost: float
    solver_status: str
    projected_gradient_norm: float = float("nan")
    iterations: int = 0


def _check_refs(refs, horizon: int) -> Array:
    refs = np.asarray(refs, dtype=float)
    if refs.shape != (horizon + 1, 3):
        raise InvalidInputError(
            f"refs must have shape ({horizon + 1}, 3) for horizon {horizon}, got {refs.shape}"
        )
    if not np.all(np.isfinite(refs)):
        raise InvalidInputError("refs contain non-finite values")
    return refs


def _forward(x: Array, p0: Array, d0: Array, ts: float, n: int):
    p = np.empty((n + 1, 3))
    d = np.empty((n + 1, 3))
    raw_norm = np.empty(n)
    p[0], d[0] = p0, d0
    for i in range(n):
        us, ux, uy = x[3 * i], x[3 * i + 1], x[3 * i + 2]
        di = d[i]
        p[i + 1] = p[i] + (ts * us) * di
        raw = di + ts * np.array([-uy * di[2], ux * di[2], uy * di[0] - ux * di[1]])
        nrm = float(np.linalg.norm(raw))
        raw_norm[i] = nrm
        d[i + 1] = raw / nrm
    return p, d, raw_norm


def _cost_value(x: Array, p0: Array, d0: Array, refs: Array, q: Array, r: Array, ts: float) -> float:
    n = x.size // 3
    p, _, _ = _forward(x, p0, d0, ts, n)
    e = p - refs
    u = x.reshape(n, 3)
    return float(np.sum(e * e @ q) + np.sum(u * u @ r))


def _cost_and_grad(
    x: Array, p0: Array, d0: Array, refs: Array, q: Array, r: Array, ts: float
) -> tuple[float, Array]:
    n = x.size // 3
    p, d, raw_norm = _forward(x, p0, d0, ts, n)
    e = p - refs
    u = x.reshape(n, 3)
    cost = float(np.sum(e * e @ q) + np.sum(u * u @ r))

    grad = np.empty((n, 3))
    lp = 2.0 * q * e[n]          # adjoint of p_i, seeded at the terminal error
    ld = np.zeros(3)             # adjoint of d_i
    for i in range(n - 1, -1, -1):
        us, ux, uy = u[i]
        di, dn = d[i], d[i + 1]
        # p_{i+1} = p_i + ts*us*d_i
        grad[i, 0] = ts * float(di @ lp) + 2.0 * r[0] * us
        # d_{i+1} = raw / ||raw||, raw = (I + ts*K) d_i with skew K
        ld_raw = (ld - float(dn @ ld) * dn) / raw_norm[i]
        grad[i, 1] = ts * (di[2] * ld_raw[1] - di[1] * ld_raw[2]) + 2.0 * r[1] * ux
        grad[i, 2] = ts * (di[0] * ld_raw[2] - di[2] * ld_raw[0]) + 2.0 * r[2] * uy
        k_ld = np.array(
            [-uy * ld_raw[2], ux * ld_raw[2], uy * ld_raw[0] - ux * ld_raw[1]]
        )
        ld = (ts * us) * lp + ld_raw - ts * k_ld   # (I + ts*K)' = I - ts*K
        lp = lp + 2.0 * q * e[i]
    return cost, grad.reshape(-1)


def horizon_cost(
    s0: NeedleState,
    inputs: Sequence[VirtualInput],
    refs,
    config: MpcConfig,
) -> tuple[float, Array]:
    """Tracking cost of an input sequence and its gradient (3N,).

    The gradient is ordered (u_s_0, u_x_0, u_y_0, u_s_1, ...) and is exact
    through the Euler rollout including direction renormalization.
    """
    if len(inputs) != config.horizon:
        raise InvalidInputError(
            f"expected {config.horizon} inputs for horizon {config.horizon}, got {len(inputs)}"
        )
    refs = _check_refs(refs, config.horizon)
    x = np.concatenate([u.as_array() for u in inputs])
    q = np.asarray(config.q_weights)
    r = np.asarray(config.r_weights)
    return _cost_and_grad(x, s0.p, s0.d, refs, q, r, config.ts)


def _shift_warm_start(warm: HorizonSolution, horizon: int) -> Array:
    x_prev = np.concatenate([u.as_array() for u in warm.inputs])
    if x_prev.size != 3 * horizon:
        raise InvalidInputError(
            f"warm start has {x_prev.size // 3} inputs, expected {horizon}"
        )
    return np.concatenate([x_prev[3:], x_prev[-3:]])


def solve_horizon(
    s0: NeedleState,
    refs,
    config: MpcConfig,
    warm_start: Optional[HorizonSolution] = None,
) -> HorizonSolution:
    """Optimize the input sequence for one horizon.

    The start point is the shifted previous solution (last input repeated)
    when given, otherwise zero inputs; either way it is projected into the
    bounds first, so the returned cost never exceeds the warm-start cost. A
    numerical failure inside the solver falls back to zero input and is
    reported via solver_status = "fault" instead of raising.
    """
    refs = _check_refs(refs, config.horizon)
    n = config.horizon
    q = np.asarray(config.q_weights)
    r = np.asarray(config.r_weights)
    p0, d0 = s0.p, s0.d
    ts = config.ts
    lo, hi = config.horizon_bounds()

    problem = BoxNlp(
        dimension=3 * n,
        objective=lambda x: _cost_and_grad(x, p0, d0, refs, q, r, ts),
        lower=lo,
        upper=hi,
        max_iterations=config.max_iterations,
        gradient_tolerance=config.gradient_tolerance,
        objective_value=lambda x: _cost_value(x, p0, d0, refs, q, r, ts),
    )
    x0 = np.zeros(3 * n) if warm_start is None else _shift_warm_start(warm_start, n)

    try:
        res = minimize(problem, np.clip(x0, lo, hi), multi_start=config.multi_start,
                       seed=config.seed)
        x = res.x
        status = res.status
        cost = res.value
        pg = res.projected_gradient_norm
        iterations = res.iterations
    except NumericalFailureError:
        x = np.clip(np.zeros(3 * n), lo, hi)
        cost = _cost_value(x, p0, d0, refs, q, r, ts)
        status = STATUS_FAULT
        pg = float("nan")
        iterations = 0

    inputs = tuple(VirtualInput.from_array(row) for row in x.reshape(n, 3))
    predicted = tuple(rollout(s0, inputs, ts, integrator="euler"))
    return HorizonSolution(
        inputs=inputs,
        predicted_states=predicted,
        cost=cost,
        solver_status=status,
        projected_gradient_norm=pg,
        iterations=iterations,
    )


def receding_step(
    s_measured: NeedleState,
    refs,
    config: MpcConfig,
    warm_start: Optional[HorizonSolution] = None,
) -> tuple[VirtualInput, HorizonSolution]:
    """Solve one horizon from the measured state and apply its first input."""
    solution = solve_horizon(s_measured, refs, config, warm_start)
    return solution.inputs[0], solution


class RecedingHorizonController:
    """Stateful wrapper around receding_step holding the warm start.

    One instance drives one control loop; it owns no other mutable state, so
    independent loops can run in parallel with a controller each.
    """

    def __init__(self, config: MpcConfig):
        self.config = config
        self._warm: Optional[HorizonSolution] = None
        self.fault_count = 0

    def reset(self) -> None:
        self._warm = None
        self.fault_count = 0

    def step(self, measured: NeedleState, refs) -> tuple[VirtualInput, HorizonSolution]:
        applied, solution = receding_step(measured, refs, self.config, self._warm)
        if solution.solver_status == STATUS_FAULT:
            self.fault_count += 1
            self._warm = None
        else:
            self._warm = solution
        return applied, solution
