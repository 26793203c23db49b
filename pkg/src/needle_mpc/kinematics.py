"""Tip kinematics of a tendon-steered needle.

The tip state is a position p (mm) together with a unit direction d. The
model is bilinear in state and input:

    pdot = u_s * d
    ddot = d x (u_x, u_y, 0)

with insertion speed u_s (mm/s) and bending rates u_x, u_y (rad/s). Stacking
s = (p, d) this is sdot = u_s*B1*s + u_x*B2*s + u_y*B3*s for the constant
matrices returned by :func:`system_matrices`.

Two integrators are provided: a forward-Euler step that renormalizes the
direction after each update, and an exact step that rotates d about the fixed
bending axis and moves p along the corresponding circular arc. Units are mm,
s and rad throughout; curvature is 1/mm.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import InvalidConfigError, InvalidInputError

Array = np.ndarray

UNIT_NORM_TOL = 1e-9     # |  ||d|| - 1  | stays below this after every step
_CONSTRUCT_TOL = 1e-6    # constructor renormalizes within this, rejects beyond
_MIN_BEND_RATE = 1e-12   # rad/s below which the step is treated as straight


def _vec3(value, name: str) -> Array:
    v = np.array(value, dtype=float).reshape(-1)
    if v.shape != (3,):
        raise InvalidInputError(f"{name} must be a 3-vector, got shape {np.shape(value)}")
    if not np.all(np.isfinite(v)):
        raise InvalidInputError(f"{name} contains non-finite values")
    v.setflags(write=False)
    return v


@dataclass(frozen=True)
class NeedleState:
    """Tip position p (mm) and unit insertion direction d.

    The direction is renormalized on construction; a norm further than 1e-6
    from 1 is rejected rather than silently rescaled.
    """

    p: Array
    d: Array

    def __post_init__(self):
        object.__setattr__(self, "p", _vec3(self.p, "p"))
        d = np.array(_vec3(self.d, "d"))
        norm = float(np.linalg.norm(d))
        if abs(norm - 1.0) > _CONSTRUCT_TOL:
            raise InvalidInputError(
                f"direction norm {norm:.6g} differs from 1 by more than {_CONSTRUCT_TOL:g}"
            )
        d /= norm
        d.setflags(write=False)
        object.__setattr__(self, "d", d)

    def as_vector(self) -> Array:
        """Stacked 6-state (p, d)."""
        return np.concatenate([self.p, self.d])

    @classmethod
    def from_vector(cls, s: Sequence[float]) -> "NeedleState":
        s = np.asarray(s, dtype=float)
        if s.shape != (6,):
            raise InvalidInputError(f"state vector must have shape (6,), got {s.shape}")
        return cls(p=s[:3], d=s[3:])


@dataclass(frozen=True)
class VirtualInput:
    """Insertion speed u_s (mm/s) and bending rates u_x, u_y (rad/s)."""

    u_s: float
    u_x: float = 0.0
    u_y: float = 0.0

    def __post_init__(self):
        for name in ("u_s", "u_x", "u_y"):
            v = float(getattr(self, name))
            if not math.isfinite(v):
                raise InvalidInputError(f"{name} must be finite, got {v!r}")
            object.__setattr__(self, name, v)

    def as_array(self) -> Array:
        return np.array([self.u_s, self.u_x, self.u_y])

    @classmethod
    def from_array(cls, u: Sequence[float]) -> "VirtualInput":
        u = np.asarray(u, dtype=float)
        if u.shape != (3,):
            raise InvalidInputError(f"input vector must have shape (3,), got {u.shape}")
        return cls(u_s=u[0], u_x=u[1], u_y=u[2])


# d x (u_x, u_y, 0) = (u_x * G + u_y * H) d
_G = np.array([[0.0, 0.0, 0.0],
               [0.0, 0.0, 1.0],
               [0.0, -1.0, 0.0]])
_H = np.array([[0.0, 0.0, -1.0],
               [0.0, 0.0, 0.0],
               [1.0, 0.0, 0.0]])


@dataclass(frozen=True)
class SystemMatrices:
    """Constant 6x6 matrices with sdot = (u_s*B1 + u_x*B2 + u_y*B3) s."""

    B1: Array
    B2: Array
    B3: Array


def system_matrices() -> SystemMatrices:
    """Build the bilinear system matrices (B1 couples d into pdot)."""
    b1 = np.zeros((6, 6))
    b1[:3, 3:] = np.eye(3)
    b2 = np.zeros((6, 6))
    b2[3:, 3:] = _G
    b3 = np.zeros((6, 6))
    b3[3:, 3:] = _H
    for b in (b1, b2, b3):
        b.setflags(write=False)
    return SystemMatrices(B1=b1, B2=b2, B3=b3)


_MATS = system_matrices()


def derivative(state: NeedleState, u: VirtualInput) -> Array:
    """Time derivative of the stacked 6-state at (state, u)."""
    s = state.as_vector()
    return u.u_s * (_MATS.B1 @ s) + u.u_x * (_MATS.B2 @ s) + u.u_y * (_MATS.B3 @ s)


def _check_ts(ts: float) -> float:
    ts = float(ts)
    if not (math.isfinite(ts) and ts > 0.0):
        raise InvalidInputError(f"time step must be positive and finite, got {ts!r}")
    return ts


def _bend(d: Array, u_x: float, u_y: float) -> Array:
    # (u_x*G + u_y*H) d, written out to avoid building the matrices
    return np.array([-u_y * d[2], u_x * d[2], u_y * d[0] - u_x * d[1]])


def step_euler(state: NeedleState, u: VirtualInput, ts: float) -> NeedleState:
    """One forward-Euler step of length ts (s), direction renormalized.

    The raw Euler update leaves the direction with norm sqrt(1 + (ts*w)^2)
    for bending rate w, so the renormalization never divides by a small
    number. The position update uses the pre-step direction.
    """
    ts = _check_ts(ts)
    p_next = state.p + (ts * u.u_s) * state.d
    d_raw = state.d + ts * _bend(state.d, u.u_x, u.u_y)
    return NeedleState(p=p_next, d=d_raw / np.linalg.norm(d_raw))


def step_exact(state: NeedleState, u: VirtualInput, ts: float) -> NeedleState:
    """Exact flow of the model over ts under constant input.

    ddot = d x w with w = (u_x, u_y, 0), so d rotates at rate |w| about the
    fixed axis -w/|w| and p traces a circular arc of curvature |w| / u_s
    (a straight segment when w = 0).
    """
    ts = _check_ts(ts)
    rate = math.hypot(u.u_x, u.u_y)
    if rate < _MIN_BEND_RATE:
        return NeedleState(p=state.p + (ts * u.u_s) * state.d, d=state.d)
    axis = np.array([-u.u_x / rate, -u.u_y / rate, 0.0])
    angle = rate * ts
    c, s = math.cos(angle), math.sin(angle)
    d0 = state.d
    along = float(axis @ d0)
    cross = np.cross(axis, d0)
    d_next = c * d0 + s * cross + (1.0 - c) * along * axis
    # integral of the rotating direction over the step
    disp = (s / rate) * d0 + ((1.0 - c) / rate) * cross + (ts - s / rate) * along * axis
    p_next = state.p + u.u_s * disp
    return NeedleState(p=p_next, d=d_next / np.linalg.norm(d_next))


_INTEGRATORS = {"euler": step_euler, "exact": step_exact}


def rollout(
    state: NeedleState,
    inputs: Sequence[VirtualInput],
    ts: float,
    integrator: str = "exact",
) -> list[NeedleState]:
    """Apply a sequence of piecewise-constant inputs; returns N+1 states."""
    try:
        step = _INTEGRATORS[integrator]
    except KeyError:
        raise InvalidConfigError(
            f"unknown integrator {integrator!r}, expected one of {sorted(_INTEGRATORS)}"
        ) from None
    if len(inputs) == 0:
        raise InvalidInputError("input sequence is empty")
    states = [state]
    for u in inputs:
        states.append(step(states[-1], u, ts))
    return states
