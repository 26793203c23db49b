"""Reference trajectory generators for tracking scenarios.

Every generator maps a time t (s) to a target tip position (mm). Generators
backed by a finite set of samples (waypoint paths, replays) hold their last
point once t passes the final timestamp, so a controller querying past the
end sees a fixed target instead of an extrapolation.
"""

from __future__ import annotations

import csv
import math
import warnings
from dataclasses import dataclass, field
from typing import Union

import numpy as np

from .errors import InvalidConfigError, InvalidInputError, OutOfRangeError
from .kinematics import Array

_AXIS_PERMUTATION = {
    # (radial_1, radial_2, axial) -> world (x, y, z)
    "x": (2, 0, 1),
    "y": (1, 2, 0),
    "z": (0, 1, 2),
}


def _vec(value, name: str, length: int) -> Array:
    v = np.array(value, dtype=float).reshape(-1)
    if v.shape != (length,):
        raise InvalidConfigError(f"{name} must have {length} entries, got {np.shape(value)}")
    if not np.all(np.isfinite(v)):
        raise InvalidConfigError(f"{name} contains non-finite values")
    v.setflags(write=False)
    return v


def _finite(value, name: str) -> float:
    v = float(value)
    if not math.isfinite(v):
        raise InvalidConfigError(f"{name} must be finite, got {value!r}")
    return v


@dataclass(frozen=True)
class FixedTarget:
    """A single stationary target point (mm)."""

    target: Array

    def __post_init__(self):
        object.__setattr__(self, "target", _vec(self.target, "target", 3))

    def sample(self, t: float) -> Array:
        return np.array(self.target)


@dataclass(frozen=True)
class Helix:
    """Helix around an axis-aligned line through `center`.

    p(t) = center + (radius*cos(rate*t + phase), radius*sin(rate*t + phase),
    pitch*rate*t / 2pi) expressed in the axis frame. radius in mm, pitch is
    the axial advance per turn (mm), rate in rad/s. radius = 0 degenerates to
    a straight line along the axis.
    """

    radius: float
    pitch: float
    rate: float
    center: Array = (0.0, 0.0, 0.0)
    phase: float = 0.0
    axis: str = "z"

    def __post_init__(self):
        for name in ("radius", "pitch", "rate", "phase"):
            object.__setattr__(self, name, _finite(getattr(self, name), name))
        if self.radius < 0.0:
            raise InvalidConfigError(f"radius must be nonnegative, got {self.radius:g}")
        object.__setattr__(self, "center", _vec(self.center, "center", 3))
        if self.axis not in _AXIS_PERMUTATION:
            raise InvalidConfigError(f"axis must be one of 'x', 'y', 'z', got {self.axis!r}")

    def sample(self, t: float) -> Array:
        ang = self.rate * t + self.phase
        local = np.array(
            [
                self.radius * math.cos(ang),
                self.radius * math.sin(ang),
                self.pitch * self.rate * t / (2.0 * math.pi),
            ]
        )
        perm = _AXIS_PERMUTATION[self.axis]
        return self.center + local[list(perm)]


def _interp_path(points: Array, times: Array, t: float) -> Array:
    # np.interp clamps at both ends, which implements the hold behavior
    return np.array([np.interp(t, times, points[:, k]) for k in range(3)])


@dataclass(frozen=True)
class SharpTurn:
    """Piecewise-linear path through waypoints at constant speed (mm/s).

    Consecutive equal waypoints are rejected; the path is C0 only, so the
    direction jumps at every interior waypoint (that is the point).
    """

    waypoints: Array
    speed: float
    times: Array = field(init=False)

    def __post_init__(self):
        pts = np.array(self.waypoints, dtype=float)
        if pts.ndim != 2 or pts.shape[1] != 3 or pts.shape[0] < 2:
            raise InvalidConfigError(
                f"waypoints must be (m, 3) with m >= 2, got shape {pts.shape}"
            )
        if not np.all(np.isfinite(pts)):
            raise InvalidConfigError("waypoints contain non-finite values")
        speed = _finite(self.speed, "speed")
        if speed <= 0.0:
            raise InvalidConfigError(f"speed must be positive, got {speed:g}")
        seg = np.linalg.norm(np.diff(pts, axis=0), axis=1)
        if np.any(seg == 0.0):
            raise InvalidConfigError("consecutive waypoints must be distinct")
        times = np.concatenate([[0.0], np.cumsum(seg)]) / speed
        pts.setflags(write=False)
        times.setflags(write=False)
        object.__setattr__(self, "waypoints", pts)
        object.__setattr__(self, "speed", speed)
        object.__setattr__(self, "times", times)

    def corner_times(self) -> Array:
        """Times of the interior waypoints (s)."""
        return self.times[1:-1]

    def sample(self, t: float) -> Array:
        return _interp_path(self.waypoints, self.times, t)


@dataclass(frozen=True)
class Sinusoidal:
    """Straight insertion along +z with sinusoidal x/y offsets.

    p(t) = (amplitude_x*sin(2pi f_x t + phase_x),
            amplitude_y*sin(2pi f_y t + phase_y), axial_speed*t).
    """

    axial_speed: float
    amplitude: Array = (0.0, 0.0)   # mm
    frequency: Array = (0.0, 0.0)   # Hz
    phase: Array = (0.0, 0.0)       # rad

    def __post_init__(self):
        object.__setattr__(self, "axial_speed", _finite(self.axial_speed, "axial_speed"))
        object.__setattr__(self, "amplitude", _vec(self.amplitude, "amplitude", 2))
        object.__setattr__(self, "frequency", _vec(self.frequency, "frequency", 2))
        object.__setattr__(self, "phase", _vec(self.phase, "phase", 2))

    def sample(self, t: float) -> Array:
        arg = 2.0 * np.pi * self.frequency * t + self.phase
        lateral = self.amplitude * np.sin(arg)
        return np.array([lateral[0], lateral[1], self.axial_speed * t])


@dataclass(frozen=True)
class WaypointPath:
    """Linear interpolation through (time, point) samples, held at the ends."""

    points: Array
    times: Array

    def __post_init__(self):
        pts = np.array(self.points, dtype=float)
        times = np.array(self.times, dtype=float).reshape(-1)
        if pts.ndim != 2 or pts.shape[1] != 3 or pts.shape[0] < 2:
            raise InvalidConfigError(f"points must be (m, 3) with m >= 2, got shape {pts.shape}")
        if times.shape != (pts.shape[0],):
            raise InvalidConfigError(
                f"times must have one entry per point, got {times.shape} for {pts.shape[0]} points"
            )
        if not (np.all(np.isfinite(pts)) and np.all(np.isfinite(times))):
            raise InvalidConfigError("points or times contain non-finite values")
        if np.any(np.diff(times) <= 0.0):
            raise InvalidConfigError("times must be strictly increasing")
        pts.setflags(write=False)
        times.setflags(write=False)
        object.__setattr__(self, "points", pts)
        object.__setattr__(self, "times", times)

    def sample(self, t: float) -> Array:
        return _interp_path(self.points, self.times, t)


@dataclass(frozen=True)
class Replay:
    """A recorded tip trajectory played back as the reference.

    Querying before the first recorded timestamp raises OutOfRangeError;
    querying past the last holds the final point.
    """

    times: Array
    points: Array

    def __post_init__(self):
        path = WaypointPath(points=self.points, times=self.times)  # reuse validation
        object.__setattr__(self, "points", path.points)
        object.__setattr__(self, "times", path.times)

    @classmethod
    def from_csv(cls, path) -> "Replay":
        with open(path, newline="") as fh:
            reader = csv.reader(fh)
            header = next(reader, None)
            expected = ["t_s", "x_mm", "y_mm", "z_mm"]
            if header is None or [h.strip() for h in header] != expected:
                raise InvalidInputError(
                    f"{path}: expected header {','.join(expected)!r}, got {header}"
                )
            rows = []
            for lineno, row in enumerate(reader, start=2):
                if not row:
                    continue
                if len(row) != 4:
                    raise InvalidInputError(f"{path}:{lineno}: expected 4 columns, got {len(row)}")
                try:
                    rows.append([float(v) for v in row])
                except ValueError:
                    raise InvalidInputError(f"{path}:{lineno}: non-numeric value in {row}") from None
        if len(rows) < 2:
            raise InvalidInputError(f"{path}: need at least 2 samples, got {len(rows)}")
        data = np.array(rows)
        return cls(times=data[:, 0], points=data[:, 1:])

    def sample(self, t: float) -> Array:
        if t < self.times[0] - 1e-12:
            raise OutOfRangeError(
                f"time {t:g} s precedes the first replay sample at {self.times[0]:g} s"
            )
        return _interp_path(self.points, self.times, t)


ReferenceSpec = Union[FixedTarget, Helix, SharpTurn, Sinusoidal, WaypointPath, Replay]


def sample(spec: ReferenceSpec, t: float) -> Array:
    """Target position (mm) at time t (s)."""
    t = float(t)
    if not math.isfinite(t) or t < 0.0:
        raise InvalidInputError(f"t must be nonnegative and finite, got {t!r}")
    return spec.sample(t)


def horizon_samples(spec: ReferenceSpec, t: float, n: int, ts: float) -> Array:
    """Targets at t, t+ts, ..., t+n*ts as an (n+1, 3) array."""
    if n < 1:
        raise InvalidInputError(f"n must be >= 1, got {n}")
    if not ts > 0.0:
        raise InvalidInputError(f"ts must be positive, got {ts!r}")
    return np.stack([sample(spec, t + i * ts) for i in range(n + 1)])


def check_path_speed(
    spec: ReferenceSpec, duration: float, u_s_max: float, margin: float = 1.05,
    samples: int = 512,
) -> float:
    """Largest finite-difference path speed over [0, duration] (mm/s).

    Warns when it exceeds u_s_max * margin, meaning not even straight-line
    insertion at full speed could keep up with the reference.
    """
    if duration <= 0.0:
        raise InvalidInputError(f"duration must be positive, got {duration!r}")
    grid = np.linspace(0.0, duration, samples)
    pts = np.stack([sample(spec, t) for t in grid])
    dt = grid[1] - grid[0]
    speeds = np.linalg.norm(np.diff(pts, axis=0), axis=1) / dt
    top = float(speeds.max()) if speeds.size else 0.0
    if top > u_s_max * margin:
        warnings.warn(
            f"reference path speed {top:.3g} mm/s exceeds the insertion speed bound "
            f"{u_s_max:.3g} mm/s by more than {100 * (margin - 1):.0f}%; "
            "the trajectory cannot be tracked",
            stacklevel=2,
        )
    return top
