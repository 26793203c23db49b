"""Tension-to-curvature gain calibration from recorded tip arcs.

Each calibration run holds one tendon at a constant tension while inserting
at constant speed, which bends the tip along a circular arc. The arc's
curvature comes from a circle fit (see mapping.estimate_curvature), and a
through-origin line fit of curvature against tension yields the gain that
the controller-side geometry should use.

Runs load from a directory of per-run CSVs (columns x_mm, y_mm, z_mm)
described by a manifest.json sidecar:

    {"runs": [{"file": "run01.csv", "tendon_index": 1, "tension_N": 2.0}, ...]}
"""

from __future__ import annotations

import csv
import json
import math
import os
from dataclasses import dataclass

import numpy as np

from .errors import DegenerateFitError, InvalidInputError, SchemaError
from .kinematics import Array, NeedleState, VirtualInput, rollout
from .mapping import TendonGeometry, estimate_curvature, fit_gain

MANIFEST_NAME = "manifest.json"
RUN_CSV_COLUMNS = ["x_mm", "y_mm", "z_mm"]


@dataclass(frozen=True)
class CalibrationRun:
    """Recorded tip positions (n, 3) for one tendon held at one tension."""

    tendon_index: int
    tension: float
    tip_points: Array

    def __post_init__(self):
        idx = int(self.tendon_index)
        if idx not in (1, 2, 3):
            raise InvalidInputError(f"tendon_index must be 1, 2 or 3, got {self.tendon_index}")
        object.__setattr__(self, "tendon_index", idx)
        tension = float(self.tension)
        if not math.isfinite(tension) or tension < 0.0:
            raise InvalidInputError(f"tension must be nonnegative, got {self.tension!r}")
        object.__setattr__(self, "tension", tension)
        pts = np.array(self.tip_points, dtype=float)
        if pts.ndim != 2 or pts.shape[1] != 3 or pts.shape[0] < 3:
            raise InvalidInputError(
                f"tip_points must be (n, 3) with n >= 3, got shape {pts.shape}"
            )
        if not np.all(np.isfinite(pts)):
            raise InvalidInputError("tip_points contain non-finite values")
        pts.setflags(write=False)
        object.__setattr__(self, "tip_points", pts)


@dataclass(frozen=True)
class CalibrationResult:
    gain: float                       # 1/(mm N)
    curvatures: tuple[float, ...]     # per-run circle-fit curvature, 1/mm
    tensions: tuple[float, ...]       # per-run tension, N
    residual_rms: float               # rms of kappa - gain*tau over runs


def calibrate(runs) -> CalibrationResult:
    """Fit the curvature gain from a set of calibration runs.

    Needs at least two runs covering at least two distinct tensions;
    otherwise the through-origin slope is not identified.
    """
    runs = list(runs)
    if len(runs) < 2:
        raise InvalidInputError(f"need at least 2 calibration runs, got {len(runs)}")
    tensions = [r.tension for r in runs]
    if len(set(tensions)) < 2:
        raise DegenerateFitError(
            f"calibration needs at least 2 distinct tensions, got {sorted(set(tensions))}"
        )
    curvatures = [estimate_curvature(r.tip_points) for r in runs]
    gain = fit_gain(zip(tensions, curvatures))
    residuals = np.array(curvatures) - gain * np.array(tensions)
    return CalibrationResult(
        gain=gain,
        curvatures=tuple(curvatures),
        tensions=tuple(tensions),
        residual_rms=float(np.sqrt(np.mean(residuals**2))),
    )


def simulate_calibration_run(
    tendon_index: int,
    tension: float,
    geometry: TendonGeometry,
    u_s: float = 20.0,
    ts: float = 0.05,
    steps: int = 100,
) -> CalibrationRun:
    """Synthesize the tip arc a physical calibration run would record."""
    tau = np.zeros(3)
    tau[tendon_index - 1] = tension
    kappa = geometry.curvature_matrix() @ tau
    u = VirtualInput(u_s=u_s, u_x=float(kappa[0]) * u_s, u_y=float(kappa[1]) * u_s)
    s0 = NeedleState(p=np.zeros(3), d=(0.0, 0.0, 1.0))
    states = rollout(s0, [u] * steps, ts, integrator="exact")
    return CalibrationRun(
        tendon_index=tendon_index,
        tension=tension,
        tip_points=np.array([s.p for s in states]),
    )


def _read_run_csv(path) -> Array:
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or [h.strip() for h in header] != RUN_CSV_COLUMNS:
            raise InvalidInputError(
                f"{path}: expected header {','.join(RUN_CSV_COLUMNS)!r}, got {header}"
            )
        rows = []
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != 3:
                raise InvalidInputError(f"{path}:{lineno}: expected 3 columns, got {len(row)}")
            try:
                rows.append([float(v) for v in row])
            except ValueError:
                raise InvalidInputError(f"{path}:{lineno}: non-numeric value in {row}") from None
    if len(rows) < 3:
        raise InvalidInputError(f"{path}: need at least 3 points, got {len(rows)}")
    return np.array(rows)


def load_runs_dir(directory) -> list[CalibrationRun]:
    """Load all calibration runs described by a directory's manifest."""
    manifest_path = os.path.join(directory, MANIFEST_NAME)
    if not os.path.isfile(manifest_path):
        raise InvalidInputError(f"no {MANIFEST_NAME} found in {directory}")
    try:
        with open(manifest_path) as fh:
            manifest = json.load(fh)
    except json.JSONDecodeError as exc:
        raise SchemaError(f"{manifest_path}: not valid JSON: {exc}") from exc
    if not isinstance(manifest, dict) or "runs" not in manifest:
        raise SchemaError(f"{manifest_path}: expected an object with a 'runs' array")
    entries = manifest["runs"]
    if not isinstance(entries, list) or not entries:
        raise SchemaError(f"{manifest_path}: 'runs' must be a non-empty array")
    runs = []
    for k, entry in enumerate(entries):
        if not isinstance(entry, dict):
            raise SchemaError(f"{manifest_path}: runs[{k}] must be an object")
        unknown = sorted(set(entry) - {"file", "tendon_index", "tension_N"})
        if unknown:
            raise SchemaError(f"{manifest_path}: runs[{k}] has unknown key(s): {', '.join(unknown)}")
        missing = sorted({"file", "tendon_index", "tension_N"} - set(entry))
        if missing:
            raise SchemaError(f"{manifest_path}: runs[{k}] missing key(s): {', '.join(missing)}")
        points = _read_run_csv(os.path.join(directory, entry["file"]))
        runs.append(
            CalibrationRun(
                tendon_index=entry["tendon_index"],
                tension=entry["tension_N"],
                tip_points=points,
            )
        )
    return runs


def write_runs_dir(runs, directory) -> None:
    """Write runs as per-run CSVs plus the manifest (inverse of load_runs_dir)."""
    os.makedirs(directory, exist_ok=True)
    entries = []
    for k, run in enumerate(runs):
        name = f"run{k:02d}.csv"
        with open(os.path.join(directory, name), "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(RUN_CSV_COLUMNS)
            for p in run.tip_points:
                writer.writerow([f"{v:.9g}" for v in p])
        entries.append(
            {"file": name, "tendon_index": run.tendon_index, "tension_N": run.tension}
        )
    with open(os.path.join(directory, MANIFEST_NAME), "w") as fh:
        json.dump({"runs": entries}, fh, indent=2)
        fh.write("\n")
