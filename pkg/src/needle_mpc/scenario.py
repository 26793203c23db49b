"""Scenario documents: strict JSON schema, presets, resolved echoes.

A scenario file is a JSON object with a schema_version and five sections
(mpc, geometry, plant, reference, run). Parsing is strict: unknown keys are
rejected by name rather than ignored, so typos surface as errors instead of
silently running defaults. scenario_to_dict materializes every default,
producing a document that parses back to the identical scenario; run
summaries embed that echo so any result can be reproduced from its own
output file.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from importlib import resources

from .errors import InvalidConfigError, InvalidInputError, SchemaError
from .harness import PlantConfig, RunConfig
from .mapping import TendonGeometry
from .mpc import MpcConfig
from .references import (
    FixedTarget,
    Helix,
    Replay,
    ReferenceSpec,
    SharpTurn,
    Sinusoidal,
    WaypointPath,
)

SCHEMA_VERSION = 1

_SECTIONS = ("mpc", "geometry", "plant", "reference", "run")


@dataclass(frozen=True)
class Scenario:
    mpc: MpcConfig
    geometry: TendonGeometry
    plant: PlantConfig
    reference: ReferenceSpec
    run: RunConfig


def _take(section: dict, section_name: str, known: dict) -> dict:
    """Map JSON keys to constructor kwargs, rejecting unknown keys."""
    unknown = sorted(set(section) - set(known))
    if unknown:
        raise SchemaError(f"unknown key(s) in section '{section_name}': {', '.join(unknown)}")
    return {known[k]: v for k, v in section.items()}


def _build(section_name: str, ctor, kwargs: dict):
    try:
        return ctor(**kwargs)
    except (InvalidConfigError, InvalidInputError) as exc:
        raise SchemaError(f"section '{section_name}': {exc}") from exc
    except TypeError as exc:
        raise SchemaError(f"section '{section_name}': {exc}") from exc


_MPC_KEYS = {
    "T_s_s": "ts",
    "horizon": "horizon",
    "q_weights": "q_weights",
    "r_weights": "r_weights",
    "u_s_bounds_mm_s": "u_s_bounds",
    "u_x_bounds_rad_s": "u_x_bounds",
    "u_y_bounds_rad_s": "u_y_bounds",
    "planar_mode": "planar_mode",
    "max_iterations": "max_iterations",
    "gradient_tolerance": "gradient_tolerance",
    "multi_start": "multi_start",
    "seed": "seed",
}

_GEOMETRY_KEYS = {
    "theta_e_rad": "theta_e",
    "gain_per_mm_N": "gain",
    "tau_max_N": "tau_max",
}

_PLANT_KEYS = {
    "integrator": "integrator",
    "gain_error": "gain_error",
    "theta_e_error_rad": "theta_e_error",
    "measurement_noise_std_mm": "measurement_noise_std",
    "latency_steps": "latency_steps",
    "seed": "seed",
}

_RUN_KEYS = {
    "steps": "steps",
    "initial_state": "initial_state",
    "early_stop": "early_stop",
    "stop_tolerance_mm": "stop_tolerance_mm",
    "stop_speed_mm_s": "stop_speed_mm_s",
    "exclude_terminal_s": "exclude_terminal_s",
    "fault_budget": "fault_budget",
}

_REFERENCE_KEYS = {
    "fixed_target": ({"target_mm": "target"}, FixedTarget),
    "helix": (
        {
            "radius_mm": "radius",
            "pitch_mm": "pitch",
            "rate_rad_s": "rate",
            "center_mm": "center",
            "phase_rad": "phase",
            "axis": "axis",
        },
        Helix,
    ),
    "sharp_turn": ({"waypoints_mm": "waypoints", "speed_mm_s": "speed"}, SharpTurn),
    "sinusoidal": (
        {
            "axial_speed_mm_s": "axial_speed",
            "amplitude_mm": "amplitude",
            "frequency_hz": "frequency",
            "phase_rad": "phase",
        },
        Sinusoidal,
    ),
    "waypoint_path": ({"points_mm": "points", "times_s": "times"}, WaypointPath),
    "replay": ({"csv_path": "csv_path"}, None),
}


def _reference_from_dict(section: dict) -> ReferenceSpec:
    kind = section.get("kind")
    if kind not in _REFERENCE_KEYS:
        raise SchemaError(
            f"reference kind must be one of {sorted(_REFERENCE_KEYS)}, got {kind!r}"
        )
    keys, ctor = _REFERENCE_KEYS[kind]
    body = {k: v for k, v in section.items() if k != "kind"}
    kwargs = _take(body, f"reference ({kind})", keys)
    if kind == "replay":
        if "csv_path" not in kwargs:
            raise SchemaError("reference (replay): missing required key 'csv_path'")
        try:
            return Replay.from_csv(kwargs["csv_path"])
        except (InvalidConfigError, InvalidInputError, OSError) as exc:
            raise SchemaError(f"reference (replay): {exc}") from exc
    return _build(f"reference ({kind})", ctor, kwargs)


def scenario_from_dict(doc: dict) -> Scenario:
    if not isinstance(doc, dict):
        raise SchemaError(f"scenario document must be a JSON object, got {type(doc).__name__}")
    version = doc.get("schema_version")
    if version is None:
        raise SchemaError("missing required key 'schema_version'")
    if version != SCHEMA_VERSION:
        raise SchemaError(f"unsupported schema_version {version!r}, expected {SCHEMA_VERSION}")
    unknown = sorted(set(doc) - set(_SECTIONS) - {"schema_version"})
    if unknown:
        raise SchemaError(f"unknown top-level key(s): {', '.join(unknown)}")
    missing = sorted(set(_SECTIONS) - set(doc))
    if missing:
        raise SchemaError(f"missing required section(s): {', '.join(missing)}")
    for name in _SECTIONS:
        if not isinstance(doc[name], dict):
            raise SchemaError(f"section '{name}' must be a JSON object")

    mpc = _build("mpc", MpcConfig, _take(doc["mpc"], "mpc", _MPC_KEYS))
    geometry = _build("geometry", TendonGeometry, _take(doc["geometry"], "geometry", _GEOMETRY_KEYS))
    plant = _build("plant", PlantConfig, _take(doc["plant"], "plant", _PLANT_KEYS))
    reference = _reference_from_dict(doc["reference"])
    run = _build("run", RunConfig, _take(doc["run"], "run", _RUN_KEYS))
    return Scenario(mpc=mpc, geometry=geometry, plant=plant, reference=reference, run=run)


def _reference_to_dict(ref: ReferenceSpec) -> dict:
    if isinstance(ref, FixedTarget):
        return {"kind": "fixed_target", "target_mm": list(ref.target)}
    if isinstance(ref, Helix):
        return {
            "kind": "helix",
            "radius_mm": ref.radius,
            "pitch_mm": ref.pitch,
            "rate_rad_s": ref.rate,
            "center_mm": list(ref.center),
            "phase_rad": ref.phase,
            "axis": ref.axis,
        }
    if isinstance(ref, SharpTurn):
        return {
            "kind": "sharp_turn",
            "waypoints_mm": [list(w) for w in ref.waypoints],
            "speed_mm_s": ref.speed,
        }
    if isinstance(ref, Sinusoidal):
        return {
            "kind": "sinusoidal",
            "axial_speed_mm_s": ref.axial_speed,
            "amplitude_mm": list(ref.amplitude),
            "frequency_hz": list(ref.frequency),
            "phase_rad": list(ref.phase),
        }
    if isinstance(ref, WaypointPath):
        return {
            "kind": "waypoint_path",
            "points_mm": [list(p) for p in ref.points],
            "times_s": list(ref.times),
        }
    if isinstance(ref, Replay):
        # replays resolve to explicit samples so the echo is self-contained
        return {
            "kind": "waypoint_path",
            "points_mm": [list(p) for p in ref.points],
            "times_s": list(ref.times),
        }
    raise InvalidInputError(f"unknown reference type {type(ref).__name__}")


def scenario_to_dict(scenario: Scenario) -> dict:
    """Fully resolved scenario document with every default materialized."""
    mpc = scenario.mpc
    geometry = scenario.geometry
    plant = scenario.plant
    run = scenario.run
    return {
        "schema_version": SCHEMA_VERSION,
        "mpc": {
            "T_s_s": mpc.ts,
            "horizon": mpc.horizon,
            "q_weights": list(mpc.q_weights),
            "r_weights": list(mpc.r_weights),
            "u_s_bounds_mm_s": list(mpc.u_s_bounds),
            "u_x_bounds_rad_s": list(mpc.u_x_bounds),
            "u_y_bounds_rad_s": list(mpc.u_y_bounds),
            "planar_mode": mpc.planar_mode,
            "max_iterations": mpc.max_iterations,
            "gradient_tolerance": mpc.gradient_tolerance,
            "multi_start": mpc.multi_start,
            "seed": mpc.seed,
        },
        "geometry": {
            "theta_e_rad": geometry.theta_e,
            "gain_per_mm_N": geometry.gain,
            "tau_max_N": geometry.tau_max,
        },
        "plant": {
            "integrator": plant.integrator,
            "gain_error": plant.gain_error,
            "theta_e_error_rad": plant.theta_e_error,
            "measurement_noise_std_mm": list(plant.measurement_noise_std),
            "latency_steps": plant.latency_steps,
            "seed": plant.seed,
        },
        "reference": _reference_to_dict(scenario.reference),
        "run": {
            "steps": run.steps,
            "initial_state": list(run.initial_state),
            "early_stop": run.early_stop,
            "stop_tolerance_mm": run.stop_tolerance_mm,
            "stop_speed_mm_s": run.stop_speed_mm_s,
            "exclude_terminal_s": run.exclude_terminal_s,
            "fault_budget": run.fault_budget,
        },
    }


def load_scenario(path) -> Scenario:
    try:
        with open(path) as fh:
            doc = json.load(fh)
    except json.JSONDecodeError as exc:
        raise SchemaError(f"{path}: not valid JSON: {exc}") from exc
    return scenario_from_dict(doc)


def with_seed(scenario: Scenario, seed: int) -> Scenario:
    """Copy of the scenario with the plant seed replaced."""
    plant = scenario.plant
    return Scenario(
        mpc=scenario.mpc,
        geometry=scenario.geometry,
        plant=PlantConfig(
            integrator=plant.integrator,
            gain_error=plant.gain_error,
            theta_e_error=plant.theta_e_error,
            measurement_noise_std=plant.measurement_noise_std,
            latency_steps=plant.latency_steps,
            seed=seed,
        ),
        reference=scenario.reference,
        run=scenario.run,
    )


def preset_names() -> list[str]:
    files = resources.files("needle_mpc").joinpath("presets")
    return sorted(
        p.name[: -len(".json")] for p in files.iterdir() if p.name.endswith(".json")
    )


def load_preset(name: str) -> Scenario:
    path = resources.files("needle_mpc").joinpath("presets", f"{name}.json")
    if not path.is_file():
        raise InvalidInputError(
            f"unknown preset {name!r}; available: {', '.join(preset_names())}"
        )
    doc = json.loads(path.read_text())
    return scenario_from_dict(doc)


def replay_command_names() -> list[str]:
    files = resources.files("needle_mpc").joinpath("presets", "replays")
    return sorted(p.name[: -len(".csv")] for p in files.iterdir() if p.name.endswith(".csv"))


def replay_commands_path(name: str):
    """Filesystem path of a bundled command CSV (they ship as real files)."""
    path = resources.files("needle_mpc").joinpath("presets", "replays", f"{name}.csv")
    if not path.is_file():
        raise InvalidInputError(
            f"unknown command file {name!r}; available: {', '.join(replay_command_names())}"
        )
    return path
