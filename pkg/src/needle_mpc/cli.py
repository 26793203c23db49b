"""Command-line entry points.

    needle-mpc run (SCENARIO.json | --preset NAME) [--out DIR] [--seed N]
    needle-mpc calibrate RUNS_DIR [--out FILE]
    needle-mpc replay COMMANDS.csv (SCENARIO.json | --preset NAME) [--out DIR]
    needle-mpc batch (SCENARIO.json ... | --preset all) [--out DIR] [--seed N]

Exit codes: 0 success, 2 invalid scenario/input, 3 runtime failure. Batch
parallelism is capped by the NEEDLE_MPC_THREADS environment variable.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from concurrent.futures import ProcessPoolExecutor

from . import calibration, harness, scenario as scenario_mod
from .errors import (
    DegenerateFitError,
    InvalidConfigError,
    InvalidInputError,
    NeedleMpcError,
    OutOfRangeError,
    SchemaError,
)

EXIT_OK = 0
EXIT_INVALID = 2
EXIT_RUNTIME = 3

_VALIDATION_ERRORS = (
    SchemaError,
    InvalidConfigError,
    InvalidInputError,
    DegenerateFitError,
    OutOfRangeError,
)

THREADS_ENV = "NEEDLE_MPC_THREADS"


def _load_scenario(args) -> scenario_mod.Scenario:
    if args.preset and args.scenario:
        raise InvalidInputError("give either a scenario path or --preset, not both")
    if args.preset:
        scn = scenario_mod.load_preset(args.preset)
    elif args.scenario:
        scn = scenario_mod.load_scenario(args.scenario)
    else:
        raise InvalidInputError("a scenario path or --preset is required")
    if getattr(args, "seed", None) is not None:
        scn = scenario_mod.with_seed(scn, args.seed)
    return scn


def _run_and_write(scn: scenario_mod.Scenario, out_dir: str) -> dict:
    os.makedirs(out_dir, exist_ok=True)
    result = harness.run_closed_loop(scn)
    harness.write_step_csv(result, os.path.join(out_dir, "steps.csv"))
    harness.write_summary_json(
        result, scenario_mod.scenario_to_dict(scn), os.path.join(out_dir, "summary.json")
    )
    return harness.summary_dict(result)


def cmd_run(args) -> int:
    scn = _load_scenario(args)
    summary = _run_and_write(scn, args.out)
    pct = summary["error_pct_of_insertion"]
    pct_text = f"{pct:.3g}%" if pct is not None else "n/a"
    print(
        f"final error {summary['final_error_mm']:.3g} mm over "
        f"{summary['inserted_length_mm']:.4g} mm inserted ({pct_text}), "
        f"{summary['steps']} steps -> {args.out}"
    )
    return EXIT_OK


def cmd_calibrate(args) -> int:
    runs = calibration.load_runs_dir(args.runs_dir)
    result = calibration.calibrate(runs)
    doc = {
        "gain_per_mm_N": result.gain,
        "residual_rms_per_mm": result.residual_rms,
        "runs": [
            {"tension_N": t, "curvature_per_mm": k}
            for t, k in zip(result.tensions, result.curvatures)
        ],
    }
    with open(args.out, "w") as fh:
        json.dump(doc, fh, indent=2)
        fh.write("\n")
    print(f"gain {result.gain:.6g} 1/(mm N), residual rms {result.residual_rms:.3g} 1/mm -> {args.out}")
    return EXIT_OK


def cmd_replay(args) -> int:
    scn = _load_scenario(args)
    commands_path = args.commands
    if not os.path.exists(commands_path):
        # fall back to a bundled command file of that name
        commands_path = scenario_mod.replay_commands_path(args.commands)
    commands = harness.read_commands_csv(commands_path)
    result = harness.run_open_loop(
        commands, scn.plant, scn.geometry, scn.mpc.ts, scn.run.state()
    )
    os.makedirs(args.out, exist_ok=True)
    harness.write_open_loop_csv(result, scn.mpc.ts, os.path.join(args.out, "open_loop.csv"))
    doc = {
        "max_error_mm": result.max_error_mm,
        "inserted_length_mm": result.inserted_length_mm,
        "error_pct_of_insertion": result.error_pct_of_insertion,
        "steps": len(result.errors) - 1,
        "scenario": scenario_mod.scenario_to_dict(scn),
    }
    with open(os.path.join(args.out, "open_loop_summary.json"), "w") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True)
        fh.write("\n")
    pct = result.error_pct_of_insertion
    pct_text = f"{pct:.3g}%" if pct is not None else "n/a"
    print(
        f"max model-vs-plant error {result.max_error_mm:.3g} mm over "
        f"{result.inserted_length_mm:.4g} mm inserted ({pct_text}) -> {args.out}"
    )
    return EXIT_OK


def _batch_worker(job: tuple[str, str, int | None]) -> tuple[str, dict]:
    source, out_dir, seed = job
    if os.path.exists(source):
        scn = scenario_mod.load_scenario(source)
    else:
        scn = scenario_mod.load_preset(source)
    if seed is not None:
        scn = scenario_mod.with_seed(scn, seed)
    return source, _run_and_write(scn, out_dir)


def _worker_cap(n_jobs: int) -> int:
    env = os.environ.get(THREADS_ENV)
    if env is not None:
        try:
            cap = int(env)
        except ValueError:
            raise InvalidConfigError(f"{THREADS_ENV} must be an integer, got {env!r}") from None
        if cap < 1:
            raise InvalidConfigError(f"{THREADS_ENV} must be >= 1, got {cap}")
    else:
        cap = os.cpu_count() or 1
    return max(1, min(cap, n_jobs))


def cmd_batch(args) -> int:
    if args.preset == "all":
        sources = scenario_mod.preset_names()
    elif args.preset:
        sources = [args.preset]
    else:
        sources = list(args.scenarios)
    if not sources:
        raise InvalidInputError("batch needs scenario paths or --preset")
    jobs = []
    for src in sources:
        label = os.path.splitext(os.path.basename(src))[0]
        jobs.append((src, os.path.join(args.out, label), args.seed))
    workers = _worker_cap(len(jobs))
    if workers == 1:
        results = [_batch_worker(j) for j in jobs]
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_batch_worker, jobs))
    for source, summary in results:
        print(f"{source}: final error {summary['final_error_mm']:.3g} mm, {summary['steps']} steps")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="needle-mpc",
        description="Closed-loop control and calibration tools for a tendon-steered needle.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    run_p = sub.add_parser("run", help="run a closed-loop scenario")
    run_p.add_argument("scenario", nargs="?", help="scenario JSON file")
    run_p.add_argument("--preset", help="bundled scenario name (see --list-presets)")
    run_p.add_argument("--out", default="out", help="output directory (default: out)")
    run_p.add_argument("--seed", type=int, default=None, help="override the plant seed")
    run_p.set_defaults(func=cmd_run)

    cal_p = sub.add_parser("calibrate", help="fit the tension-to-curvature gain")
    cal_p.add_argument("runs_dir", help="directory with manifest.json and run CSVs")
    cal_p.add_argument("--out", default="calibration.json", help="output JSON file")
    cal_p.set_defaults(func=cmd_calibrate)

    rep_p = sub.add_parser("replay", help="replay recorded tendon commands open loop")
    rep_p.add_argument("commands", help="commands CSV (or a bundled name like replay1)")
    rep_p.add_argument("scenario", nargs="?", help="scenario JSON providing geometry and plant")
    rep_p.add_argument("--preset", help="bundled scenario name")
    rep_p.add_argument("--out", default="out", help="output directory (default: out)")
    rep_p.add_argument("--seed", type=int, default=None, help="override the plant seed")
    rep_p.set_defaults(func=cmd_replay)

    bat_p = sub.add_parser("batch", help="run several scenarios in parallel")
    bat_p.add_argument("scenarios", nargs="*", help="scenario JSON files")
    bat_p.add_argument("--preset", help="bundled scenario name, or 'all'")
    bat_p.add_argument("--out", default="out", help="root output directory")
    bat_p.add_argument("--seed", type=int, default=None, help="override every plant seed")
    bat_p.set_defaults(func=cmd_batch)

    lst_p = sub.add_parser("presets", help="list bundled scenario and command names")
    lst_p.set_defaults(func=cmd_presets)
    return parser


def cmd_presets(args) -> int:
    for name in scenario_mod.preset_names():
        print(name)
    for name in scenario_mod.replay_command_names():
        print(f"replays/{name}")
    return EXIT_OK


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except _VALIDATION_ERRORS as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except NeedleMpcError as exc:
        print(f"runtime error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
