"""Operator entry point: simulate missions, collect datasets, benchmark, serve.

One binary, subcommand style. Every command honors --seed for reproducible
output with the heuristic backend and --config FILE for JSON defaults;
precedence is flags over config file over built-ins. Exit codes: 0 success,
1 mission or search failure, 2 configuration error.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

from .bench import DENSITY_TIERS, format_table, run_benchmark, write_trial_log
from .dataset import CollectConfig, Exporter, collect_episode, episode_seeds, validate_dataset
from .gridworld import MapGenerationError, generate_map, load_map
from .mcts import MctsConfig
from .mission import (
    MctsPlanner,
    MissionConfig,
    MissionSetupError,
    SingleShotPlanner,
    replay_record,
    run_mission,
    write_replay,
)
from .proposer import ConfigurationError, HeuristicBackend, RemoteBackend, RemoteConfig

EXIT_OK = 0
EXIT_FAILURE = 1
EXIT_CONFIG = 2

DEFAULT_ADDR = "127.0.0.1:8732"


def _load_config_file(path: str | None) -> dict:
    if path is None:
        return {}
    try:
        with open(path, "r", encoding="utf-8") as f:
            payload = json.load(f)
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigurationError(f"config file {path}: {exc}")
    if not isinstance(payload, dict):
        raise ConfigurationError(f"config file {path}: expected an object at top level")
    return payload


def _merge(defaults: dict, config: dict, args: argparse.Namespace) -> dict:
    """flags > config file > defaults; unknown config keys are rejected."""
    merged = dict(defaults)
    for key, value in config.items():
        if key not in defaults:
            raise ConfigurationError(f"unknown config key {key!r}")
        merged[key] = value
    for key in defaults:
        flag_value = getattr(args, key, None)
        if flag_value is not None:
            merged[key] = flag_value
    return merged


def _backend(kind: str):
    if kind == "heuristic":
        return HeuristicBackend()
    if kind == "remote":
        return RemoteBackend(RemoteConfig.from_env())
    raise ConfigurationError(f"unknown backend {kind!r}")


def _planner(kind: str, backend, rollouts: int):
    if kind == "mcts":
        return MctsPlanner(backend, MctsConfig(n_rollouts=rollouts))
    if kind == "single-shot":
        return SingleShotPlanner(backend)
    raise ConfigurationError(f"unknown planner {kind!r}")


def _mission_grid(merged: dict, seed: int):
    if merged["map"] is not None:
        return load_map(merged["map"])
    return generate_map(merged["width"], merged["height"], merged["density"], seed)


# ----- simulate -----

SIMULATE_DEFAULTS = {
    "map": None,
    "width": 10,
    "height": 10,
    "density": 0.15,
    "instruction": "cover the entire area",
    "planner": "mcts",
    "backend": "heuristic",
    "rollouts": 8,
    "target_cr": 0.95,
    "replan_every": 5,
    "max_steps": 400,
    "replay_out": None,
}


def cmd_simulate(args: argparse.Namespace) -> int:
    merged = _merge(SIMULATE_DEFAULTS, _load_config_file(args.config), args)
    seed = args.seed
    grid = _mission_grid(merged, seed)
    planner = _planner(merged["planner"], _backend(merged["backend"]), merged["rollouts"])
    config = MissionConfig(
        target_cr=merged["target_cr"],
        replan_every=merged["replan_every"],
        max_steps=merged["max_steps"],
    )
    records = []
    state, metrics = run_mission(
        grid,
        merged["instruction"],
        planner,
        config,
        seed=seed,
        on_step=lambda s: records.append(replay_record(s)),
    )
    if merged["replay_out"]:
        write_replay(merged["replay_out"], records)
    out = {
        "cr": round(metrics.cr, 2),
        "dr": round(metrics.dr, 2),
        "steps": metrics.steps,
        "replans": metrics.replans,
        "status": state.status.value,
    }
    if state.failure_cause:
        out["cause"] = state.failure_cause
    if args.format == "structured":
        print(json.dumps(out))
    else:
        print(f"CR {out['cr']:.2f}")
        print(f"DR {out['dr']:.2f}")
        print(f"steps {out['steps']}")
        print(f"status {out['status']}")
        if "cause" in out:
            print(f"cause {out['cause']}")
    return EXIT_OK if metrics.completed else EXIT_FAILURE


# ----- collect -----

COLLECT_DEFAULTS = {
    "episodes": 10,
    "out": "dataset/data",
    "split": 0.8,
    "shard_size": 64,
    "backend": "heuristic",
    "rollouts": 8,
    "width": 10,
    "height": 10,
    "validate": False,
}


def cmd_collect(args: argparse.Namespace) -> int:
    merged = _merge(COLLECT_DEFAULTS, _load_config_file(args.config), args)
    backend = _backend(merged["backend"])
    config = CollectConfig(
        width=merged["width"],
        height=merged["height"],
        mcts=MctsConfig(n_rollouts=merged["rollouts"]),
    )
    n = merged["episodes"]
    seeds = episode_seeds(args.seed, n)
    exporter = Exporter(merged["out"], n, merged["split"], merged["shard_size"], args.seed)
    jobs = max(1, args.jobs)
    emitted = 0

    def run(seed: int):
        return collect_episode(seed, backend, config)

    if jobs > 1:
        from concurrent.futures import ThreadPoolExecutor

        with ThreadPoolExecutor(max_workers=jobs) as pool:
            results = pool.map(run, seeds)
            for i, record in enumerate(results):
                if record is None:
                    print(f"episode {i}: skipped", file=sys.stderr)
                    continue
                exporter.add(record)
                emitted += 1
                _episode_line(args.format, i, record)
    else:
        for i, seed in enumerate(seeds):
            record = run(seed)
            if record is None:
                print(f"episode {i}: skipped", file=sys.stderr)
                continue
            exporter.add(record)
            emitted += 1
            _episode_line(args.format, i, record)
    paths = exporter.close()
    if args.format == "structured":
        print(json.dumps({"episodes": emitted, "files": [str(p) for p in paths]}))
    else:
        print(f"wrote {emitted} records across {len(paths) - 1} shards to {merged['out']}.*")
    if merged["validate"]:
        report = validate_dataset(merged["out"])
        print(report.summary())
        if not report.all_passed:
            return EXIT_FAILURE
    return EXIT_OK if emitted > 0 else EXIT_FAILURE


def _episode_line(fmt: str, index: int, record) -> None:
    if fmt == "structured":
        print(json.dumps({"episode": index, "q": record.score, "instruction": record.instruction}))
    else:
        print(f"episode {index}: q={record.score:.4f} instruction={record.instruction!r}")


# ----- bench -----

BENCH_DEFAULTS = {
    "densities": "sparse,medium,dense",
    "planners": "mcts,single-shot",
    "trials": 10,
    "rollouts": 8,
    "out": None,
    "timing": "on",
    "max_steps": 400,
}


def cmd_bench(args: argparse.Namespace) -> int:
    merged = _merge(BENCH_DEFAULTS, _load_config_file(args.config), args)
    tiers = {}
    for name in str(merged["densities"]).split(","):
        name = name.strip()
        if not name:
            continue
        if name not in DENSITY_TIERS:
            raise ConfigurationError(f"unknown density tier {name!r}; expected one of {sorted(DENSITY_TIERS)}")
        tiers[name] = DENSITY_TIERS[name]
    backend = HeuristicBackend()
    planners = {}
    for kind in str(merged["planners"]).split(","):
        kind = kind.strip()
        if kind:
            planners[kind] = _planner(kind, backend, merged["rollouts"])
    if not tiers or not planners:
        raise ConfigurationError("at least one density tier and one planner required")
    table = run_benchmark(
        planners,
        tiers,
        trials=merged["trials"],
        seed=args.seed,
        mission_config=MissionConfig(max_steps=merged["max_steps"]),
        timing=merged["timing"] != "off",
        jobs=max(1, args.jobs),
    )
    if args.format == "structured":
        rows = [
            {
                "tier": tier,
                "planner": planner,
                "cr": rep.cr,
                "cr_std": rep.cr_std,
                "dr": rep.dr,
                "dr_std": rep.dr_std,
                "sr": rep.sr,
                "csi": rep.csi,
                "il_s": rep.il,
                "trials": rep.trials,
            }
            for (tier, planner), rep in table.items()
        ]
        print(json.dumps(rows))
    else:
        print(format_table(table, "plain"), end="")
    if merged["out"]:
        prefix = Path(merged["out"])
        prefix.parent.mkdir(parents=True, exist_ok=True)
        with open(f"{prefix}.txt", "w", encoding="utf-8") as f:
            f.write(format_table(table, "plain"))
        with open(f"{prefix}.csv", "w", encoding="utf-8") as f:
            f.write(format_table(table, "csv"))
        write_trial_log(table, f"{prefix}.trials.jsonl")
    return EXIT_OK


# ----- serve -----

SERVE_DEFAULTS = {
    "addr": None,
    "checkpoint_dir": ".",
    "ui_dir": None,
}


def cmd_serve(args: argparse.Namespace) -> int:
    merged = _merge(SERVE_DEFAULTS, _load_config_file(args.config), args)
    addr = merged["addr"] or os.environ.get("COVERAGE_PILOT_ADDR") or DEFAULT_ADDR
    host, _, port_text = addr.rpartition(":")
    if not host or not port_text.isdigit():
        raise ConfigurationError(f"bad address {addr!r}; expected host:port")
    import uvicorn

    from .service import create_app

    app = create_app(checkpoint_dir=merged["checkpoint_dir"], ui_dir=merged["ui_dir"])
    try:
        uvicorn.run(app, host=host, port=int(port_text), log_level="warning")
    except (OSError, SystemExit) as exc:
        print(f"error: cannot listen on {addr}: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    return EXIT_OK


# ----- parser -----

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="coverage-pilot", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p: argparse.ArgumentParser) -> None:
        p.add_argument("--seed", type=int, default=0)
        p.add_argument("--config", help="JSON file with per-command defaults")
        p.add_argument("--format", choices=("plain", "structured"), default="plain")
        p.add_argument("--jobs", type=int, default=1)

    p = sub.add_parser("simulate", help="run one mission and print its metrics")
    common(p)
    p.add_argument("--map", help="map JSON file (otherwise generated)")
    p.add_argument("--width", type=int)
    p.add_argument("--height", type=int)
    p.add_argument("--density", type=float)
    p.add_argument("--instruction")
    p.add_argument("--planner", choices=("mcts", "single-shot"))
    p.add_argument("--backend", choices=("heuristic", "remote"))
    p.add_argument("--rollouts", type=int)
    p.add_argument("--target-cr", dest="target_cr", type=float)
    p.add_argument("--replan-every", dest="replan_every", type=int)
    p.add_argument("--max-steps", dest="max_steps", type=int)
    p.add_argument("--replay-out", dest="replay_out")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("collect", help="collect search episodes into a training dataset")
    common(p)
    p.add_argument("--episodes", type=int)
    p.add_argument("--out", help="output stem, e.g. dataset/data")
    p.add_argument("--split", type=float)
    p.add_argument("--shard-size", dest="shard_size", type=int)
    p.add_argument("--backend", choices=("heuristic", "remote"))
    p.add_argument("--rollouts", type=int)
    p.add_argument("--width", type=int)
    p.add_argument("--height", type=int)
    p.add_argument("--validate", action="store_const", const=True)
    p.set_defaults(func=cmd_collect)

    p = sub.add_parser("bench", help="benchmark planners across obstacle densities")
    common(p)
    p.add_argument("--densities", help="comma list from: sparse,medium,dense")
    p.add_argument("--planners", help="comma list from: mcts,single-shot")
    p.add_argument("--trials", type=int)
    p.add_argument("--rollouts", type=int)
    p.add_argument("--out", help="output file prefix for .txt/.csv/.trials.jsonl")
    p.add_argument("--timing", choices=("on", "off"), help="off zeroes latencies for byte-stable output")
    p.add_argument("--max-steps", dest="max_steps", type=int)
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("serve", help="run the ground-station HTTP service")
    common(p)
    p.add_argument("--addr", help=f"host:port (default ${{COVERAGE_PILOT_ADDR}} or {DEFAULT_ADDR})")
    p.add_argument("--checkpoint-dir", dest="checkpoint_dir")
    p.add_argument("--ui-dir", dest="ui_dir")
    p.set_defaults(func=cmd_serve)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigurationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (MissionSetupError, MapGenerationError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
