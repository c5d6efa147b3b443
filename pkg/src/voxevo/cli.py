"""Experiment runner: execute the method/seed matrix from a JSON config,
write per-run artifacts, aggregate fitness curves, and replay checkpoints.

Verbs: ``run <config>``, ``replay <checkpoint> <genome> --task <t>``,
``aggregate <dir>``. Exit codes: 0 success, 1 runtime failure, 2 config
error. Worker count for the run matrix comes from VOXEVO_WORKERS.
"""
from __future__ import annotations

import argparse
import csv
import dataclasses
import json
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .evolve import EvoConfig, RunResult, run as run_evolution
from .graph import FeatureMode
from .morpho import MutationConfig, deserialize, serialize
from .policy import KIND_GAT, KIND_MLP, load_checkpoint, save_checkpoint
from .ppo import PpoConfig, evaluate_policy
from .render import fitness_plot_svg, frame_svg, morphology_svg
from .sim import DEFAULT_SIM, SimConfig, TaskSpec, TASK_NAMES, build_body

METHODS = {
    "gat-global-transfer": (KIND_GAT, FeatureMode.GLOBAL_TRANSFER, "transfer"),
    "gat-local-transfer": (KIND_GAT, FeatureMode.LOCAL_TRANSFER, "transfer"),
    "mlp-transfer": (KIND_MLP, FeatureMode.LOCAL_TRANSFER, "transfer"),
    "mlp-scratch": (KIND_MLP, FeatureMode.LOCAL_TRANSFER, "scratch"),
}

GENERATION_COLUMNS = ["generation", "best_fitness", "mean_fitness", "elite_ids"]
TRAINING_COLUMNS = [
    "update",
    "mean_return",
    "best_return",
    "policy_loss",
    "value_loss",
    "entropy",
    "clip_fraction",
]
TRAJECTORY_COLUMNS = ["step", "reward", "com_x", "com_y"]
AGGREGATE_COLUMNS = ["generation", "mean_best", "std_best"]


class ConfigError(Exception):
    def __init__(self, message: str, line: int = 1):
        super().__init__(message)
        self.line = line


def _fmt(value) -> str:
    if isinstance(value, float):
        return repr(value)
    return str(value)


def _write_csv(path: Path, columns: list[str], rows: list[dict]) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(columns)
        for row in rows:
            writer.writerow([_fmt(row[c]) for c in columns])


def _find_line(text: str, token: str) -> int:
    for i, line in enumerate(text.splitlines(), start=1):
        if token in line:
            return i
    return 1


@dataclass(frozen=True)
class ExperimentConfig:
    methods: tuple[str, ...]
    task: str
    seeds: tuple[int, ...]
    output_dir: str
    evo: EvoConfig
    ppo: PpoConfig
    sim: SimConfig


def _build_dataclass(cls, overrides: dict, text: str, section: str):
    valid = {f.name: f for f in dataclasses.fields(cls)}
    kwargs = {}
    for key, value in overrides.items():
        if key not in valid:
            raise ConfigError(
                f"unknown {section} option {key!r}", _find_line(text, f'"{key}"')
            )
        if key == "mutation":
            value = MutationConfig(**value)
        elif key == "feature_mode":
            value = FeatureMode(value)
        elif key == "bounds":
            value = tuple(value)
        kwargs[key] = value
    try:
        return cls(**kwargs)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"bad {section} section: {exc}", _find_line(text, section)) from exc


def parse_config(text: str) -> ExperimentConfig:
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"invalid JSON: {exc.msg}", exc.lineno) from exc
    if not isinstance(data, dict):
        raise ConfigError("config must be a JSON object")

    known = {"methods", "method", "task", "seeds", "output_dir", "evo", "ppo", "sim"}
    for key in data:
        if key not in known:
            raise ConfigError(f"unknown option {key!r}", _find_line(text, f'"{key}"'))

    methods = data.get("methods")
    if methods is None and "method" in data:
        methods = [data["method"]]
    if not methods:
        raise ConfigError("config requires a non-empty 'methods' list")
    for m in methods:
        if m not in METHODS:
            raise ConfigError(
                f"unknown method {m!r}; expected one of {sorted(METHODS)}",
                _find_line(text, m),
            )

    task = data.get("task", "walker_lite")
    if task not in TASK_NAMES:
        raise ConfigError(
            f"unknown task {task!r}; expected one of {TASK_NAMES}",
            _find_line(text, task),
        )

    seeds = data.get("seeds", [0])
    if not isinstance(seeds, list) or not seeds or not all(
        isinstance(s, int) for s in seeds
    ):
        raise ConfigError("'seeds' must be a non-empty list of integers",
                          _find_line(text, '"seeds"'))

    output_dir = data.get("output_dir", "runs")
    evo = _build_dataclass(EvoConfig, dict(data.get("evo", {}), task=task), text, "evo")
    ppo = _build_dataclass(PpoConfig, data.get("ppo", {}), text, "ppo")
    sim_cfg = _build_dataclass(SimConfig, data.get("sim", {}), text, "sim")
    return ExperimentConfig(
        methods=tuple(methods),
        task=task,
        seeds=tuple(seeds),
        output_dir=output_dir,
        evo=evo,
        ppo=ppo,
        sim=sim_cfg,
    )


def _run_single(args) -> None:
    """One (method, seed) run; writes its whole output directory."""
    config, method, seed = args
    kind, mode, inheritance = METHODS[method]
    evo = dataclasses.replace(
        config.evo,
        controller_kind=kind,
        feature_mode=mode,
        inheritance=inheritance,
        task=config.task,
        seed=seed,
    )
    run_dir = Path(config.output_dir) / method / f"seed_{seed}"
    run_dir.mkdir(parents=True, exist_ok=True)
    (run_dir / "training").mkdir(exist_ok=True)

    events_path = run_dir / "events.jsonl"
    with open(events_path, "w") as events:

        def sink(event: dict) -> None:
            events.write(json.dumps(event, sort_keys=True) + "\n")

        def train_log(individual_id: int, rows: list[dict]) -> None:
            _write_csv(
                run_dir / "training" / f"individual_{individual_id}.csv",
                TRAINING_COLUMNS,
                rows,
            )

        result = run_evolution(
            evo, ppo_cfg=config.ppo, sim_cfg=config.sim, sink=sink, train_log=train_log
        )

    _write_csv(
        run_dir / "generations.csv",
        GENERATION_COLUMNS,
        [
            {
                "generation": rec.generation,
                "best_fitness": rec.best_fitness,
                "mean_fitness": rec.mean_fitness,
                "elite_ids": ";".join(str(i) for i in rec.elite_ids),
            }
            for rec in result.history
        ],
    )
    _save_best(result, evo, config, method, seed, run_dir)


def _save_best(
    result: RunResult,
    evo: EvoConfig,
    config: ExperimentConfig,
    method: str,
    seed: int,
    run_dir: Path,
) -> None:
    best = result.best
    task = evo.task_spec()
    eval_return, _, _ = evaluate_policy(best.genome, best.params, task, config.sim)
    meta = {
        "method": method,
        "seed": seed,
        "task": task.name,
        "episode_length": task.episode_length,
        "individual_id": best.id,
        "fitness": best.fitness,
        "eval_return": eval_return,
        "sim": dataclasses.asdict(config.sim),
    }
    save_checkpoint(run_dir / "best.npz", best.params, meta)
    (run_dir / "best_genome.txt").write_text(serialize(best.genome) + "\n")
    (run_dir / "best_morphology.svg").write_text(morphology_svg(best.genome) + "\n")


def run_experiment(config: ExperimentConfig) -> Path:
    """Execute the full method/seed matrix, then aggregate."""
    jobs = [(config, method, seed) for method in config.methods for seed in config.seeds]
    workers = int(os.environ.get("VOXEVO_WORKERS", "1"))
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            list(pool.map(_run_single, jobs))
    else:
        for job in jobs:
            _run_single(job)
    return aggregate(Path(config.output_dir))


def aggregate(out_dir: Path) -> Path:
    """Per-method mean/std best-fitness curves from run directories."""
    out_dir = Path(out_dir)
    curves = {}
    for method in sorted(METHODS):
        method_dir = out_dir / method
        if not method_dir.is_dir():
            continue
        per_seed = []
        for seed_dir in sorted(method_dir.glob("seed_*")):
            gen_csv = seed_dir / "generations.csv"
            if not gen_csv.is_file():
                continue
            with open(gen_csv) as fh:
                rows = list(csv.DictReader(fh))
            per_seed.append([float(r["best_fitness"]) for r in rows])
        if per_seed:
            matrix = np.array(per_seed)
            curves[method] = (matrix.mean(axis=0), matrix.std(axis=0))
    if not curves:
        raise RuntimeError(f"no completed runs found under {out_dir}")

    agg_dir = out_dir / "aggregate"
    agg_dir.mkdir(parents=True, exist_ok=True)
    for method, (mean, std) in curves.items():
        _write_csv(
            agg_dir / f"{method}.csv",
            AGGREGATE_COLUMNS,
            [
                {"generation": g + 1, "mean_best": float(m), "std_best": float(s)}
                for g, (m, s) in enumerate(zip(mean, std))
            ],
        )
    (agg_dir / "fitness.svg").write_text(fitness_plot_svg(curves) + "\n")
    return agg_dir


def replay(
    checkpoint_path: str,
    genome_path: str,
    task_name: str,
    out_dir: str,
    every: int = 8,
) -> float:
    """Greedy episode from a saved checkpoint: trajectory CSV + SVG frames."""
    params, meta = load_checkpoint(checkpoint_path)
    genome = deserialize(Path(genome_path).read_text())
    sim_cfg = SimConfig(**meta["sim"]) if "sim" in meta else DEFAULT_SIM
    body = build_body(genome, sim_cfg)
    if tuple(params.actuator_keys) != tuple(body.actuator_keys):
        raise ConfigError("checkpoint actuator keys do not match genome")
    episode_length = int(meta.get("episode_length", sim_cfg.episode_length))
    task = TaskSpec(task_name, episode_length)

    total, states, rewards = evaluate_policy(
        genome, params, task, sim_cfg, collect_states=True
    )
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    rows = []
    for k, (state, reward) in enumerate(zip(states, rewards)):
        com = state.robot_com()
        rows.append(
            {"step": k, "reward": reward, "com_x": float(com[0]), "com_y": float(com[1])}
        )
        if k % every == 0:
            (out / f"frame_{k:05d}.svg").write_text(frame_svg(state) + "\n")
    _write_csv(out / "trajectory.csv", TRAJECTORY_COLUMNS, rows)
    (out / "replay_return.txt").write_text(repr(total) + "\n")
    return total


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="voxevo", description="voxel soft-robot co-design experiments"
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run the method/seed matrix from a config")
    p_run.add_argument("config", help="JSON experiment config")
    p_run.add_argument("--out", help="override the config's output_dir")

    p_replay = sub.add_parser("replay", help="greedy episode from a checkpoint")
    p_replay.add_argument("checkpoint")
    p_replay.add_argument("genome")
    p_replay.add_argument("--task", required=True, choices=TASK_NAMES)
    p_replay.add_argument("--out", default="replay")
    p_replay.add_argument("--every", type=int, default=8, help="frame spacing in steps")

    p_agg = sub.add_parser("aggregate", help="rebuild aggregate curves from run dirs")
    p_agg.add_argument("dir")
    return parser


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        if args.command == "run":
            try:
                text = Path(args.config).read_text()
            except OSError as exc:
                print(f"config error at line 1: {exc}", file=sys.stderr)
                return 2
            try:
                config = parse_config(text)
            except ConfigError as exc:
                print(f"config error at line {exc.line}: {exc}", file=sys.stderr)
                return 2
            if args.out:
                config = dataclasses.replace(config, output_dir=args.out)
            agg = run_experiment(config)
            print(f"aggregate written to {agg}")
            return 0
        if args.command == "replay":
            try:
                total = replay(args.checkpoint, args.genome, args.task, args.out, args.every)
            except ConfigError as exc:
                print(f"config error at line {exc.line}: {exc}", file=sys.stderr)
                return 2
            print(f"replay return: {total!r}")
            return 0
        if args.command == "aggregate":
            agg = aggregate(Path(args.dir))
            print(f"aggregate written to {agg}")
            return 0
        return 2
    except Exception as exc:  # runtime failure: keep partial outputs
        print(f"error: {exc}", file=sys.stderr)
        return 1


def entry() -> None:
    sys.exit(main())


if __name__ == "__main__":
    entry()
