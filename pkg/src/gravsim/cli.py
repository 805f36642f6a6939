"""Command-line front end: train, eval, sweep, power-report, rig-plan.

Every command writes its delimited/JSON outputs first and renders the
matching figures beside them.  Output directories get exactly one
``manifest.json`` recording the config hash, seed, toolkit version and
artifact paths, which is also what makes sweeps resumable.

Exit codes: 0 success, 2 configuration/input error, 3 runtime fault.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, replace
from pathlib import Path

import numpy as np

from . import __version__
from .actuation import ActuatorParams, LogFormatError, TrajectoryLog, trajectory_power
from .config import (ConfigError, config_hash, env_config_from_dict, load_config,
                     resolve_gravity)
from .env import EnvConfig
from .rig import RigError, RigSpec, format_plan_table, plan_compensation, required_offload
from .robot import GRAVITY_PRESETS, load_model, reference_model
from .rotations import IDENTITY_QUAT  # noqa: F401  (re-export convenience)

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_RUNTIME = 3

SWEEP_GRAVITIES = ("moon", "mars", "earth", "super-earth")
SWEEP_REWARDS = ("baseline", "power")
SWEEP_SCALING = (True, False)
SWEEP_TASKS = ("locomotion", "base_pose")


def out_root() -> Path:
    return Path(os.environ.get("GRAVSIM_OUT", "gravsim_out"))


def write_manifest(directory: Path, config: dict, seed: int, artifacts: dict,
                   status: str = "ok") -> Path:
    directory.mkdir(parents=True, exist_ok=True)
    manifest = {
        "format_version": 1,
        "gravsim_version": __version__,
        "config_hash": config_hash(config),
        "seed": seed,
        "status": status,
        "finished_at": time.strftime("%Y-%m-%dT%H:%M:%SZ", time.gmtime()),
        "artifacts": {k: str(v) for k, v in artifacts.items()},
    }
    path = directory / "manifest.json"
    path.write_text(json.dumps(manifest, indent=2))
    return path


def _env_config_from_args(args, file_cfg: dict) -> EnvConfig:
    data = dict(file_cfg.get("env", {}))
    if getattr(args, "task", None):
        data["task"] = args.task
    if getattr(args, "gravity", None) is not None:
        data["gravity"] = args.gravity
    if getattr(args, "rewards", None):
        data["rewards"] = args.rewards
    if getattr(args, "scale_gravity", None) is not None:
        data["scale_gravity"] = args.scale_gravity == "on"
    if getattr(args, "terrain", None):
        data["terrain_kind"] = args.terrain
    if "gravity" in data:
        data["gravity"] = resolve_gravity(data["gravity"])
    return env_config_from_dict(data)


def _train_config_from_args(args, file_cfg: dict):
    from .ppo import TrainConfig

    data = dict(file_cfg.get("training", {}))
    if getattr(args, "seed", None) is not None:
        data["seed"] = args.seed
    if getattr(args, "iterations", None) is not None:
        data["iterations"] = args.iterations
    if getattr(args, "envs", None) is not None:
        data["num_envs"] = args.envs
    if isinstance(data.get("hidden"), list):
        data["hidden"] = tuple(data["hidden"])
    unknown = set(data) - set(TrainConfig.__dataclass_fields__)
    if unknown:
        raise ConfigError(f"unknown training config fields: {sorted(unknown)}")
    return TrainConfig(**data)


def _load_robot(args):
    if getattr(args, "robot", None):
        return load_model(args.robot)
    return None


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------

def cmd_train(args) -> int:
    from .ppo import train
    from .report import render_metrics_figure

    try:
        file_cfg = load_config(args.config) if args.config else {}
        env_cfg = _env_config_from_args(args, file_cfg)
        train_cfg = _train_config_from_args(args, file_cfg)
        model = _load_robot(args)
    except (ConfigError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    out_dir = Path(args.out) if args.out else out_root() / "train"
    try:
        result = train(train_cfg, env_cfg, out_dir, model=model,
                       log=None if args.quiet else print)
        figure = render_metrics_figure(result.metrics_path, out_dir / "training.png")
    except FloatingPointError as exc:
        print(f"runtime fault: {exc}", file=sys.stderr)
        write_manifest(out_dir, {"env": asdict(env_cfg), "training": asdict(train_cfg)},
                       train_cfg.seed, {}, status="fault")
        return EXIT_RUNTIME
    write_manifest(
        out_dir,
        {"env": asdict(env_cfg), "training": asdict(train_cfg)},
        train_cfg.seed,
        {"checkpoint": result.checkpoint_path, "metrics": result.metrics_path,
         "figure": figure},
    )
    print(f"trained {result.iterations_run} iterations; "
          f"tracking {result.tracking_mean:.3f}; checkpoint {result.checkpoint_path}")
    return EXIT_OK


def _rig_for_checkpoint(args, env_cfg: EnvConfig, model) -> RigSpec | None:
    if not args.rig:
        return None
    mass = (model or reference_model()).total_mass
    if args.rig_spring:
        spring = args.rig_spring
    else:
        if env_cfg.gravity >= 9.81:
            raise RigError(
                "offload rig emulation needs a reduced-gravity policy "
                f"(checkpoint gravity is {env_cfg.gravity} m/s^2)"
            )
        spring = required_offload(mass, env_cfg.gravity)
    return RigSpec(spring_force=spring, mount_height=args.rig_height,
                   max_radius=args.rig_max_radius)


def cmd_eval(args) -> int:
    from .ppo import evaluate, load_checkpoint
    from .report import render_eval_figure

    try:
        policy, _critic, meta = load_checkpoint(args.checkpoint)
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    env_cfg = meta["env_config_obj"]
    model = meta.get("model_obj")
    if args.robot:
        model = load_model(args.robot)
    try:
        gravity = resolve_gravity(args.gravity) if args.gravity is not None else None
        rig = _rig_for_checkpoint(args, env_cfg, model)
        result = evaluate(policy, env_cfg, args.protocol, gravity=gravity, rig=rig,
                          seconds=args.seconds, n_envs=args.envs, model=model)
    except (ValueError, RigError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    out_dir = Path(args.out) if args.out else out_root() / "eval"
    out_dir.mkdir(parents=True, exist_ok=True)
    traj_path = out_dir / "trajectory.csv"
    result.trajectory.to_csv(traj_path)
    summary = result.summary_dict()
    summary_path = out_dir / "summary.json"
    summary_path.write_text(json.dumps(summary, indent=2))
    figure = render_eval_figure(result.trajectory, summary, out_dir / "evaluation.png")
    write_manifest(out_dir, {"checkpoint": str(args.checkpoint), "summary": summary},
                   0, {"trajectory": traj_path, "summary": summary_path,
                       "figure": figure})
    print(json.dumps(summary, indent=2))
    return EXIT_OK


def _cell_name(task, gravity_name, rewards, scaled) -> str:
    return f"{task}__{gravity_name}__{rewards}__{'scaled' if scaled else 'unscaled'}"


def _run_sweep_cell(payload: dict) -> dict:
    """Train + evaluate one grid cell; runs in a worker process."""
    from .ppo import TrainConfig, evaluate, load_checkpoint, train

    cell_dir = Path(payload["cell_dir"])
    env_cfg = env_config_from_dict(payload["env_cfg"])
    train_cfg = TrainConfig(**{**payload["train_cfg"],
                               "hidden": tuple(payload["train_cfg"]["hidden"])})
    cfg_for_hash = {"env": payload["env_cfg"], "training": payload["train_cfg"]}

    manifest_path = cell_dir / "manifest.json"
    if manifest_path.exists():
        old = json.loads(manifest_path.read_text())
        if old.get("config_hash") == config_hash(cfg_for_hash) and old.get("status") == "ok":
            summary = json.loads((cell_dir / "summary.json").read_text())
            return {**payload["ident"], "status": "ok", "metrics": summary,
                    "reused": True}
    try:
        result = train(train_cfg, env_cfg, cell_dir)
        policy, _critic, meta = load_checkpoint(result.checkpoint_path)
        protocol = "loco-0.4" if env_cfg.task == "locomotion" else "base-pose-seq"
        ev = evaluate(policy, meta["env_config_obj"], protocol,
                      seconds=payload["eval_seconds"], n_envs=payload["eval_envs"],
                      model=meta.get("model_obj"))
        summary = ev.summary_dict()
        (cell_dir / "summary.json").write_text(json.dumps(summary, indent=2))
        ev.trajectory.to_csv(cell_dir / "trajectory.csv")
        write_manifest(cell_dir, cfg_for_hash, train_cfg.seed,
                       {"checkpoint": result.checkpoint_path,
                        "summary": cell_dir / "summary.json"})
        return {**payload["ident"], "status": "ok", "metrics": summary,
                "reused": False}
    except Exception as exc:  # cell failures are recorded, not fatal
        write_manifest(cell_dir, cfg_for_hash, train_cfg.seed, {}, status="failed")
        return {**payload["ident"], "status": "failed", "error": str(exc),
                "reused": False}


def _gate(metrics: dict) -> str:
    """Numeric stand-in for a visual good/medium/bad assessment."""
    tracking = metrics.get("tracking_term_mean", 0.0)
    falls = metrics.get("fall_rate", 1.0)
    if tracking >= 0.6 and falls <= 0.1:
        return "good"
    if tracking >= 0.35 and falls <= 0.5:
        return "medium"
    return "bad"


def cmd_sweep(args) -> int:
    from .report import render_sweep_figure

    try:
        file_cfg = load_config(args.config) if args.config else {}
        base_env = dict(file_cfg.get("env", {}))
        base_train = dict(file_cfg.get("training", {}))
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    out_dir = Path(args.out) if args.out else out_root() / "sweep"
    out_dir.mkdir(parents=True, exist_ok=True)

    tasks = args.tasks.split(",") if args.tasks else list(SWEEP_TASKS)
    gravities = args.gravities.split(",") if args.gravities else list(SWEEP_GRAVITIES)
    variants = [f"{rw}/{'scaled' if sc else 'unscaled'}"
                for rw in SWEEP_REWARDS for sc in SWEEP_SCALING]

    jobs = []
    index = 0
    for task in tasks:
        for gname in gravities:
            for rewards in SWEEP_REWARDS:
                for scaled in SWEEP_SCALING:
                    name = _cell_name(task, gname, rewards, scaled)
                    env_cfg = {
                        **base_env,
                        "task": task,
                        "gravity": resolve_gravity(gname),
                        "rewards": rewards,
                        "scale_gravity": scaled,
                    }
                    train_cfg = {
                        **base_train,
                        "seed": args.seed + index,
                        "iterations": args.iterations,
                        "num_envs": args.envs,
                        "hidden": list(base_train.get("hidden", (64, 64))),
                        "checkpoint_every": 0,
                    }
                    jobs.append({
                        "cell_dir": str(out_dir / "cells" / name),
                        "env_cfg": env_cfg,
                        "train_cfg": train_cfg,
                        "eval_seconds": args.eval_seconds,
                        "eval_envs": 4,
                        "ident": {
                            "cell": name, "task": task, "gravity_name": gname,
                            "gravity": resolve_gravity(gname), "rewards": rewards,
                            "scaled": scaled,
                            "variant": f"{rewards}/{'scaled' if scaled else 'unscaled'}",
                            "seed": args.seed + index,
                        },
                    })
                    index += 1

    if args.workers > 1:
        with ProcessPoolExecutor(max_workers=args.workers) as pool:
            results = list(pool.map(_run_sweep_cell, jobs))
    else:
        results = []
        for k, job in enumerate(jobs, 1):
            if not args.quiet:
                print(f"[{k}/{len(jobs)}] {job['ident']['cell']}", flush=True)
            results.append(_run_sweep_cell(job))

    for cell in results:
        cell["gate"] = _gate(cell.get("metrics", {})) if cell["status"] == "ok" else "failed"
    report = {
        "format_version": 1,
        "gravities": gravities,
        "variants": variants,
        "tasks": tasks,
        "cells": results,
        "n_ok": sum(1 for c in results if c["status"] == "ok"),
    }
    report_path = out_dir / "report.json"
    report_path.write_text(json.dumps(report, indent=2, default=str))

    csv_path = out_dir / "report.csv"
    with open(csv_path, "w") as fh:
        fh.write("task,gravity,rewards,scaled,status,gate,avg_power_w,"
                 "tracking_term_mean,fall_rate\n")
        for c in results:
            m = c.get("metrics", {})
            fh.write(
                f"{c['task']},{c['gravity_name']},{c['rewards']},{c['scaled']},"
                f"{c['status']},{c['gate']},{m.get('avg_power_w', '')},"
                f"{m.get('tracking_term_mean', '')},{m.get('fall_rate', '')}\n"
            )
    figure = render_sweep_figure(report, out_dir / "report.png")
    write_manifest(
        out_dir,
        {"env": base_env, "training": base_train, "iterations": args.iterations,
         "tasks": tasks, "gravities": gravities},
        args.seed,
        {"report": report_path, "csv": csv_path, "figure": figure},
        status="ok" if report["n_ok"] else "failed",
    )
    print(f"sweep complete: {report['n_ok']}/{len(results)} cells ok -> {report_path}")
    return EXIT_OK if report["n_ok"] else EXIT_RUNTIME


def cmd_power_report(args) -> int:
    from .report import render_power_figure

    params_kw = {}
    if args.config:
        try:
            file_cfg = load_config(args.config)
        except ConfigError as exc:
            print(f"error: {exc}", file=sys.stderr)
            return EXIT_CONFIG
        params_kw = file_cfg.get("motors", {})
    for name, flag in (("gear_ratio", args.gear_ratio),
                       ("torque_constant", args.torque_constant),
                       ("winding_resistance", args.winding_resistance),
                       ("recuperation", args.recuperation)):
        if flag is not None:
            params_kw[name] = flag
    try:
        params = ActuatorParams(**params_kw)
    except (TypeError, ValueError) as exc:
        print(f"error: invalid motor parameters: {exc}", file=sys.stderr)
        return EXIT_CONFIG

    try:
        log = TrajectoryLog.from_csv(args.log)
        summary = trajectory_power(log, params)
    except (FileNotFoundError, LogFormatError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG

    record = {
        "format_version": 1,
        "log": str(args.log),
        "duration_s": summary.duration_s,
        "avg_power_w": summary.average_power_w,
        "energy_j": summary.energy_j,
        "avg_joint_w": summary.average_joint_w,
        "avg_winding_w": summary.average_winding_w,
        "motor_params": asdict(params),
    }
    if args.subtract_standby is not None:
        record["standby_w"] = args.subtract_standby
        record["net_power_w"] = summary.average_power_w - args.subtract_standby
    out_dir = Path(args.out) if args.out else out_root() / "power"
    out_dir.mkdir(parents=True, exist_ok=True)
    json_path = out_dir / "power_report.json"
    json_path.write_text(json.dumps(record, indent=2))
    csv_path = out_dir / "power_trace.csv"
    with open(csv_path, "w") as fh:
        fh.write("t,joint_w,winding_w,total_w\n")
        for row in zip(log.t, summary.joint_trace, summary.winding_trace,
                       summary.power_trace):
            fh.write(",".join(f"{x:.6g}" for x in row) + "\n")
    figure = render_power_figure(log, summary, out_dir / "power_report.png")
    write_manifest(out_dir, record, 0,
                   {"report": json_path, "trace": csv_path, "figure": figure})
    print(json.dumps(record, indent=2))
    return EXIT_OK


def cmd_rig_plan(args) -> int:
    try:
        gravity = resolve_gravity(args.gravity)
        plan = plan_compensation(args.mass, gravity, args.measured_offload,
                                 args.battery_mass)
    except RigError as exc:
        print(f"infeasible plan: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    print(format_plan_table(plan))
    record = {"format_version": 1, **plan.to_dict()}
    if args.json:
        print(json.dumps(record, indent=2))
    if args.out:
        out_dir = Path(args.out)
        out_dir.mkdir(parents=True, exist_ok=True)
        path = out_dir / "rig_plan.json"
        path.write_text(json.dumps(record, indent=2))
        write_manifest(out_dir, record, 0, {"plan": path})
    return EXIT_OK


# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="gravsim",
        description="Variable-gravity quadruped simulation and training toolkit",
    )
    parser.add_argument("--version", action="version", version=f"gravsim {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="train a policy")
    p.add_argument("--config", help="YAML config file (env/training sections)")
    p.add_argument("--task", choices=["locomotion", "base_pose"])
    p.add_argument("--gravity", help=f"m/s^2 or one of {sorted(GRAVITY_PRESETS)}")
    p.add_argument("--rewards", choices=["baseline", "power"])
    p.add_argument("--scale-gravity", choices=["on", "off"], dest="scale_gravity")
    p.add_argument("--terrain", choices=["flat", "mixed"])
    p.add_argument("--seed", type=int)
    p.add_argument("--iterations", type=int)
    p.add_argument("--envs", type=int)
    p.add_argument("--robot", help="robot model YAML (default: bundled reference)")
    p.add_argument("--out", help="output directory (default $GRAVSIM_OUT/train)")
    p.add_argument("--quiet", action="store_true")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="evaluate a checkpoint under a protocol")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--protocol", choices=["loco-0.4", "base-pose-seq"],
                   default="loco-0.4")
    p.add_argument("--gravity", help="override evaluation gravity")
    p.add_argument("--seconds", type=float, default=60.0)
    p.add_argument("--envs", type=int, default=16)
    p.add_argument("--rig", action="store_true",
                   help="emulate the spring offload rig at Earth gravity")
    p.add_argument("--rig-spring", type=float, default=None,
                   help="spring force N (default: required offload)")
    p.add_argument("--rig-height", type=float, default=1.9)
    p.add_argument("--rig-max-radius", type=float, default=0.15)
    p.add_argument("--robot")
    p.add_argument("--out")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("sweep", help="train/evaluate the full gravity-reward grid")
    p.add_argument("--config")
    p.add_argument("--iterations", type=int, default=2,
                   help="training budget per cell")
    p.add_argument("--envs", type=int, default=16)
    p.add_argument("--eval-seconds", type=float, default=10.0, dest="eval_seconds")
    p.add_argument("--tasks", help="comma-separated subset of tasks")
    p.add_argument("--gravities", help="comma-separated subset of gravity names")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--out")
    p.add_argument("--quiet", action="store_true")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("power-report", help="drivetrain power from a trajectory log")
    p.add_argument("--log", required=True, help="trajectory CSV")
    p.add_argument("--config", help="YAML with a motors: section")
    p.add_argument("--gear-ratio", type=float, dest="gear_ratio")
    p.add_argument("--torque-constant", type=float, dest="torque_constant")
    p.add_argument("--winding-resistance", type=float, dest="winding_resistance")
    p.add_argument("--recuperation", type=float)
    p.add_argument("--subtract-standby", type=float, dest="subtract_standby",
                   help="subtract a standby wattage for external comparison")
    p.add_argument("--out")
    p.set_defaults(func=cmd_power_report)

    p = sub.add_parser("rig-plan", help="offload compensation arithmetic")
    p.add_argument("--mass", type=float, required=True)
    p.add_argument("--gravity", required=True)
    p.add_argument("--measured-offload", type=float, required=True,
                   dest="measured_offload")
    p.add_argument("--battery-mass", type=float, default=0.0, dest="battery_mass")
    p.add_argument("--json", action="store_true")
    p.add_argument("--out")
    p.set_defaults(func=cmd_rig_plan)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        # argparse exits 2 on bad flags, which matches the config-error code
        return int(exc.code) if exc.code is not None else EXIT_CONFIG
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
