"""Command-line interface.

Subcommands: train, eval, suite, plot, config. Settings come from built-in
defaults, overlaid by a JSON config file (--config), overlaid by flags;
unknown config keys are rejected by name. The seed resolves as
flag > config file > ROTORFALL_SEED env var > 0. Every run directory gets
a config.echo file that reproduces the run when passed back via --config.

Exit codes: 0 success, 1 config error, 2 runtime failure.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from dataclasses import asdict
from pathlib import Path

from .dynamics import QuadParams
from .env import EpisodeConfig, RewardConfig
from .harness import (
    MANEUVERS,
    EvalReport,
    TrainRun,
    agent_policy,
    evaluate,
    format_report_table,
    maneuver_suite,
    train,
)
from .sac import SacAgent, SacConfig
from .svgplot import KINDS, CsvFormatError, parse_log, render

SEED_ENV_VAR = "ROTORFALL_SEED"

TRAIN_FIELDS = (
    "total_steps",
    "eval_interval",
    "checkpoint_interval",
    "log_interval",
    "eval_seconds",
    "seed",
)

SECTIONS = {
    "quad": QuadParams,
    "episode": EpisodeConfig,
    "reward": RewardConfig,
    "sac": SacConfig,
    "train": None,  # scalar TrainRun fields listed above
}


class ConfigError(ValueError):
    pass


def default_config() -> dict:
    cfg = {
        "quad": asdict(QuadParams()),
        "episode": asdict(EpisodeConfig()),
        "reward": asdict(RewardConfig()),
        "sac": asdict(SacConfig()),
        "train": {f: getattr(TrainRun(), f) for f in TRAIN_FIELDS},
    }
    return cfg


def load_config_file(path: str) -> dict:
    try:
        raw = json.loads(Path(path).read_text())
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}")
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config file {path} is not valid JSON: {exc}")
    if not isinstance(raw, dict):
        raise ConfigError("config file must hold a JSON object")
    return raw


def merge_config(base: dict, overlay: dict) -> dict:
    merged = {k: dict(v) for k, v in base.items()}
    for section, values in overlay.items():
        if section.startswith("_"):
            continue  # provenance metadata written by echo_config
        if section not in merged:
            raise ConfigError(f"unknown config section: {section}")
        if not isinstance(values, dict):
            raise ConfigError(f"config section {section} must be an object")
        for key, value in values.items():
            if key not in merged[section]:
                raise ConfigError(f"unknown config key: {section}.{key}")
            merged[section][key] = value
    return merged


def build_run(cfg: dict) -> TrainRun:
    try:
        quad_vals = dict(cfg["quad"])
        quad_vals["inertia_diag"] = tuple(quad_vals["inertia_diag"])
        episode_vals = dict(cfg["episode"])
        episode_vals["start_position"] = tuple(episode_vals["start_position"])
        return TrainRun(
            **cfg["train"],
            episode=EpisodeConfig(**episode_vals),
            quad=QuadParams(**quad_vals),
            reward=RewardConfig(**cfg["reward"]),
            sac=SacConfig(**cfg["sac"]),
        )
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc))


def resolve_seed(flag_seed, cfg_file: dict | None) -> int | None:
    """flag > config file > environment variable > None (caller default)."""
    if flag_seed is not None:
        return flag_seed
    if cfg_file and isinstance(cfg_file.get("train"), dict) and "seed" in cfg_file["train"]:
        return int(cfg_file["train"]["seed"])
    env = os.environ.get(SEED_ENV_VAR)
    if env is not None:
        try:
            return int(env)
        except ValueError:
            raise ConfigError(f"{SEED_ENV_VAR} must be an integer, got {env!r}")
    return None


def effective_config(args) -> tuple[dict, TrainRun]:
    cfg = default_config()
    file_cfg = load_config_file(args.config) if getattr(args, "config", None) else None
    if file_cfg:
        cfg = merge_config(cfg, file_cfg)

    overrides: dict[str, dict] = {"train": {}, "episode": {}, "sac": {}}
    seed = resolve_seed(getattr(args, "seed", None), file_cfg)
    if seed is not None:
        overrides["train"]["seed"] = seed
    if getattr(args, "steps", None) is not None:
        overrides["train"]["total_steps"] = args.steps
    if getattr(args, "eval_interval", None) is not None:
        overrides["train"]["eval_interval"] = args.eval_interval
    if getattr(args, "log_interval", None) is not None:
        overrides["train"]["log_interval"] = args.log_interval
    if getattr(args, "failed_rotor", None) is not None:
        overrides["episode"]["failed_rotor"] = (
            None if args.failed_rotor == 0 else args.failed_rotor
        )
    if getattr(args, "hidden_width", None) is not None:
        overrides["sac"]["hidden_width"] = args.hidden_width
    cfg = merge_config(cfg, {k: v for k, v in overrides.items() if v})
    return cfg, build_run(cfg)


def echo_config(cfg: dict, out_dir: Path, extra: dict | None = None):
    out_dir.mkdir(parents=True, exist_ok=True)
    doc = dict(cfg)
    if extra:
        doc = {**cfg, "_command": extra}
    (out_dir / "config.echo").write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")


def cmd_train(args) -> int:
    cfg, run = effective_config(args)
    out_dir = Path(args.out)
    echo_config(cfg, out_dir, {"command": "train", "resume": args.resume})
    result = train(run, out_dir, resume_from=args.resume)
    print(f"trained {result.steps} steps, {result.episodes} episodes")
    print(f"metrics: {result.metrics_path}")
    print(f"last checkpoint: {result.last_checkpoint}")
    if result.best_checkpoint:
        print(
            f"best checkpoint: {result.best_checkpoint} "
            f"(eval return {result.best_eval_return:.1f})"
        )
    return 0


def _load_policy(ckpt: str):
    path = Path(ckpt)
    if not path.exists():
        raise FileNotFoundError(f"checkpoint not found: {ckpt}")
    return agent_policy(SacAgent.load(path))


def cmd_eval(args) -> int:
    cfg, run = effective_config(args)
    policy = _load_policy(args.ckpt)
    out_dir = Path(args.out)
    echo_config(
        cfg,
        out_dir,
        {
            "command": "eval",
            "ckpt": args.ckpt,
            "maneuver": args.maneuver,
            "wind": args.wind,
            "duration": args.duration,
        },
    )
    report = evaluate(
        policy,
        maneuver=args.maneuver,
        wind_speed=args.wind,
        duration=args.duration,
        seed=run.seed,
        episode=run.episode,
        quad=run.quad,
        reward_cfg=run.reward,
        log_path=out_dir / "trajectory.csv",
    )
    (out_dir / "report.csv").write_text(EvalReport.HEADER + "\n" + report.row() + "\n")
    print(format_report_table([report]), end="")
    return 0


def cmd_suite(args) -> int:
    cfg, run = effective_config(args)
    policy = _load_policy(args.ckpt)
    out_dir = Path(args.out)
    echo_config(
        cfg, out_dir, {"command": "suite", "ckpt": args.ckpt, "wind": args.wind}
    )
    reports = maneuver_suite(
        policy,
        out_dir,
        seed=run.seed,
        wind_speed=args.wind,
        episode=run.episode,
        quad=run.quad,
        reward_cfg=run.reward,
    )
    print(format_report_table(reports), end="")
    return 0


def cmd_plot(args) -> int:
    table = parse_log(args.log)
    svg = render(args.kind, table)
    out = Path(args.out) if args.out else Path(args.log).with_suffix(f".{args.kind}.svg")
    out.parent.mkdir(parents=True, exist_ok=True)
    out.write_text(svg)
    print(out)
    return 0


def cmd_config(args) -> int:
    cfg, _ = effective_config(args)
    print(json.dumps(cfg, indent=2, sort_keys=True))
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="rotorfall",
        description="Train and evaluate a three-rotor recovery controller for a quadrotor.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, out_required=True):
        p.add_argument("--config", help="JSON config file; flags override it")
        p.add_argument("--seed", type=int, default=None, help="run seed")
        p.add_argument(
            "--out", required=out_required, help="output directory for run artifacts"
        )

    p_train = sub.add_parser("train", help="run the training loop")
    common(p_train)
    p_train.add_argument("--steps", type=int, default=None, help="total environment steps")
    p_train.add_argument(
        "--failed-rotor",
        type=int,
        choices=(0, 1, 2, 3, 4),
        default=None,
        help="rotor to disable (0 = keep all healthy)",
    )
    p_train.add_argument("--eval-interval", type=int, default=None)
    p_train.add_argument("--log-interval", type=int, default=None)
    p_train.add_argument("--hidden-width", type=int, default=None)
    p_train.add_argument("--resume", default=None, help="checkpoint to resume from")
    p_train.set_defaults(func=cmd_train)

    p_eval = sub.add_parser("eval", help="evaluate a checkpoint on one maneuver")
    common(p_eval)
    p_eval.add_argument("--ckpt", required=True, help="checkpoint file")
    p_eval.add_argument("--maneuver", choices=MANEUVERS, default="hover")
    p_eval.add_argument("--wind", type=float, default=0.0, help="wind speed, m/s")
    p_eval.add_argument("--duration", type=float, default=40.0, help="episode length, s")
    p_eval.set_defaults(func=cmd_eval)

    p_suite = sub.add_parser("suite", help="evaluate a checkpoint on all maneuvers")
    common(p_suite)
    p_suite.add_argument("--ckpt", required=True)
    p_suite.add_argument("--wind", type=float, default=0.0)
    p_suite.set_defaults(func=cmd_suite)

    p_plot = sub.add_parser("plot", help="render a trajectory log to SVG")
    p_plot.add_argument("--log", required=True, help="trajectory CSV")
    p_plot.add_argument("--kind", choices=sorted(KINDS), required=True)
    p_plot.add_argument("--out", default=None, help="output SVG path")
    p_plot.set_defaults(func=cmd_plot)

    p_cfg = sub.add_parser("config", help="print the effective configuration")
    p_cfg.add_argument("--config", help="JSON config file to merge over defaults")
    p_cfg.add_argument("--seed", type=int, default=None)
    p_cfg.set_defaults(func=cmd_config)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1
    except CsvFormatError as exc:
        print(f"log format error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
