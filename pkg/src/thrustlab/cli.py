"""``thrustlab`` command line: train, eval, track, bench.

Exit codes: 0 success, 2 configuration or usage error, 3 numerical failure,
4 checkpoint incompatible with the requested task.
"""

import argparse
import datetime
import json
import logging
import sys
from pathlib import Path

from . import __version__, evalkit, planner, vecenv
from .config import RunConfig
from .errors import (
    ConfigInvalid,
    KindMismatch,
    NonFiniteLoss,
    NonFiniteState,
    PolicyTaskMismatch,
    ThrustlabError,
)
from .tasks import TaskKind

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NUMERIC = 3
EXIT_MISMATCH = 4

log = logging.getLogger("thrustlab")


def _load_config(args, base=None):
    if getattr(args, "config", None):
        config = RunConfig.load(args.config)
    elif base is not None:
        config = base
    else:
        config = RunConfig.for_task(args.task or TaskKind.GO_TO_XY.value)
    if getattr(args, "task", None) and args.task != config.task.kind:
        try:
            TaskKind(args.task)
        except ValueError:
            raise ConfigInvalid(f"unknown task {args.task!r}") from None
        config = config.override(**{"task.kind": args.task})
    config.validate()
    return config


def _manifest(out, config, seed, command, extra=None):
    entries = {
        "timestamp": datetime.datetime.now(datetime.timezone.utc).isoformat(timespec="seconds"),
        "version": evalkit.git_version(),
        "command": command,
        "config_hash": config.config_hash(),
        "seed": seed,
        "task": config.task.kind,
    }
    entries.update(extra or {})
    entries["config"] = json.dumps(config.resolved().to_dict(), sort_keys=True, separators=(",", ":"))
    for key, value in config.nonpaper_defaults().items():
        entries[f"nonpaper.{key}"] = json.dumps(value)
    evalkit.write_manifest(Path(out) / "run_manifest.txt", entries)
    with open(Path(out) / "resolved_config.yaml", "w") as fh:
        fh.write(f"# config_hash={config.config_hash()}\n")
        fh.write(config.to_yaml())


def cmd_train(args):
    from .agent.train import train

    config = _load_config(args)
    config = config.override(**{"ppo.num_envs": args.num_envs, "ppo.epochs": args.epochs})
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    _manifest(out, config, args.seed, "train")

    def progress(row):
        log.info("epoch %d  return %.4f  final distance %.4f", row["epoch"], row["mean_return"], row["mean_final_distance"])

    train(config, seed=args.seed, workers=args.workers, out_dir=out, on_epoch=progress)
    print(f"wrote {out / 'checkpoint.pt'} and {out / 'curve.csv'}")
    return EXIT_OK


def _load_policy(args):
    from .agent.train import load_checkpoint

    net, payload = load_checkpoint(args.checkpoint)
    config = _load_config(args, base=payload["config"])
    return net, config


def cmd_eval(args):
    net, config = _load_policy(args)
    metrics = evalkit.run_eval(
        net, config, n_envs=args.num_envs, steps=args.steps, seed=args.seed,
        stochastic=True if args.stochastic else None, workers=args.workers,
    )
    summary = evalkit.summarize(metrics)
    out = evalkit.write_report(metrics, summary, args.out, extra={"checkpoint": args.checkpoint})
    final = summary.per_episode["final_distance"]
    print(f"task={metrics.kind} envs={metrics.n_envs} steps={metrics.steps}")
    print(f"final_distance mean={final['mean']:.4f} median={final['median']:.4f} p95={final['p95']:.4f}")
    for key, rate in summary.success_rates.items():
        print(f"success_{key}={rate:.4f}")
    print(f"wrote report to {out}")
    return EXIT_OK


def cmd_track(args):
    if args.shape not in planner.SHAPES:
        raise ConfigInvalid(f"unknown shape {args.shape!r}; expected one of {', '.join(planner.SHAPES)}")
    net, config = _load_policy(args)
    if config.kind is not TaskKind.TRACK_XY_VELOCITY:
        raise PolicyTaskMismatch(f"tracking needs a trackxyvelocity checkpoint, got {config.kind.value}")
    path = planner.gen_path(args.shape, config.planner)
    steps = args.steps or config.planner.steps or planner.default_steps(path, config.planner, config.control_dt)
    env = planner.tracking_env(config, path, steps, seed=args.seed)
    try:
        rows = planner.follow(net, env, path, steps, config.planner.radius, config.planner.cruise)
    finally:
        env.close()
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    planner.write_log(rows, out / "tracking.csv", config.config_hash())
    err = planner.speed_tracking_error(rows)
    _manifest(out, config, args.seed, "track", {"shape": args.shape, "steps": steps, "checkpoint": args.checkpoint})
    print(f"shape={args.shape} steps={steps} mean_velocity_error={err:.4f}")
    print(f"wrote {out / 'tracking.csv'}")
    return EXIT_OK


def cmd_bench(args):
    config = _load_config(args)
    report_path = None
    if args.out:
        Path(args.out).mkdir(parents=True, exist_ok=True)
        report_path = Path(args.out) / "bench.txt"
    report = vecenv.bench(
        args.num_envs, args.steps, config, workers=args.workers, seed=args.seed,
        report_path=report_path, config_hash=config.config_hash(), provenance={"version": __version__},
    )
    sys.stdout.write(vecenv.format_report(report))
    return EXIT_OK


def _positive(text):
    value = int(text)
    if value < 1:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {text}")
    return value


def _non_negative(text):
    value = int(text)
    if value < 0:
        raise argparse.ArgumentTypeError(f"expected a non-negative integer, got {text}")
    return value


def build_parser():
    parser = argparse.ArgumentParser(prog="thrustlab", description="Thruster-controlled spacecraft RL toolkit.")
    parser.add_argument("--version", action="version", version=f"thrustlab {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)
    kinds = [k.value for k in TaskKind]

    def common(p, config=True):
        if config:
            p.add_argument("--config", help="YAML run configuration")
            p.add_argument("--task", choices=kinds, help="task kind (overrides the config)")
        p.add_argument("--seed", type=int, default=0)
        p.add_argument("--workers", type=_positive, default=None, help=f"worker threads (default ${vecenv.WORKERS_ENV} or 1)")

    p = sub.add_parser("train", help="train a PPO policy")
    common(p)
    p.add_argument("--num-envs", type=_positive, default=None)
    p.add_argument("--epochs", type=_non_negative, default=None)
    p.add_argument("--out", default="runs/train")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="evaluate a checkpoint")
    common(p)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--num-envs", type=_positive, default=None, help="default 1024")
    p.add_argument("--steps", type=_positive, default=None, help="default 500")
    p.add_argument("--stochastic", action="store_true", help="sample actions instead of per-head argmax")
    p.add_argument("--out", default="runs/eval")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("track", help="follow a reference path with a velocity-tracking checkpoint")
    common(p)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--shape", required=True, help="circle, spiral or square")
    p.add_argument("--steps", type=_positive, default=None)
    p.add_argument("--out", default="runs/track")
    p.set_defaults(func=cmd_track)

    p = sub.add_parser("bench", help="measure environment throughput")
    common(p)
    p.add_argument("--num-envs", type=_positive, default=4096)
    p.add_argument("--steps", type=_non_negative, default=100)
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_bench)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s", stream=sys.stderr)
    try:
        return args.func(args)
    except (PolicyTaskMismatch, KindMismatch) as exc:
        print(f"thrustlab: checkpoint/task mismatch: {exc}", file=sys.stderr)
        return EXIT_MISMATCH
    except (NonFiniteLoss, NonFiniteState, FloatingPointError) as exc:
        print(f"thrustlab: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except ThrustlabError as exc:
        print(f"thrustlab: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"thrustlab: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
