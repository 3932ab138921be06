"""Batch evaluation: per-step metric logs, summaries and report files."""

import datetime
import json
import subprocess
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import torch

from . import __version__, tasks, vecenv
from .config import RunConfig
from .errors import EmptyInput, PolicyTaskMismatch

SCHEMA_VERSION = 1
STEP_METRICS = ("distance", "rot_error", "speed", "ang_speed", "vel_error", "reward", "fired")
EPISODE_METRICS = ("length", "total_reward", "total_actions", "final_distance", "final_rot_error", "final_vel_error")
STATS = ("mean", "std", "min", "max", "median", "p5", "p95")
WITHIN_HALF_METRE = 0.5


@dataclass
class EpisodeMetrics:
    """Per-step series are ``(n_envs, steps)``; ``positions`` is ``(n_envs, steps + 1, dim)``.

    Step ``t`` of a state metric describes the state the policy acted on at
    that step, so column 0 is the spawn. ``reward`` and ``fired`` belong to
    the action taken at step ``t``. Environments that finish early stay
    frozen for the remaining columns with zero reward.
    """

    distance: np.ndarray
    rot_error: np.ndarray
    speed: np.ndarray
    ang_speed: np.ndarray
    vel_error: np.ndarray
    reward: np.ndarray
    fired: np.ndarray
    positions: np.ndarray
    lengths: np.ndarray
    final_distance: np.ndarray
    final_rot_error: np.ndarray
    final_vel_error: np.ndarray
    kind: str = "gotoxy"
    n_thrusters: int = 8
    thresholds: dict = field(default_factory=lambda: {"position": 0.2, "rotation": 0.1, "velocity": 0.1})
    seed: int = 0
    stochastic: bool = False
    config: RunConfig = None

    @classmethod
    def from_arrays(cls, **arrays):
        """Build from whatever series are given; the rest are zero-filled."""
        ref = next(np.asarray(v) for k, v in arrays.items() if k in STEP_METRICS)
        n, steps = ref.shape
        dim = 2
        out = {k: np.asarray(arrays.get(k, np.zeros((n, steps))), dtype=np.float64) for k in STEP_METRICS}
        out["fired"] = out["fired"].astype(np.int64)
        out["positions"] = np.asarray(arrays.get("positions", np.zeros((n, steps + 1, dim))), dtype=np.float64)
        out["lengths"] = np.asarray(arrays.get("lengths", np.full(n, steps)), dtype=np.int64)
        for k in ("final_distance", "final_rot_error", "final_vel_error"):
            out[k] = np.asarray(arrays.get(k, np.zeros(n)), dtype=np.float64)
        extra = {k: v for k, v in arrays.items() if k not in out and k not in STEP_METRICS}
        return cls(**out, **extra)

    @property
    def n_envs(self):
        return self.reward.shape[0]

    @property
    def steps(self):
        return self.reward.shape[1]

    @property
    def total_reward(self):
        return self.reward.sum(axis=1)

    @property
    def total_actions(self):
        return self.fired.sum(axis=1)

    def success(self):
        """Boolean flags per environment, keyed by criterion."""
        kind = tasks.TaskKind(self.kind)
        th = self.thresholds
        flags = {}
        if kind.family == "velocity":
            flags["velocity"] = self.final_vel_error <= th["velocity"]
        else:
            flags["position"] = self.final_distance <= th["position"]
            flags["within_0.5m"] = self.final_distance <= WITHIN_HALF_METRE
        if kind.family == "pose":
            flags["rotation"] = self.final_rot_error <= th["rotation"]
        main = [k for k in flags if k != "within_0.5m"]
        flags["all"] = np.logical_and.reduce([flags[k] for k in main])
        return flags

    def episode_table(self):
        return {
            "length": self.lengths,
            "total_reward": self.total_reward,
            "total_actions": self.total_actions,
            "final_distance": self.final_distance,
            "final_rot_error": self.final_rot_error,
            "final_vel_error": self.final_vel_error,
        }


@dataclass
class SummaryStats:
    per_step: dict  # metric -> stat -> (steps,) array
    per_episode: dict  # metric -> stat -> float
    best: int  # env with the largest total reward (lowest index on ties)
    worst: int
    success_rates: dict


def _stats(x, axis):
    x = np.asarray(x, dtype=np.float64)
    p5, median, p95 = np.percentile(x, [5, 50, 95], axis=axis)
    return {
        "mean": x.mean(axis=axis),
        "std": x.std(axis=axis),
        "min": x.min(axis=axis),
        "max": x.max(axis=axis),
        "median": median,
        "p5": p5,
        "p95": p95,
    }


def summarize(metrics):
    if metrics.n_envs == 0 or metrics.steps == 0:
        raise EmptyInput("cannot summarize an empty evaluation")
    per_step = {k: _stats(getattr(metrics, k), axis=0) for k in STEP_METRICS}
    per_episode = {k: {s: float(v) for s, v in _stats(col, axis=0).items()} for k, col in metrics.episode_table().items()}
    totals = metrics.total_reward
    rates = {k: float(v.mean()) for k, v in metrics.success().items()}
    return SummaryStats(per_step, per_episode, int(np.argmax(totals)), int(np.argmin(totals)), rates)


def _check_policy(net, spec):
    if net.obs_dim != spec.obs_dim or net.n_thrusters != spec.n_actions:
        raise PolicyTaskMismatch(
            f"policy takes {net.obs_dim} observations / {net.n_thrusters} thrusters, "
            f"task {spec.kind.value} has {spec.obs_dim} / {spec.n_actions}"
        )


def run_eval(policy, config, n_envs=None, steps=None, seed=0, stochastic=None, workers=None):
    """Roll ``policy`` out on fresh eval-mode spawns and keep every step.

    Defaults for ``n_envs``, ``steps`` and decoding come from ``config.eval``.
    Each environment runs a single episode; a finished one is held still.
    """
    from .agent.train import act

    config = config if isinstance(config, RunConfig) else RunConfig.for_task(config)
    n_envs = config.eval.n_envs if n_envs is None else int(n_envs)
    steps = config.eval.steps if steps is None else int(steps)
    stochastic = config.eval.stochastic if stochastic is None else bool(stochastic)
    spec = config.env_spec()
    _check_policy(policy, spec)
    if n_envs < 1 or steps < 0:
        raise EmptyInput(f"need at least one environment and non-negative steps, got {n_envs} x {steps}")
    kind = spec.kind
    dim = 2 if kind.planar else 3
    series = {k: np.zeros((n_envs, steps)) for k in STEP_METRICS}
    positions = np.zeros((n_envs, steps + 1, dim))
    gen = torch.Generator().manual_seed(int(seed))
    env = vecenv.make(spec, n_envs, seed, mode="eval", auto_reset=False, workers=workers)
    try:
        for t in range(steps):
            state = env.state
            series["distance"][:, t] = env.distance()
            series["rot_error"][:, t] = tasks.rotation_error(kind, state, env.goal)
            series["vel_error"][:, t] = tasks.velocity_error(kind, state, env.goal)
            series["speed"][:, t] = np.linalg.norm(state.lin_vel, axis=-1)
            series["ang_speed"][:, t] = np.abs(state.ang_vel) if kind.planar else np.linalg.norm(state.ang_vel, axis=-1)
            positions[:, t] = state.position
            actions = act(policy, env.obs, greedy=not stochastic, generator=gen)
            actions = np.where(env.active[:, None], actions, 0)
            batch = env.step_batch(actions)
            series["reward"][:, t] = batch.rewards
            series["fired"][:, t] = actions.sum(axis=1)
        positions[:, steps] = env.state.position
        final = (
            env.distance(),
            tasks.rotation_error(kind, env.state, env.goal),
            tasks.velocity_error(kind, env.state, env.goal),
        )
        lengths = env.steps.copy()
    finally:
        env.close()
    series["fired"] = series["fired"].astype(np.int64)
    ev = config.eval
    return EpisodeMetrics(
        **series,
        positions=positions,
        lengths=lengths,
        final_distance=final[0],
        final_rot_error=final[1],
        final_vel_error=final[2],
        kind=kind.value,
        n_thrusters=spec.n_actions,
        thresholds={"position": ev.position_threshold, "rotation": ev.rotation_threshold, "velocity": ev.velocity_threshold},
        seed=int(seed),
        stochastic=stochastic,
        config=config,
    )


def is_settled(series, tail=0.2, tol=0.0):
    """True if ``series`` never rises by more than ``tol`` over its last ``tail`` fraction."""
    series = np.asarray(series, dtype=np.float64)
    start = int(np.floor(len(series) * (1 - tail)))
    return bool(np.all(np.diff(series[start:]) <= tol))


# ---- report files -------------------------------------------------------


def _fmt(x):
    return format(float(x), ".10g")


def _header(fh, config_hash):
    fh.write(f"# config_hash={config_hash}\n# schema_version={SCHEMA_VERSION}\n")


def git_version():
    """``<package version>+g<commit>`` when run from a git checkout, else the package version."""
    try:
        out = subprocess.run(
            ["git", "describe", "--always", "--dirty"],
            cwd=Path(__file__).resolve().parent,
            capture_output=True,
            text=True,
            timeout=5,
        )
    except (OSError, subprocess.SubprocessError):
        return __version__
    rev = out.stdout.strip()
    return f"{__version__}+g{rev}" if out.returncode == 0 and rev else __version__


def write_report(metrics, summary, out_dir, extra=None):
    """Write the CSV set, ``run_manifest.txt`` and ``resolved_config.yaml`` into ``out_dir``.

    Everything but the manifest timestamp is a pure function of the inputs.
    """
    if metrics.n_envs == 0 or metrics.steps == 0:
        raise EmptyInput("nothing to report: evaluation is empty")
    config = metrics.config if metrics.config is not None else RunConfig.for_task(metrics.kind)
    config_hash = config.config_hash()
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    n, steps = metrics.n_envs, metrics.steps

    with open(out / "per_step.csv", "w") as fh:
        _header(fh, config_hash)
        fh.write("env,step," + ",".join(STEP_METRICS) + "\n")
        cols = [getattr(metrics, k) for k in STEP_METRICS]
        for i in range(n):
            for t in range(steps):
                fh.write(f"{i},{t}," + ",".join(_fmt(c[i, t]) for c in cols) + "\n")

    flags = metrics.success()
    table = metrics.episode_table()
    with open(out / "per_episode.csv", "w") as fh:
        _header(fh, config_hash)
        fh.write("env," + ",".join(EPISODE_METRICS) + "," + ",".join(f"success_{k}" for k in flags) + "\n")
        for i in range(n):
            values = [str(int(table["length"][i])), _fmt(table["total_reward"][i]), str(int(table["total_actions"][i]))]
            values += [_fmt(table[k][i]) for k in EPISODE_METRICS[3:]]
            values += [str(int(flags[k][i])) for k in flags]
            fh.write(f"{i}," + ",".join(values) + "\n")

    with open(out / "summary.csv", "w") as fh:
        _header(fh, config_hash)
        fh.write("scope,metric,step," + ",".join(STATS) + ",best,worst\n")
        for k in STEP_METRICS:
            stats = summary.per_step[k]
            series = getattr(metrics, k)
            for t in range(steps):
                row = [_fmt(stats[s][t]) for s in STATS]
                row += [_fmt(series[summary.best, t]), _fmt(series[summary.worst, t])]
                fh.write(f"step,{k},{t}," + ",".join(row) + "\n")
        for k in EPISODE_METRICS:
            stats = summary.per_episode[k]
            row = [_fmt(stats[s]) for s in STATS]
            row += [_fmt(table[k][summary.best]), _fmt(table[k][summary.worst])]
            fh.write(f"episode,{k},," + ",".join(row) + "\n")
        for k, rate in summary.success_rates.items():
            fh.write(f"success_rate,{k},,{_fmt(rate)}" + "," * (len(STATS) + 1) + "\n")

    dim = metrics.positions.shape[-1]
    with open(out / "trajectories.csv", "w") as fh:
        _header(fh, config_hash)
        fh.write("env,step," + ",".join("xyz"[:dim]) + "\n")
        for i in range(n):
            for t in range(metrics.positions.shape[1]):
                fh.write(f"{i},{t}," + ",".join(_fmt(v) for v in metrics.positions[i, t]) + "\n")

    resolved = config.resolved()
    with open(out / "resolved_config.yaml", "w") as fh:
        fh.write(f"# config_hash={config_hash}\n")
        fh.write(config.to_yaml())

    manifest = {
        "timestamp": datetime.datetime.now(datetime.timezone.utc).isoformat(timespec="seconds"),
        "version": git_version(),
        "config_hash": config_hash,
        "seed": metrics.seed,
        "task": metrics.kind,
        "n_envs": n,
        "steps": steps,
        "decoding": "stochastic" if metrics.stochastic else "greedy",
        "schema_version": SCHEMA_VERSION,
    }
    manifest.update(extra or {})
    manifest["config"] = json.dumps(resolved.to_dict(), sort_keys=True, separators=(",", ":"))
    for key, value in config.nonpaper_defaults().items():
        manifest[f"nonpaper.{key}"] = json.dumps(value)
    write_manifest(out / "run_manifest.txt", manifest)
    return out


def write_manifest(path, entries):
    with open(path, "w") as fh:
        for key, value in entries.items():
            fh.write(f"{key}={value}\n")


def read_manifest(path):
    out = {}
    with open(path) as fh:
        for line in fh:
            key, _, value = line.rstrip("\n").partition("=")
            out[key] = value
    return out
