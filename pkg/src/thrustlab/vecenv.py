"""Lockstep batch of independent environments with auto-reset."""

import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, fields, replace

import numpy as np

from . import dynamics, tasks
from .dynamics import BodyParams, PlanarState, ThrusterLayout
from .errors import ConfigInvalid, ShapeMismatch
from .rng import env_stream
from .tasks import DoneReason, TaskKind, TaskParams

WORKERS_ENV = "THRUSTLAB_WORKERS"


def default_workers():
    value = os.environ.get(WORKERS_ENV, "1")
    try:
        workers = int(value)
    except ValueError:
        raise ConfigInvalid(f"{WORKERS_ENV} must be an integer, got {value!r}") from None
    if workers < 1:
        raise ConfigInvalid(f"{WORKERS_ENV} must be >= 1, got {workers}")
    return workers


@dataclass(frozen=True)
class EnvSpec:
    """Everything needed to build one environment."""

    kind: TaskKind = TaskKind.GO_TO_XY
    task: TaskParams = field(default_factory=TaskParams)
    body: BodyParams = field(default_factory=BodyParams)
    layout: ThrusterLayout = None
    control_dt: float = 0.1
    substeps: int = 10

    def __post_init__(self):
        kind = TaskKind(self.kind)
        object.__setattr__(self, "kind", kind)
        if self.layout is None:
            layout = ThrusterLayout.default_planar() if kind.planar else ThrusterLayout.default_spatial()
            object.__setattr__(self, "layout", layout)
        self.validate()

    def validate(self):
        layout = self.layout
        if layout.planar != self.kind.planar:
            want = "planar (all z components zero)" if self.kind.planar else "spatial"
            raise ConfigInvalid(f"task {self.kind.value} needs a {want} thruster layout")
        need = 3 if self.kind.planar else 6
        rank = dynamics.wrench_rank(layout)
        if rank < need:
            raise ConfigInvalid(f"thruster layout has wrench rank {rank}, task needs {need} (not controllable)")
        if self.control_dt <= 0:
            raise ConfigInvalid("control_dt must be positive")
        if int(self.substeps) != self.substeps or self.substeps < 1:
            raise ConfigInvalid("substeps must be a positive integer")
        if self.task.horizon < 1:
            raise ConfigInvalid("horizon must be >= 1")

    @property
    def obs_dim(self):
        return self.kind.obs_dim

    @property
    def n_actions(self):
        return self.layout.n


@dataclass
class StepBatch:
    observations: np.ndarray  # (n_envs, obs_dim); fresh-episode rows where reset
    rewards: np.ndarray
    dones: np.ndarray
    reset_mask: np.ndarray
    info: dict


def _take(obj, idx):
    out = {}
    for f in fields(obj):
        value = getattr(obj, f.name)
        if isinstance(value, np.ndarray):
            out[f.name] = value[idx]
    return replace(obj, **out)


def _concat(parts):
    out = {}
    for f in fields(parts[0]):
        if isinstance(getattr(parts[0], f.name), np.ndarray):
            out[f.name] = np.concatenate([getattr(p, f.name) for p in parts])
    return replace(parts[0], **out)


def _put(dst, idx, src):
    for f in fields(dst):
        value = getattr(dst, f.name)
        if isinstance(value, np.ndarray):
            value[idx] = getattr(src, f.name)


class VecEnv:
    """N environments stepped together.

    Per-field arrays hold the whole batch (``state.position`` is
    ``(n_envs, 2)`` in 3DoF, and so on). Environment ``i`` draws its spawns
    from its own stream, so the batch evolves identically for any worker
    count.
    """

    def __init__(self, spec, n_envs, master_seed=0, mode="train", auto_reset=True, workers=None):
        if n_envs < 1:
            raise ConfigInvalid(f"n_envs must be >= 1, got {n_envs}")
        if mode not in ("train", "eval"):
            raise ConfigInvalid(f"mode must be 'train' or 'eval', got {mode!r}")
        self.spec = spec
        self.kind = spec.kind
        self.n_envs = int(n_envs)
        self.master_seed = int(master_seed)
        self.mode = mode
        self.auto_reset = auto_reset
        self.workers = default_workers() if workers is None else int(workers)
        if self.workers < 1:
            raise ConfigInvalid("workers must be >= 1")
        self._pool = ThreadPoolExecutor(self.workers) if self.workers > 1 else None
        self.rngs = [env_stream(self.master_seed, i) for i in range(self.n_envs)]
        self.steps = np.zeros(self.n_envs, dtype=np.int64)
        self.returns = np.zeros(self.n_envs)
        self.episodes = np.zeros(self.n_envs, dtype=np.int64)
        self.active = np.ones(self.n_envs, dtype=bool)
        self.goal = tasks.TaskGoal.neutral(self.kind, self.n_envs)
        if self.kind.planar:
            self.state = PlanarState(np.zeros((n_envs, 2)), np.zeros(n_envs), np.zeros((n_envs, 2)), np.zeros(n_envs))
        else:
            self.state = dynamics.RigidState(
                np.zeros((n_envs, 3)), np.tile([1.0, 0.0, 0.0, 0.0], (n_envs, 1)), np.zeros((n_envs, 3)), np.zeros((n_envs, 3))
            )
        self._reset(np.arange(self.n_envs))
        self.obs = self.observe()

    @property
    def obs_dim(self):
        return self.spec.obs_dim

    @property
    def n_actions(self):
        return self.spec.n_actions

    def close(self):
        if self._pool is not None:
            self._pool.shutdown()
            self._pool = None

    def observe(self):
        return tasks.observe(self.kind, self.state, self.goal)

    def distance(self):
        return tasks.distance_to_goal(self.kind, self.state, self.goal)

    def _reset(self, idx):
        params = self.spec.task
        for i in idx:
            rng = self.rngs[i]
            goal = tasks.sample_goal(self.kind, rng, params)
            state = tasks.sample_initial_state(self.kind, self.mode, rng, params)
            _put(self.goal, i, goal)
            _put(self.state, i, state)
        self.steps[idx] = 0
        self.returns[idx] = 0.0

    def _chunks(self):
        bounds = np.linspace(0, self.n_envs, min(self.workers, self.n_envs) + 1).astype(int)
        return [slice(a, b) for a, b in zip(bounds[:-1], bounds[1:])]

    def _advance(self, actions):
        spec = self.spec

        def run(sl):
            return dynamics.step(
                _take(self.state, sl), spec.body, spec.layout, actions[sl], spec.control_dt, spec.substeps,
                check_finite=False,
            )

        if self._pool is None:
            return run(slice(None))
        return _concat(list(self._pool.map(run, self._chunks())))

    def step_batch(self, actions):
        actions = np.asarray(actions)
        if actions.shape != (self.n_envs, self.n_actions):
            raise ShapeMismatch(f"actions must have shape {(self.n_envs, self.n_actions)}, got {actions.shape}")
        actions = actions.astype(bool)
        kind = self.kind
        params = self.spec.task
        new_state = self._advance(actions)
        active = self.active
        if not active.all():
            new_state = dynamics.select(active, new_state, self.state)
        self.state = new_state
        self.steps[active] += 1

        finite = dynamics.finite_mask(new_state)
        with np.errstate(invalid="ignore", over="ignore"):
            rewards = tasks.reward(kind, new_state, self.goal, actions, params)
        rewards = np.where(active & finite, rewards, 0.0)
        self.returns += rewards
        done, reason = tasks.episode_done(self.steps, new_state, self.goal, params)
        done &= active
        reason = np.where(done, reason, DoneReason.NONE).astype(np.int8)

        with np.errstate(invalid="ignore", over="ignore"):
            obs = self.observe()
        idx = np.flatnonzero(done)
        info = {
            "reason": reason,
            "truncated": (reason == DoneReason.HORIZON) | (reason == DoneReason.OUT_OF_BOUNDS),
            "terminal_obs": None,
            "episode_return": np.where(done, self.returns, 0.0),
            "episode_length": np.where(done, self.steps, 0),
            "final_distance": np.where(done, self.distance(), 0.0),
        }
        if idx.size:
            terminal = np.zeros_like(obs)
            terminal[idx] = np.where(finite[idx, None], obs[idx], 0.0)
            info["terminal_obs"] = terminal
            if self.auto_reset:
                self.episodes[idx] += 1
                self._reset(idx)
                obs[idx] = tasks.observe(kind, _take(self.state, idx), _take(self.goal, idx))
            else:
                self.active[idx] = False
        self.obs = obs
        return StepBatch(obs, rewards, done, done.copy() if self.auto_reset else np.zeros_like(done), info)


def make(config=None, n_envs=1, master_seed=0, *, mode="train", auto_reset=True, workers=None):
    """Build a batch from a RunConfig, an EnvSpec, or defaults (GoToXY)."""
    if config is None:
        spec = EnvSpec()
    elif isinstance(config, EnvSpec):
        spec = config
    else:
        spec = config.env_spec()
    return VecEnv(spec, n_envs, master_seed, mode=mode, auto_reset=auto_reset, workers=workers)


def step_batch(env, actions):
    return env.step_batch(actions)


def bench(n_envs, n_steps, config=None, workers=None, seed=0, report_path=None, config_hash=None, provenance=None):
    """Time ``n_steps`` lockstep steps of ``n_envs`` environments under random actions."""
    env = make(config, n_envs, seed, workers=workers)
    rng = np.random.default_rng(seed)
    pool = rng.random((8, n_envs, env.n_actions)) < 0.5
    try:
        start = time.perf_counter()
        for t in range(n_steps):
            env.step_batch(pool[t % len(pool)])
        wall = time.perf_counter() - start
    finally:
        env.close()
    env_steps = n_envs * n_steps
    report = {
        "task": env.kind.value,
        "n_envs": n_envs,
        "n_steps": n_steps,
        "workers": env.workers,
        "control_dt": env.spec.control_dt,
        "substeps": env.spec.substeps,
        "n_thrusters": env.n_actions,
        "seed": seed,
        "wall_time_s": wall,
        "env_steps": env_steps,
        "steps_per_second": env_steps / wall if n_steps and wall > 0 else 0.0,
        "us_per_env_step": 1e6 * wall / env_steps if env_steps else 0.0,
    }
    if config_hash is not None:
        report["config_hash"] = config_hash
    if provenance:
        report.update(provenance)
    if report_path is not None:
        with open(report_path, "w") as fh:
            fh.write(format_report(report))
    return report


def format_report(report):
    return "".join(f"{k}={v}\n" for k, v in report.items())
