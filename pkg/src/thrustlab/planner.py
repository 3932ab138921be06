"""Look-ahead path following for velocity-tracking policies, plus reference paths."""

import csv
import math
from dataclasses import dataclass

import numpy as np

from . import vecenv
from .config import PlannerSection, RunConfig
from .errors import ParamInvalid, PolicyTaskMismatch
from .tasks import TaskKind

SHAPES = ("circle", "spiral", "square")
LOG_FIELDS = ["step", "x", "y", "cmd_vx", "cmd_vy", "meas_vx", "meas_vy", "target_index"]
ZERO_GUARD = 1e-9


@dataclass(frozen=True)
class ReferencePath:
    points: np.ndarray  # (N, 2)
    closed: bool = False

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=np.float64)
        if pts.ndim != 2 or pts.shape[1] != 2 or len(pts) < 2:
            raise ParamInvalid(f"a path needs at least 2 points of shape (N, 2), got {pts.shape}")
        if not np.all(np.isfinite(pts)):
            raise ParamInvalid("path points must be finite")
        object.__setattr__(self, "points", pts)

    def __len__(self):
        return len(self.points)

    def spacing(self):
        """Distances between consecutive points (including the closing segment)."""
        pts = np.vstack([self.points, self.points[:1]]) if self.closed else self.points
        return np.linalg.norm(np.diff(pts, axis=0), axis=1)

    def length(self):
        return float(self.spacing().sum())


def lookahead_point(path, pos, radius=0.25):
    """Farthest point (by path index) within ``radius`` of ``pos``.

    Falls back to the closest point when the disk is empty; ties go to the
    lower index. On a closed path whose disk straddles the seam (both the
    last and the first point are inside), indices after the seam count as
    further along, so the pick is the end of the run that starts at index 0.
    Returns ``(point, index)``.
    """
    pts = path.points
    d = np.linalg.norm(pts - np.asarray(pos, dtype=np.float64), axis=1)
    inside = d <= radius
    if not inside.any():
        idx = int(np.argmin(d))
    elif path.closed and inside[0] and inside[-1] and not inside.all():
        idx = int(np.argmin(inside)) - 1
    else:
        idx = int(np.flatnonzero(inside)[-1])
    return pts[idx], idx


def velocity_command(target, pos, cruise=0.25):
    if cruise <= 0:
        raise ParamInvalid(f"cruise speed must be positive, got {cruise}")
    delta = np.asarray(target, dtype=np.float64) - np.asarray(pos, dtype=np.float64)
    norm = math.hypot(delta[0], delta[1])
    if norm < ZERO_GUARD:
        return np.zeros(2)
    return cruise * delta / norm


def _check_params(p):
    if not 0 < p.spacing <= p.radius:
        raise ParamInvalid(f"spacing must be in (0, radius={p.radius}], got {p.spacing}")
    for name in ("circle_radius", "spiral_growth", "square_side", "cruise", "radius"):
        if getattr(p, name) <= 0:
            raise ParamInvalid(f"planner.{name} must be positive")
    if p.spiral_r0 < 0 or p.spiral_r_max <= p.spiral_r0:
        raise ParamInvalid("spiral needs 0 <= spiral_r0 < spiral_r_max")


def _resample(points, spacing):
    """Points every ``spacing`` of polyline arc length, keeping both ends."""
    seg = np.linalg.norm(np.diff(points, axis=0), axis=1)
    s = np.concatenate([[0.0], np.cumsum(seg)])
    n = int(math.ceil(s[-1] / spacing))
    targets = np.linspace(0.0, s[-1], n + 1)
    return np.column_stack([np.interp(targets, s, points[:, 0]), np.interp(targets, s, points[:, 1])])


def gen_path(shape, params=None):
    """Reference path for ``shape`` in circle/spiral/square, centred on the origin."""
    p = params or PlannerSection()
    _check_params(p)
    if shape == "circle":
        n = int(math.ceil(2 * math.pi * p.circle_radius / p.spacing))
        phi = 2 * math.pi * np.arange(n) / n
        return ReferencePath(p.circle_radius * np.column_stack([np.cos(phi), np.sin(phi)]), closed=True)
    if shape == "spiral":
        phi_max = (p.spiral_r_max - p.spiral_r0) / p.spiral_growth
        # dense polyline first, then equal arc-length resampling
        phi = np.linspace(0.0, phi_max, max(2, int(phi_max * p.spiral_r_max / (0.05 * p.spacing))))
        r = p.spiral_r0 + p.spiral_growth * phi
        return ReferencePath(_resample(np.column_stack([r * np.cos(phi), r * np.sin(phi)]), p.spacing))
    if shape == "square":
        h = p.square_side / 2
        per_side = int(math.ceil(p.square_side / p.spacing))
        t = np.arange(per_side) / per_side * p.square_side
        corners = [(-h, -h), (h, -h), (h, h), (-h, h)]
        sides = []
        for k, (cx, cy) in enumerate(corners):
            nx, ny = corners[(k + 1) % 4]
            ux, uy = np.sign(nx - cx), np.sign(ny - cy)
            sides.append(np.column_stack([cx + ux * t, cy + uy * t]))
        return ReferencePath(np.vstack(sides), closed=True)
    raise ParamInvalid(f"unknown path shape {shape!r}; expected one of {', '.join(SHAPES)}")


def default_steps(path, params, control_dt):
    """Enough control steps for about 1.1 traversals at cruise speed."""
    return int(math.ceil(1.1 * path.length() / (params.cruise * control_dt)))


def tracking_env(config=None, path=None, steps=1000, seed=0):
    """Single TrackXYVelocity environment parked at rest on the first path point.

    The episode horizon is stretched past ``steps`` so the run is never cut.
    """
    config = config if config is not None else RunConfig.for_task(TaskKind.TRACK_XY_VELOCITY.value)
    if config.kind is not TaskKind.TRACK_XY_VELOCITY:
        raise PolicyTaskMismatch(f"path following needs a trackxyvelocity config, got {config.kind.value}")
    config = config.override(**{"sim.horizon": max(int(steps) + 1, config.sim.horizon)})
    env = vecenv.make(config, 1, seed, mode="eval", auto_reset=False, workers=1)
    if path is not None:
        env.state.position[0] = path.points[0]
        env.state.lin_vel[0] = 0.0
        env.state.ang_vel[0] = 0.0
        env.obs = env.observe()
    return env


class PerfectTracker:
    """Scripted stand-in for a policy: sets the craft's velocity to the command.

    Fires nothing, so over a control step the craft drifts exactly at the
    commanded velocity.
    """

    def __init__(self, env):
        self.env = env

    def __call__(self, obs):
        env = self.env
        env.state.lin_vel[:] = env.goal.velocity
        env.state.ang_vel[:] = 0.0
        return np.zeros((env.n_envs, env.n_actions), dtype=bool)


def _as_policy(policy):
    if hasattr(policy, "obs_dim") and hasattr(policy, "n_thrusters"):
        from .agent.train import act

        return lambda obs: act(policy, obs, greedy=True)
    return policy


def follow(policy, env, path, steps, radius=0.25, cruise=0.25):
    """Drive ``env`` (one TrackXYVelocity environment) along ``path``.

    Each control step picks the look-ahead point, turns it into a velocity
    command, writes that into the goal and steps with the policy's action.
    ``policy`` is a trained network (greedy decoding) or any callable mapping
    observations to thruster bits. Returns a list of log rows.
    """
    if env.kind is not TaskKind.TRACK_XY_VELOCITY or env.n_envs != 1:
        raise PolicyTaskMismatch("follow needs a single trackxyvelocity environment")
    if getattr(policy, "obs_dim", env.obs_dim) != env.obs_dim:
        raise PolicyTaskMismatch(f"policy expects width {policy.obs_dim}, environment gives {env.obs_dim}")
    act = _as_policy(policy)
    rows = []
    for step in range(int(steps)):
        pos = env.state.position[0].copy()
        target, index = lookahead_point(path, pos, radius)
        cmd = velocity_command(target, pos, cruise)
        env.goal.velocity[0] = cmd
        env.obs = env.observe()
        env.step_batch(act(env.obs))
        vel = env.state.lin_vel[0]
        rows.append(
            {
                "step": step,
                "x": float(pos[0]),
                "y": float(pos[1]),
                "cmd_vx": float(cmd[0]),
                "cmd_vy": float(cmd[1]),
                "meas_vx": float(vel[0]),
                "meas_vy": float(vel[1]),
                "target_index": index,
            }
        )
    return rows


def speed_tracking_error(rows):
    """Mean norm of commanded minus measured velocity over a log."""
    if not rows:
        return 0.0
    cmd = np.array([[r["cmd_vx"], r["cmd_vy"]] for r in rows])
    meas = np.array([[r["meas_vx"], r["meas_vy"]] for r in rows])
    return float(np.linalg.norm(cmd - meas, axis=1).mean())


def write_log(rows, path, config_hash=None):
    with open(path, "w", newline="") as fh:
        if config_hash is not None:
            fh.write(f"# config_hash={config_hash}\n")
        writer = csv.DictWriter(fh, fieldnames=LOG_FIELDS, lineterminator="\n")
        writer.writeheader()
        for row in rows:
            writer.writerow({k: (repr(row[k]) if isinstance(row[k], float) else row[k]) for k in LOG_FIELDS})
