"""Task suite: goals, spawns, observations, rewards and episode limits.

Observation layouts::

    3DoF (10): cos θ, sin θ, v_x, v_y, ω_z, tf, td1..td4
    6DoF (22): 6D(R_s), v_x, v_y, v_z, ω_x, ω_y, ω_z, tf, td1..td9

Unused task-data slots are zero. Differences are always ``goal - current`` in
the world frame.
"""

import enum
from dataclasses import dataclass, replace

import numpy as np

from . import geom
from .dynamics import PlanarState, RigidState, finite_mask
from .errors import KindMismatch


class TaskKind(str, enum.Enum):
    GO_TO_XY = "gotoxy"
    GO_TO_POSE_2D = "gotopose2d"
    TRACK_XY_VELOCITY = "trackxyvelocity"
    TRACK_XYO_VELOCITY = "trackxyovelocity"
    GO_TO_XYZ = "gotoxyz"
    GO_TO_POSE_3D = "gotopose3d"
    TRACK_XYZ_VELOCITY = "trackxyzvelocity"

    @property
    def planar(self):
        return self in _PLANAR

    @property
    def family(self):
        """'position', 'pose' or 'velocity'."""
        return _FAMILY[self]

    @property
    def flag(self):
        return _FLAG[self]

    @property
    def obs_dim(self):
        return 10 if self.planar else 22

    @property
    def td_dim(self):
        return 4 if self.planar else 9

    @property
    def n_thrusters(self):
        return 8 if self.planar else 16


_PLANAR = {
    TaskKind.GO_TO_XY,
    TaskKind.GO_TO_POSE_2D,
    TaskKind.TRACK_XY_VELOCITY,
    TaskKind.TRACK_XYO_VELOCITY,
}
_FAMILY = {
    TaskKind.GO_TO_XY: "position",
    TaskKind.GO_TO_XYZ: "position",
    TaskKind.GO_TO_POSE_2D: "pose",
    TaskKind.GO_TO_POSE_3D: "pose",
    TaskKind.TRACK_XY_VELOCITY: "velocity",
    TaskKind.TRACK_XYO_VELOCITY: "velocity",
    TaskKind.TRACK_XYZ_VELOCITY: "velocity",
}
_FLAG = {
    TaskKind.GO_TO_XY: 0,
    TaskKind.GO_TO_XYZ: 0,
    TaskKind.GO_TO_POSE_2D: 1,
    TaskKind.GO_TO_POSE_3D: 1,
    TaskKind.TRACK_XY_VELOCITY: 2,
    TaskKind.TRACK_XYZ_VELOCITY: 2,
    TaskKind.TRACK_XYO_VELOCITY: 3,
}


class DoneReason(enum.IntEnum):
    NONE = 0
    HORIZON = 1
    OUT_OF_BOUNDS = 2
    NON_FINITE = 3


@dataclass(frozen=True)
class TaskParams:
    """Distribution, reward and termination parameters of a task."""

    train_radius: tuple = None  # defaults to (1, 4) in 3DoF, (1, 5) in 6DoF
    eval_radius: tuple = None  # defaults to (3, 4) in 3DoF, (1, 5) in 6DoF
    goal_speed_max: float = 0.5
    goal_omega_max: float = 0.5
    sigma_position: float = 0.5
    sigma_rotation: float = 0.25
    sigma_velocity: float = 0.2
    sigma_omega: float = 0.2
    action_cost: float = 0.01
    horizon: int = 500
    max_distance: float = 10.0

    def radius(self, kind, mode):
        if mode == "eval":
            r = self.eval_radius
            default = (3.0, 4.0) if kind.planar else (1.0, 5.0)
        elif mode == "train":
            r = self.train_radius
            default = (1.0, 4.0) if kind.planar else (1.0, 5.0)
        else:
            raise ValueError(f"mode must be 'train' or 'eval', got {mode!r}")
        return tuple(float(x) for x in (default if r is None else r))


DEFAULT_PARAMS = TaskParams()


@dataclass
class TaskGoal:
    """Goal of one environment, or of a batch when the arrays carry a leading axis.

    Fields a task does not use stay at their neutral value (zero vector,
    zero heading, identity rotation).
    """

    kind: TaskKind
    position: np.ndarray
    heading: np.ndarray
    rotation: np.ndarray
    velocity: np.ndarray
    omega: np.ndarray

    @classmethod
    def neutral(cls, kind, n=None):
        dim = 2 if kind.planar else 3
        batch = () if n is None else (n,)
        return cls(
            kind=kind,
            position=np.zeros(batch + (dim,)),
            heading=np.zeros(batch),
            rotation=np.broadcast_to(np.eye(3), batch + (3, 3)).copy(),
            velocity=np.zeros(batch + (dim,)),
            omega=np.zeros(batch),
        )

    def copy(self):
        return replace(
            self,
            position=self.position.copy(),
            heading=np.array(self.heading, copy=True),
            rotation=self.rotation.copy(),
            velocity=self.velocity.copy(),
            omega=np.array(self.omega, copy=True),
        )


def sample_goal(kind, rng, params=DEFAULT_PARAMS):
    kind = TaskKind(kind)
    goal = TaskGoal.neutral(kind)
    if kind.family == "pose":
        if kind.planar:
            goal.heading = np.array(geom.wrap_angle(rng.uniform(-np.pi, np.pi)))
        else:
            goal.rotation = geom.quat_to_rotmat(geom.random_quaternion(rng))
    elif kind.family == "velocity":
        dim = 2 if kind.planar else 3
        goal.velocity = rng.uniform(0.0, params.goal_speed_max) * _unit_vector(rng, dim)
        if kind is TaskKind.TRACK_XYO_VELOCITY:
            goal.omega = np.array(rng.uniform(-params.goal_omega_max, params.goal_omega_max))
    return goal


def _unit_vector(rng, dim):
    if dim == 2:
        phi = rng.uniform(-np.pi, np.pi)
        return np.array([np.cos(phi), np.sin(phi)])
    v = rng.standard_normal(3)
    return v / np.linalg.norm(v)


def sample_initial_state(kind, mode, rng, params=DEFAULT_PARAMS):
    """Spawn at rest at a random offset from the (origin) goal."""
    kind = TaskKind(kind)
    lo, hi = params.radius(kind, mode)
    r = rng.uniform(lo, hi)
    if kind.planar:
        phi = rng.uniform(-np.pi, np.pi)
        heading = rng.uniform(-np.pi, np.pi)
        return PlanarState.at_rest(r * np.array([np.cos(phi), np.sin(phi)]), geom.wrap_angle(heading))
    direction = _unit_vector(rng, 3)
    return RigidState.at_rest(r * direction, geom.random_quaternion(rng))


def _check(kind, state, goal):
    kind = TaskKind(kind)
    want = PlanarState if kind.planar else RigidState
    if not isinstance(state, want):
        raise KindMismatch(f"{kind.value} needs a {want.__name__}, got {type(state).__name__}")
    if goal.kind is not kind:
        raise KindMismatch(f"goal is for {goal.kind.value}, task is {kind.value}")
    return kind


def _world_omega(state):
    return geom.quat_rotate(state.orientation, state.ang_vel)


def task_data(kind, state, goal):
    """Task-specific observation block, zero-padded to 4 (3DoF) or 9 (6DoF)."""
    kind = _check(kind, state, goal)
    batch = state.position.shape[:-1]
    td = np.zeros(batch + (kind.td_dim,))
    family = kind.family
    if family in ("position", "pose"):
        delta = goal.position - state.position
        dim = delta.shape[-1]
        td[..., :dim] = delta
        if family == "pose":
            if kind.planar:
                dth = geom.heading_delta(state.heading, goal.heading)
                td[..., 2] = np.cos(dth)
                td[..., 3] = np.sin(dth)
            else:
                dR = geom.relative_rotation(geom.quat_to_rotmat(state.orientation), goal.rotation)
                td[..., 3:6] = dR[..., 0, :]
                td[..., 6:9] = dR[..., 1, :]
    else:
        dv = goal.velocity - state.lin_vel
        td[..., : dv.shape[-1]] = dv
        if kind is TaskKind.TRACK_XYO_VELOCITY:
            td[..., 2] = goal.omega - state.ang_vel
    return td


def observe(kind, state, goal):
    kind = _check(kind, state, goal)
    td = task_data(kind, state, goal)
    batch = td.shape[:-1]
    tf = np.full(batch + (1,), float(kind.flag))
    if kind.planar:
        parts = [
            geom.encode_heading(state.heading),
            state.lin_vel,
            np.asarray(state.ang_vel)[..., None],
            tf,
            td,
        ]
    else:
        R = geom.quat_to_rotmat(state.orientation)
        parts = [geom.rotmat_to_sixd(R), state.lin_vel, _world_omega(state), tf, td]
    return np.concatenate(parts, axis=-1)


def distance_to_goal(kind, state, goal):
    return np.linalg.norm(goal.position - state.position, axis=-1)


def rotation_error(kind, state, goal):
    """Attitude error in rad (zero for tasks without an attitude goal)."""
    kind = TaskKind(kind)
    if kind.family != "pose":
        return np.zeros(state.position.shape[:-1])
    if kind.planar:
        return np.abs(geom.heading_delta(state.heading, goal.heading))
    dR = geom.relative_rotation(geom.quat_to_rotmat(state.orientation), goal.rotation)
    return geom.rotation_angle(dR)


def velocity_error(kind, state, goal):
    kind = TaskKind(kind)
    if kind.family != "velocity":
        return np.zeros(state.position.shape[:-1])
    return np.linalg.norm(goal.velocity - state.lin_vel, axis=-1)


def reward(kind, state_next, goal, action, params=DEFAULT_PARAMS):
    """Exponential shaping in [0, 1] minus a per-step penalty on the fraction of thrusters fired."""
    kind = _check(kind, state_next, goal)
    action = np.asarray(action)
    penalty = params.action_cost * action.astype(np.float64).mean(axis=-1)
    family = kind.family
    if family == "position":
        r = np.exp(-distance_to_goal(kind, state_next, goal) / params.sigma_position)
    elif family == "pose":
        d = distance_to_goal(kind, state_next, goal)
        err = rotation_error(kind, state_next, goal)
        r = 0.5 * np.exp(-d / params.sigma_position) + 0.5 * np.exp(-err / params.sigma_rotation)
    else:
        r_v = np.exp(-velocity_error(kind, state_next, goal) / params.sigma_velocity)
        if kind is TaskKind.TRACK_XYO_VELOCITY:
            dw = np.abs(goal.omega - state_next.ang_vel)
            r = 0.5 * r_v + 0.5 * np.exp(-dw / params.sigma_omega)
        else:
            r = r_v
    return r - penalty


def episode_done(step_index, state, goal, params=DEFAULT_PARAMS):
    """Return ``(done, reason)``; arrays for batched input.

    ``step_index`` counts completed control steps in the episode.
    """
    step_index = np.asarray(step_index)
    dist = np.linalg.norm(goal.position - state.position, axis=-1)
    finite = finite_mask(state)
    reason = np.where(step_index >= params.horizon, DoneReason.HORIZON, DoneReason.NONE)
    reason = np.where(finite & (dist > params.max_distance), DoneReason.OUT_OF_BOUNDS, reason)
    reason = np.where(~finite, DoneReason.NON_FINITE, reason).astype(np.int8)
    done = reason != DoneReason.NONE
    if done.ndim == 0:
        return bool(done), DoneReason(int(reason))
    return done, reason
