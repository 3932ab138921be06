"""Rigid-body propagation under binary thrusters.

Two state types share one stepping entry point:

* :class:`PlanarState` for the 3DoF floating platform. Only x, y, heading and
  yaw rate exist, so the out-of-plane channels cannot drift.
* :class:`RigidState` for the 6DoF free flyer.

Arrays carry arbitrary leading batch dimensions; every field is its own
contiguous array so a batch of environments is a structure of arrays.
"""

from dataclasses import dataclass, field, replace

import numpy as np

from . import geom
from .errors import ConfigInvalid, LayoutMismatch, NonFiniteState

RANK_TOL = 1e-9


@dataclass(frozen=True)
class BodyParams:
    mass: float = 5.0
    inertia: np.ndarray = field(default_factory=lambda: np.diag([0.05, 0.05, 0.078]))

    def __post_init__(self):
        inertia = np.asarray(self.inertia, dtype=np.float64)
        if inertia.shape == (3,):
            inertia = np.diag(inertia)
        object.__setattr__(self, "inertia", inertia)
        if not np.isfinite(self.mass) or self.mass <= 0:
            raise ConfigInvalid(f"mass must be positive, got {self.mass}")
        if inertia.shape != (3, 3):
            raise ConfigInvalid(f"inertia must be 3x3 or a 3-vector diagonal, got shape {inertia.shape}")
        if not np.allclose(inertia, inertia.T, rtol=0, atol=1e-12):
            raise ConfigInvalid("inertia must be symmetric")
        if np.any(np.diag(inertia) <= 0) or np.any(np.linalg.eigvalsh(inertia) <= 0):
            raise ConfigInvalid("inertia must be positive definite")

    @property
    def inertia_inv(self):
        return np.linalg.inv(self.inertia)


@dataclass(frozen=True)
class ThrusterLayout:
    """Body-frame thruster geometry; every thruster produces ``magnitude`` newtons when fired."""

    points: np.ndarray
    directions: np.ndarray
    magnitude: float = 1.0

    def __post_init__(self):
        points = np.asarray(self.points, dtype=np.float64).reshape(-1, 3)
        directions = np.asarray(self.directions, dtype=np.float64).reshape(-1, 3)
        object.__setattr__(self, "points", points)
        object.__setattr__(self, "directions", directions)
        if points.shape != directions.shape or len(points) == 0:
            raise ConfigInvalid(
                f"need one point per direction, got {len(points)} points and {len(directions)} directions"
            )
        norms = np.linalg.norm(directions, axis=1)
        bad = np.flatnonzero(np.abs(norms - 1.0) > 1e-12)
        if bad.size:
            raise ConfigInvalid(f"thruster directions must be unit vectors (thrusters {bad.tolist()})")
        if not np.isfinite(self.magnitude) or self.magnitude <= 0:
            raise ConfigInvalid(f"thruster magnitude must be positive, got {self.magnitude}")

    @property
    def n(self):
        return len(self.points)

    @property
    def planar(self):
        return bool(np.all(self.points[:, 2] == 0.0) and np.all(self.directions[:, 2] == 0.0))

    @classmethod
    def default_planar(cls, half_width=0.25, magnitude=1.0):
        """Eight thrusters, two per corner of a square.

        Symmetric pairs translate along ±x or ±y, antisymmetric pairs spin
        about z.
        """
        a = half_width
        points = []
        directions = []
        for sx, sy in [(1, 1), (-1, 1), (-1, -1), (1, -1)]:
            points += [(sx * a, sy * a, 0.0)] * 2
            directions += [(-sx, 0.0, 0.0), (0.0, -sy, 0.0)]
        return cls(np.array(points), np.array(directions), magnitude)

    @classmethod
    def default_spatial(cls, half_width=0.25, magnitude=1.0):
        """The planar eight plus a +z and a -z thruster at each corner."""
        planar = cls.default_planar(half_width, magnitude)
        corners = planar.points[::2]
        points = [planar.points]
        directions = [planar.directions]
        for corner in corners:
            points.append(np.array([corner, corner]))
            directions.append(np.array([(0.0, 0.0, 1.0), (0.0, 0.0, -1.0)]))
        return cls(np.concatenate(points), np.concatenate(directions), magnitude)


@dataclass
class PlanarState:
    position: np.ndarray  # (..., 2) m, world
    heading: np.ndarray  # (...) rad in (-pi, pi]
    lin_vel: np.ndarray  # (..., 2) m/s, world
    ang_vel: np.ndarray  # (...) rad/s

    @classmethod
    def at_rest(cls, position=(0.0, 0.0), heading=0.0):
        position = np.asarray(position, dtype=np.float64)
        heading = np.asarray(heading, dtype=np.float64)
        return cls(position.copy(), heading.copy(), np.zeros_like(position), np.zeros_like(heading))

    def to_rigid(self):
        """Embed in 3D; the out-of-plane components are exact zeros."""
        pad = np.zeros(self.position.shape[:-1] + (1,))
        return RigidState(
            position=np.concatenate([self.position, pad], axis=-1),
            orientation=geom.heading_to_quat(self.heading),
            lin_vel=np.concatenate([self.lin_vel, pad], axis=-1),
            ang_vel=np.concatenate([pad, pad, self.ang_vel[..., None]], axis=-1),
        )

    def copy(self):
        return PlanarState(*(np.array(x, dtype=np.float64, copy=True) for x in (self.position, self.heading, self.lin_vel, self.ang_vel)))


@dataclass
class RigidState:
    position: np.ndarray  # (..., 3) m, world
    orientation: np.ndarray  # (..., 4) unit quaternion, body -> world
    lin_vel: np.ndarray  # (..., 3) m/s, world
    ang_vel: np.ndarray  # (..., 3) rad/s, body

    @classmethod
    def at_rest(cls, position=(0.0, 0.0, 0.0), orientation=(1.0, 0.0, 0.0, 0.0)):
        position = np.asarray(position, dtype=np.float64)
        return cls(
            position.copy(),
            geom.quat_normalize(orientation),
            np.zeros_like(position),
            np.zeros_like(position),
        )

    def copy(self):
        return RigidState(*(np.array(x, dtype=np.float64, copy=True) for x in (self.position, self.orientation, self.lin_vel, self.ang_vel)))


def wrench_matrix(layout):
    """6 x n matrix; column i is (force; torque) of thruster i fired alone."""
    forces = layout.magnitude * layout.directions
    torques = np.cross(layout.points, forces)
    return np.concatenate([forces, torques], axis=1).T


def wrench_rank(layout, tol=RANK_TOL):
    W = wrench_matrix(layout)
    if layout.planar:
        W = W[[0, 1, 5]]
    s = np.linalg.svd(W, compute_uv=False)
    return int(np.sum(s > tol))


def net_wrench(layout, action):
    """Body-frame (force, torque) of a batch of on/off thruster commands."""
    action = np.asarray(action)
    if action.shape[-1] != layout.n:
        raise LayoutMismatch(f"action has {action.shape[-1]} bits, layout has {layout.n} thrusters")
    bits = action.astype(np.float64)
    forces = layout.magnitude * layout.directions
    torques = np.cross(layout.points, forces)
    force = np.zeros(bits.shape[:-1] + (3,))
    torque = np.zeros(bits.shape[:-1] + (3,))
    # fixed summation order keeps batch results independent of partitioning
    for i in range(layout.n):
        b = bits[..., i : i + 1]
        force += b * forces[i]
        torque += b * torques[i]
    return force, torque


def step(state, params, layout, action, control_dt, substeps, check_finite=True):
    """Advance one control period with the action held over all substeps.

    Semi-implicit Euler: velocities are updated first, positions and attitude
    then use the new velocities. There is no gravity.
    """
    if control_dt <= 0:
        raise ValueError("control_dt must be positive")
    if substeps < 1:
        raise ValueError("substeps must be >= 1")
    force_b, torque_b = net_wrench(layout, action)
    h = control_dt / substeps
    if isinstance(state, PlanarState):
        if not layout.planar:
            raise LayoutMismatch("planar state needs a planar thruster layout")
        out = _step_planar(state, params, force_b, torque_b, h, substeps)
    else:
        out = _step_spatial(state, params, force_b, torque_b, h, substeps)
    if check_finite:
        bad = ~finite_mask(out)
        if np.any(bad):
            raise NonFiniteState("integration produced a non-finite state", mask=bad)
    return out


def finite_mask(state):
    if isinstance(state, PlanarState):
        return (
            np.isfinite(state.position).all(axis=-1)
            & np.isfinite(state.heading)
            & np.isfinite(state.lin_vel).all(axis=-1)
            & np.isfinite(state.ang_vel)
        )
    return (
        np.isfinite(state.position).all(axis=-1)
        & np.isfinite(state.orientation).all(axis=-1)
        & np.isfinite(state.lin_vel).all(axis=-1)
        & np.isfinite(state.ang_vel).all(axis=-1)
    )


def _step_planar(state, params, force_b, torque_b, h, substeps):
    fx = force_b[..., 0] / params.mass
    fy = force_b[..., 1] / params.mass
    alpha = torque_b[..., 2] / params.inertia[2, 2]
    px = state.position[..., 0].copy()
    py = state.position[..., 1].copy()
    vx = state.lin_vel[..., 0].copy()
    vy = state.lin_vel[..., 1].copy()
    th = np.array(state.heading, dtype=np.float64, copy=True)
    w = np.array(state.ang_vel, dtype=np.float64, copy=True)
    for _ in range(substeps):
        c = np.cos(th)
        s = np.sin(th)
        vx += (c * fx - s * fy) * h
        vy += (s * fx + c * fy) * h
        px += vx * h
        py += vy * h
        w += alpha * h
        th += w * h
    return PlanarState(
        position=np.stack([px, py], axis=-1),
        heading=geom.wrap_angle(th),
        lin_vel=np.stack([vx, vy], axis=-1),
        ang_vel=w,
    )


def _matvec(M, v):
    # explicit sums: deterministic regardless of batch size
    return M[:, 0] * v[..., 0:1] + M[:, 1] * v[..., 1:2] + M[:, 2] * v[..., 2:3]


def _step_spatial(state, params, force_b, torque_b, h, substeps):
    """6DoF substeps.

    The rotational update integrates world-frame angular momentum
    L = R I omega and recovers the body rate from it, which is the same
    first-order scheme as omega += I^-1 (tau - omega x I omega) h but keeps
    L exactly constant when no torque acts.
    """
    I = params.inertia
    I_inv = params.inertia_inv
    accel_b = force_b / params.mass
    p = state.position.astype(np.float64, copy=True)
    v = state.lin_vel.astype(np.float64, copy=True)
    q = state.orientation.astype(np.float64, copy=True)
    L = geom.quat_rotate(q, _matvec(I, state.ang_vel))
    for _ in range(substeps):
        v = v + geom.quat_rotate(q, accel_b) * h
        p = p + v * h
        L = L + geom.quat_rotate(q, torque_b) * h
        w = _body_rate(q, L, I_inv)
        q = geom.quat_normalize(geom.quat_mul(q, geom.quat_exp(w * h)))
    return RigidState(position=p, orientation=q, lin_vel=v, ang_vel=_body_rate(q, L, I_inv))


def _body_rate(q, L_world, I_inv):
    q_conj = q * np.array([1.0, -1.0, -1.0, -1.0])
    return _matvec(I_inv, geom.quat_rotate(q_conj, L_world))


def angular_momentum(state, params):
    """World-frame angular momentum."""
    if isinstance(state, PlanarState):
        return params.inertia[2, 2] * np.asarray(state.ang_vel)
    return geom.quat_rotate(state.orientation, _matvec(params.inertia, state.ang_vel))


def select(mask, new, old):
    """Per-env choice between two batched states of the same type."""
    mask = np.asarray(mask, dtype=bool)
    out = {}
    for name in ("position", "heading", "orientation", "lin_vel", "ang_vel"):
        if not hasattr(new, name):
            continue
        a = getattr(new, name)
        b = getattr(old, name)
        m = mask.reshape(mask.shape + (1,) * (a.ndim - mask.ndim))
        out[name] = np.where(m, a, b)
    return replace(new, **out)
