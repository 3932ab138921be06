"""Orientation arithmetic.

Quaternions are stored as ``(..., 4)`` arrays in ``(w, x, y, z)`` order and
rotation matrices as ``(..., 3, 3)``. Every function broadcasts over leading
batch dimensions.
"""

import numpy as np

from .errors import DegenerateSixD

_SIXD_EPS = 1e-8


def wrap_angle(theta):
    """Wrap angles into (-pi, pi]."""
    theta = np.asarray(theta, dtype=np.float64)
    wrapped = np.pi - np.remainder(np.pi - theta, 2.0 * np.pi)
    return wrapped if wrapped.ndim else float(wrapped)


def heading_delta(theta, theta_goal):
    """Signed difference ``theta_goal - theta`` wrapped into (-pi, pi]."""
    return wrap_angle(np.asarray(theta_goal, dtype=np.float64) - np.asarray(theta, dtype=np.float64))


def encode_heading(theta):
    theta = np.asarray(theta, dtype=np.float64)
    return np.stack([np.cos(theta), np.sin(theta)], axis=-1)


def quat_canonical(q):
    """Flip sign so that w >= 0."""
    q = np.asarray(q, dtype=np.float64)
    return np.where(q[..., :1] < 0.0, -q, q)


def quat_normalize(q):
    q = np.asarray(q, dtype=np.float64)
    return quat_canonical(q / np.linalg.norm(q, axis=-1, keepdims=True))


def quat_mul(q, r):
    """Hamilton product ``q ⊗ r``."""
    q = np.asarray(q, dtype=np.float64)
    r = np.asarray(r, dtype=np.float64)
    w1, x1, y1, z1 = q[..., 0], q[..., 1], q[..., 2], q[..., 3]
    w2, x2, y2, z2 = r[..., 0], r[..., 1], r[..., 2], r[..., 3]
    return np.stack(
        [
            w1 * w2 - x1 * x2 - y1 * y2 - z1 * z2,
            w1 * x2 + x1 * w2 + y1 * z2 - z1 * y2,
            w1 * y2 - x1 * z2 + y1 * w2 + z1 * x2,
            w1 * z2 + x1 * y2 - y1 * x2 + z1 * w2,
        ],
        axis=-1,
    )


def quat_exp(rotvec):
    """Unit quaternion of the rotation vector ``rotvec`` (axis * angle)."""
    rotvec = np.asarray(rotvec, dtype=np.float64)
    angle = np.linalg.norm(rotvec, axis=-1)
    half = 0.5 * angle
    # sin(half)/angle, with its series near zero
    safe = np.where(angle > 1e-8, angle, 1.0)
    scale = np.where(angle > 1e-8, np.sin(half) / safe, 0.5 - angle * angle / 48.0)
    return np.concatenate([np.cos(half)[..., None], rotvec * scale[..., None]], axis=-1)


def quat_from_axis_angle(axis, angle):
    axis = np.asarray(axis, dtype=np.float64)
    axis = axis / np.linalg.norm(axis, axis=-1, keepdims=True)
    return quat_exp(axis * np.asarray(angle, dtype=np.float64)[..., None])


def quat_to_rotmat(q):
    q = np.asarray(q, dtype=np.float64)
    w, x, y, z = q[..., 0], q[..., 1], q[..., 2], q[..., 3]
    xx, yy, zz = x * x, y * y, z * z
    xy, xz, yz = x * y, x * z, y * z
    wx, wy, wz = w * x, w * y, w * z
    rows = [
        [1.0 - 2.0 * (yy + zz), 2.0 * (xy - wz), 2.0 * (xz + wy)],
        [2.0 * (xy + wz), 1.0 - 2.0 * (xx + zz), 2.0 * (yz - wx)],
        [2.0 * (xz - wy), 2.0 * (yz + wx), 1.0 - 2.0 * (xx + yy)],
    ]
    return np.stack([np.stack(r, axis=-1) for r in rows], axis=-2)


def rotmat_to_quat(R):
    """Inverse of :func:`quat_to_rotmat` (Shepperd's method), canonical w >= 0."""
    R = np.asarray(R, dtype=np.float64)
    batch = R.shape[:-2]
    R = R.reshape(-1, 3, 3)
    trace = R[:, 0, 0] + R[:, 1, 1] + R[:, 2, 2]
    q = np.empty((R.shape[0], 4))
    diag = np.stack([R[:, 0, 0], R[:, 1, 1], R[:, 2, 2]], axis=-1)
    choice = np.where(trace > diag.max(axis=-1), 3, diag.argmax(axis=-1))
    for i in range(R.shape[0]):
        m = R[i]
        c = choice[i]
        if c == 3:
            s = 2.0 * np.sqrt(1.0 + trace[i])
            q[i] = [0.25 * s, (m[2, 1] - m[1, 2]) / s, (m[0, 2] - m[2, 0]) / s, (m[1, 0] - m[0, 1]) / s]
        elif c == 0:
            s = 2.0 * np.sqrt(1.0 + m[0, 0] - m[1, 1] - m[2, 2])
            q[i] = [(m[2, 1] - m[1, 2]) / s, 0.25 * s, (m[0, 1] + m[1, 0]) / s, (m[0, 2] + m[2, 0]) / s]
        elif c == 1:
            s = 2.0 * np.sqrt(1.0 + m[1, 1] - m[0, 0] - m[2, 2])
            q[i] = [(m[0, 2] - m[2, 0]) / s, (m[0, 1] + m[1, 0]) / s, 0.25 * s, (m[1, 2] + m[2, 1]) / s]
        else:
            s = 2.0 * np.sqrt(1.0 + m[2, 2] - m[0, 0] - m[1, 1])
            q[i] = [(m[1, 0] - m[0, 1]) / s, (m[0, 2] + m[2, 0]) / s, (m[1, 2] + m[2, 1]) / s, 0.25 * s]
    return quat_normalize(q).reshape(batch + (4,))


def quat_rotate(q, v):
    """Rotate vectors ``v`` from body to world frame by ``q``."""
    q = np.asarray(q, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    w = q[..., :1]
    u = q[..., 1:]
    t = 2.0 * np.cross(u, v)
    return v + w * t + np.cross(u, t)


def heading_to_quat(theta):
    theta = np.asarray(theta, dtype=np.float64)
    zero = np.zeros_like(theta)
    return quat_canonical(np.stack([np.cos(0.5 * theta), zero, zero, np.sin(0.5 * theta)], axis=-1))


def quat_to_heading(q):
    q = np.asarray(q, dtype=np.float64)
    return wrap_angle(2.0 * np.arctan2(q[..., 3], q[..., 0]))


def random_quaternion(rng, size=None):
    """Uniformly distributed rotations (normalized 4D Gaussian)."""
    shape = (4,) if size is None else (*np.atleast_1d(size), 4)
    return quat_normalize(rng.standard_normal(shape))


def rotmat_to_sixd(R):
    """First two columns of ``R``, concatenated as (a1, a2)."""
    R = np.asarray(R, dtype=np.float64)
    return np.concatenate([R[..., :, 0], R[..., :, 1]], axis=-1)


def sixd_to_rotmat(v):
    """Gram-Schmidt decode of a 6D vector into a proper rotation matrix.

    Raises DegenerateSixD if the first triple is (near) zero or the two
    triples are (near) parallel.
    """
    v = np.asarray(v, dtype=np.float64)
    a1, a2 = v[..., :3], v[..., 3:6]
    n1 = np.linalg.norm(a1, axis=-1, keepdims=True)
    if np.any(n1 <= _SIXD_EPS):
        raise DegenerateSixD("first 6D column has (near) zero norm")
    b1 = a1 / n1
    perp = a2 - np.sum(b1 * a2, axis=-1, keepdims=True) * b1
    n2 = np.linalg.norm(perp, axis=-1, keepdims=True)
    scale = np.maximum(np.linalg.norm(a2, axis=-1, keepdims=True), 1.0)
    if np.any(n2 <= _SIXD_EPS * scale):
        raise DegenerateSixD("6D columns are (near) parallel")
    b2 = perp / n2
    b3 = np.cross(b1, b2)
    return np.stack([b1, b2, b3], axis=-1)


def relative_rotation(Rs, Rg):
    """``Rs^T Rg``: the goal attitude expressed in the body frame."""
    Rs = np.asarray(Rs, dtype=np.float64)
    return np.swapaxes(Rs, -1, -2) @ np.asarray(Rg, dtype=np.float64)


def rotation_angle(R):
    """Geodesic angle of a rotation matrix, in [0, pi].

    Uses atan2 of the skew and trace parts, which is the same angle as
    arccos((tr R - 1) / 2) without its loss of precision near 0 and pi.
    """
    R = np.asarray(R, dtype=np.float64)
    cos = 0.5 * (R[..., 0, 0] + R[..., 1, 1] + R[..., 2, 2] - 1.0)
    axis = np.stack([R[..., 2, 1] - R[..., 1, 2], R[..., 0, 2] - R[..., 2, 0], R[..., 1, 0] - R[..., 0, 1]], axis=-1)
    sin = 0.5 * np.linalg.norm(axis, axis=-1)
    return np.arctan2(sin, cos)


def integrate_orientation(q, omega_body, dt):
    """Propagate ``q`` by a constant body rate over ``dt``: ``q ⊗ exp(omega*dt/2)``."""
    if dt <= 0:
        raise ValueError("dt must be positive")
    omega_body = np.asarray(omega_body, dtype=np.float64)
    return quat_normalize(quat_mul(q, quat_exp(omega_body * dt)))
