import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from thrustlab import geom
from thrustlab.errors import DegenerateSixD

angles = st.floats(-20.0, 20.0, allow_nan=False)


def rot_z(phi):
    c, s = math.cos(phi), math.sin(phi)
    return np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])


def random_rotations(n, seed=0):
    rng = np.random.default_rng(seed)
    return geom.quat_to_rotmat(geom.random_quaternion(rng, n))


def assert_rotation(R, tol=1e-9):
    R = np.asarray(R)
    eye = np.broadcast_to(np.eye(3), R.shape)
    assert np.abs(np.swapaxes(R, -1, -2) @ R - eye).max() < tol
    assert np.abs(np.linalg.det(R) - 1.0).max() < tol


# ---- 6D representation ----------------------------------------------------


def test_sixd_of_identity():
    np.testing.assert_array_equal(geom.rotmat_to_sixd(np.eye(3)), [1, 0, 0, 0, 1, 0])


def test_sixd_of_half_turn_about_z():
    R = np.diag([-1.0, -1.0, 1.0])
    np.testing.assert_array_equal(geom.rotmat_to_sixd(R), [-1, 0, 0, 0, -1, 0])


def test_sixd_round_trip_random_rotations():
    R = random_rotations(1000)
    back = geom.sixd_to_rotmat(geom.rotmat_to_sixd(R))
    assert np.linalg.norm(back - R, axis=(-2, -1)).max() < 1e-9


def test_decode_identity_and_perturbed_identity():
    np.testing.assert_allclose(geom.sixd_to_rotmat([1, 0, 0, 0, 1, 0]), np.eye(3), atol=1e-15)
    np.testing.assert_allclose(geom.sixd_to_rotmat([2, 0, 0, 1, 1, 0]), np.eye(3), atol=1e-15)


def test_decode_degenerate_raises():
    with pytest.raises(DegenerateSixD):
        geom.sixd_to_rotmat([0, 0, 1e-12, 0, 0, 1e-12])
    with pytest.raises(DegenerateSixD):
        geom.sixd_to_rotmat([1, 0, 0, 3, 0, 0])


def test_decode_gram_schmidt_formula():
    # hand-rolled Gram-Schmidt on one vector as an independent reference
    a1 = np.array([0.3, -1.2, 0.5])
    a2 = np.array([1.0, 0.4, 2.0])
    b1 = a1 / math.sqrt(a1 @ a1)
    u = a2 - (b1 @ a2) * b1
    b2 = u / math.sqrt(u @ u)
    b3 = np.array([b1[1] * b2[2] - b1[2] * b2[1], b1[2] * b2[0] - b1[0] * b2[2], b1[0] * b2[1] - b1[1] * b2[0]])
    want = np.column_stack([b1, b2, b3])
    np.testing.assert_allclose(geom.sixd_to_rotmat(np.concatenate([a1, a2])), want, atol=1e-14)


@settings(max_examples=200, deadline=None)
@given(st.lists(st.floats(-10, 10, allow_nan=False), min_size=6, max_size=6))
def test_decode_is_always_a_rotation(v):
    v = np.array(v)
    try:
        R = geom.sixd_to_rotmat(v)
    except DegenerateSixD:
        return
    assert_rotation(R)


def test_decode_noisy_encodings_are_rotations():
    rng = np.random.default_rng(3)
    R = random_rotations(500, seed=3)
    noisy = geom.rotmat_to_sixd(R) + 0.05 * rng.standard_normal((500, 6))
    out = geom.sixd_to_rotmat(noisy)
    assert_rotation(out)
    # noise of this size keeps the decode close to the original
    assert np.linalg.norm(out - R, axis=(-2, -1)).max() < 0.5


def test_sixd_continuity_probe():
    axes = [np.array([0, 0, 1.0]), np.array([1.0, 2.0, -0.5])]
    eps = 1e-3
    for axis in axes:
        phis = np.linspace(-math.pi, math.pi, 2001)
        q0 = geom.quat_from_axis_angle(np.broadcast_to(axis, (phis.size, 3)), phis)
        q1 = geom.quat_from_axis_angle(np.broadcast_to(axis, (phis.size, 3)), phis + eps)
        jump = np.linalg.norm(
            geom.rotmat_to_sixd(geom.quat_to_rotmat(q1)) - geom.rotmat_to_sixd(geom.quat_to_rotmat(q0)), axis=-1
        )
        # each column moves at most eps (unit vectors rotating by eps), so C = 2 suffices
        assert jump.max() <= 2.0 * eps


# ---- relative rotation ----------------------------------------------------


def test_relative_rotation_of_equal_attitudes_is_identity():
    R = random_rotations(10)
    np.testing.assert_allclose(geom.relative_rotation(R, R), np.broadcast_to(np.eye(3), R.shape), atol=1e-12)


def test_relative_rotation_from_identity():
    R = random_rotations(10, seed=1)
    np.testing.assert_allclose(geom.relative_rotation(np.eye(3), R), R, atol=1e-15)


def test_relative_rotation_composition_oracle():
    Rs = random_rotations(1000, seed=4)
    Rg = random_rotations(1000, seed=5)
    dR = geom.relative_rotation(Rs, Rg)
    assert_rotation(dR)
    assert np.abs(Rs @ dR - Rg).max() < 1e-9


def test_rotation_angle():
    assert geom.rotation_angle(np.eye(3)) == 0.0
    assert geom.rotation_angle(rot_z(0.7)) == pytest.approx(0.7, abs=1e-12)
    assert geom.rotation_angle(np.diag([-1.0, -1.0, 1.0])) == pytest.approx(math.pi)


# ---- quaternions ----------------------------------------------------------


def test_quaternion_matrix_round_trip():
    rng = np.random.default_rng(7)
    q = geom.random_quaternion(rng, 500)
    back = geom.rotmat_to_quat(geom.quat_to_rotmat(q))
    np.testing.assert_allclose(back, geom.quat_canonical(q), atol=1e-12)
    assert np.all(back[:, 0] >= 0)


def test_quat_rotate_matches_matrix():
    rng = np.random.default_rng(8)
    q = geom.random_quaternion(rng, 100)
    v = rng.standard_normal((100, 3))
    want = np.einsum("nij,nj->ni", geom.quat_to_rotmat(q), v)
    np.testing.assert_allclose(geom.quat_rotate(q, v), want, atol=1e-12)


def test_heading_quaternion_round_trip():
    theta = np.linspace(-3.1, 3.1, 50)
    np.testing.assert_allclose(geom.quat_to_heading(geom.heading_to_quat(theta)), theta, atol=1e-12)


def test_integrate_zero_rate_is_identity_map():
    q = geom.quat_normalize([0.3, 0.1, -0.5, 0.8])
    np.testing.assert_allclose(geom.integrate_orientation(q, [0, 0, 0], 0.1), q, atol=1e-15)


def test_integrate_half_turn_about_z():
    q = geom.integrate_orientation([1.0, 0, 0, 0], [0, 0, math.pi], 1.0)
    assert abs(q[0]) < 1e-12
    assert abs(abs(q[3]) - 1.0) < 1e-12


def test_integrate_four_quarter_turns_compose_to_identity():
    q = np.array([1.0, 0, 0, 0])
    for _ in range(4):
        q = geom.integrate_orientation(q, [0, 0, math.pi / 2], 1.0)
    np.testing.assert_allclose(geom.quat_to_rotmat(q), np.eye(3), atol=1e-9)


def test_integrate_exact_for_constant_rate():
    w = np.array([0.3, -0.2, 0.9])
    q = geom.integrate_orientation([1.0, 0, 0, 0], w, 2.0)
    angle = np.linalg.norm(w) * 2.0
    np.testing.assert_allclose(q, geom.quat_from_axis_angle(w, angle), atol=1e-14)


def test_integrate_rejects_non_positive_dt():
    with pytest.raises(ValueError):
        geom.integrate_orientation([1.0, 0, 0, 0], [0, 0, 1], 0.0)


def test_integrate_keeps_unit_norm_over_a_million_steps():
    # one million steps as a batch of 1000 quaternions x 1000 sequential steps
    rng = np.random.default_rng(11)
    q = geom.random_quaternion(rng, 1000)
    w = rng.uniform(-5, 5, (1000, 3))
    worst = 0.0
    for _ in range(1000):
        q = geom.integrate_orientation(q, w, 0.01)
        worst = max(worst, np.abs(np.linalg.norm(q, axis=-1) - 1.0).max())
    assert worst < 1e-12


# ---- headings -------------------------------------------------------------


def test_heading_delta_examples():
    assert geom.heading_delta(0.0, 0.0) == 0.0
    assert geom.heading_delta(math.pi - 0.1, -math.pi + 0.1) == pytest.approx(0.2, abs=1e-12)
    assert geom.heading_delta(1.0, 2.5) == pytest.approx(1.5, abs=1e-15)


def brute_force_delta(a, b):
    candidates = [b - a + 2 * math.pi * k for k in (-1, 0, 1)]
    return min(candidates, key=abs)


@given(st.floats(-math.pi, math.pi), st.floats(-math.pi, math.pi))
def test_heading_delta_matches_brute_force(a, b):
    got = geom.heading_delta(a, b)
    want = brute_force_delta(a, b)
    if abs(abs(want) - math.pi) > 1e-9:
        assert got == pytest.approx(want, abs=1e-12)
    else:
        assert abs(abs(got) - math.pi) < 1e-9


@given(angles, angles)
def test_heading_delta_range_and_antisymmetry(a, b):
    d = geom.heading_delta(a, b)
    assert -math.pi < d <= math.pi
    if abs(abs(d) - math.pi) > 1e-9:
        assert geom.heading_delta(b, a) == pytest.approx(-d, abs=1e-12)


@given(angles)
def test_heading_encoding_is_unit(theta):
    c, s = geom.encode_heading(theta)
    assert c * c + s * s == pytest.approx(1.0, abs=1e-15)


def test_wrap_angle_edges():
    assert geom.wrap_angle(math.pi) == math.pi
    assert geom.wrap_angle(-math.pi) == math.pi
    assert geom.wrap_angle(3 * math.pi) == pytest.approx(math.pi)


def test_rotation_angle_matches_arccos_form():
    R = random_rotations(1000, seed=12)
    want = np.arccos(np.clip(0.5 * (np.trace(R, axis1=1, axis2=2) - 1), -1, 1))
    np.testing.assert_allclose(geom.rotation_angle(R), want, atol=1e-7)
    small = geom.quat_to_rotmat(geom.quat_from_axis_angle(np.array([1.0, 2, 3]), 1e-9))
    assert geom.rotation_angle(small) == pytest.approx(1e-9, rel=1e-6)
