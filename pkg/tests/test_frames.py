import numpy as np
import pytest

from utils.frames import (
    DOWN_FACING,
    CameraMount,
    camera_to_earth,
    earth_to_camera,
    euler_rate_matrix,
    euler_to_rotation,
    hat,
    level_rotation,
    marker_in_camera,
    rotation_to_euler,
)
from vehicle.dynamics import level_state

IDENTITY_MOUNT = CameraMount(np.eye(3), np.zeros(3))


def test_hat_matches_cross_product(rng):
    v, w = rng.normal(size=3), rng.normal(size=3)
    np.testing.assert_allclose(hat(v) @ w, np.cross(v, w), atol=1e-12)


def test_hat_is_batched(rng):
    v = rng.normal(size=(4, 3))
    mats = hat(v)
    assert mats.shape == (4, 3, 3)
    np.testing.assert_allclose(mats + np.swapaxes(mats, -1, -2), 0.0)


def test_zero_euler_is_identity():
    np.testing.assert_allclose(euler_to_rotation(np.zeros(3)), np.eye(3))


def test_yaw_quarter_turn_maps_x_to_y():
    rot = euler_to_rotation(np.array([0.0, 0.0, np.pi / 2]))
    np.testing.assert_allclose(rot @ np.array([1.0, 0.0, 0.0]), [0.0, 1.0, 0.0], atol=1e-12)


def test_positive_pitch_tilts_thrust_towards_plus_x():
    rot = euler_to_rotation(np.array([0.0, 0.2, 0.0]))
    assert rot[0, 2] > 0


def test_rotation_is_orthonormal(rng):
    euler = rng.uniform(-1.0, 1.0, size=(10, 3))
    rots = euler_to_rotation(euler)
    for rot in rots:
        np.testing.assert_allclose(rot.T @ rot, np.eye(3), atol=1e-12)
        assert np.linalg.det(rot) == pytest.approx(1.0)


def test_euler_round_trip(rng):
    euler = np.column_stack([
        rng.uniform(-3.0, 3.0, 50),
        rng.uniform(-1.4, 1.4, 50),
        rng.uniform(-3.0, 3.0, 50),
    ])
    np.testing.assert_allclose(rotation_to_euler(euler_to_rotation(euler)), euler, atol=1e-9)


def test_euler_rate_matrix_level_is_identity():
    np.testing.assert_allclose(euler_rate_matrix(np.zeros(3)), np.eye(3))


def test_euler_rate_matrix_matches_rotation_derivative(rng):
    # R' = R hat(omega) for body rates omega
    euler = np.array([0.1, -0.2, 0.3])
    omega = rng.normal(size=3)
    dt = 1e-6
    euler_dot = euler_rate_matrix(euler) @ omega
    numeric = (euler_to_rotation(euler + dt * euler_dot) - euler_to_rotation(euler - dt * euler_dot)) / (2 * dt)
    np.testing.assert_allclose(numeric, euler_to_rotation(euler) @ hat(omega), atol=1e-6)


def test_mount_rejects_non_rotation():
    with pytest.raises(ValueError):
        CameraMount(np.diag([1.0, 1.0, 2.0]), np.zeros(3))
    with pytest.raises(ValueError):
        CameraMount(np.eye(3), np.zeros(2))


def test_marker_below_down_facing_camera_is_on_axis():
    x = level_state([0.0, 0.0, 5.0])
    point = marker_in_camera(x, np.zeros(3), CameraMount())
    np.testing.assert_allclose(point, [0.0, 0.0, 5.0], atol=1e-12)


def test_marker_in_camera_identity_rotation_is_translation():
    x = level_state([1.0, 1.0, 0.0])
    point = marker_in_camera(x, np.array([1.0, 1.0, 2.0]), IDENTITY_MOUNT)
    np.testing.assert_allclose(point, [0.0, 0.0, 2.0])


def test_camera_to_earth_inverts_marker_in_camera(rng):
    mount = CameraMount(DOWN_FACING, np.array([0.05, 0.0, -0.02]))
    x = level_state(rng.normal(size=3))
    x[6:9] = rng.uniform(-0.3, 0.3, 3)
    marker = rng.normal(size=3)
    point = marker_in_camera(x, marker, mount)
    np.testing.assert_allclose(x[:3] + camera_to_earth(x, mount, point), marker, atol=1e-12)


def test_earth_to_camera_is_batched(rng):
    states = np.zeros((5, 12))
    states[:, 6:9] = rng.uniform(-0.5, 0.5, (5, 3))
    rots = earth_to_camera(states, CameraMount())
    assert rots.shape == (5, 3, 3)
    np.testing.assert_allclose(rots[2], earth_to_camera(states[2], CameraMount()))


def test_level_rotation_removes_heading():
    yaw = 0.7
    forward = euler_to_rotation(np.array([0.0, 0.0, yaw])) @ np.array([1.0, 0.0, 0.0])
    np.testing.assert_allclose(level_rotation(yaw) @ forward, [1.0, 0.0, 0.0], atol=1e-12)
