"""
Rotation and frame utilities for Drone FDI Lab

Conventions:
    - earth frame is z-up; body frame x forward
    - Euler angles are Z-Y-X (yaw, pitch, roll) and map body -> earth
    - angles are radians everywhere

Every function accepts arrays with leading batch axes, so a stack of
states (..., 12) gives a stack of matrices (..., 3, 3).
"""

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

# Slices into the 12-dim state [p, v, euler, omega]
POS = slice(0, 3)
VEL = slice(3, 6)
ATT = slice(6, 9)
RATE = slice(9, 12)

DOWN_FACING = np.array([[1.0, 0.0, 0.0], [0.0, -1.0, 0.0], [0.0, 0.0, -1.0]])


@dataclass(frozen=True)
class CameraMount:
    """Fixed body -> camera rotation and body-frame lever arm of the camera"""

    rotation: np.ndarray = field(default_factory=lambda: DOWN_FACING.copy())
    offset: np.ndarray = field(default_factory=lambda: np.zeros(3))

    def __post_init__(self):
        rotation = np.asarray(self.rotation, dtype=float)
        offset = np.asarray(self.offset, dtype=float)
        if rotation.shape != (3, 3):
            raise ValueError(f"mount rotation must be 3x3, got {rotation.shape}")
        if not np.allclose(rotation.T @ rotation, np.eye(3), atol=1e-9) or not np.isclose(np.linalg.det(rotation), 1.0, atol=1e-9):
            raise ValueError("mount rotation must be orthonormal with det 1")
        if offset.shape != (3,) or not np.all(np.isfinite(offset)):
            raise ValueError("mount offset must be a finite 3-vector")
        object.__setattr__(self, "rotation", rotation)
        object.__setattr__(self, "offset", offset)

    @classmethod
    def from_config(cls, rotation: Sequence[Sequence[float]], offset: Sequence[float]) -> "CameraMount":
        return cls(np.array(rotation, dtype=float), np.array(offset, dtype=float))


def hat(v: np.ndarray) -> np.ndarray:
    """
    Skew-symmetric matrix such that hat(v) @ w == cross(v, w)

    Args:
        v: (..., 3) vector

    Returns:
        (..., 3, 3) matrix
    """
    v = np.asarray(v, dtype=float)
    zero = np.zeros(v.shape[:-1])
    x, y, z = v[..., 0], v[..., 1], v[..., 2]
    return np.stack([
        np.stack([zero, -z, y], axis=-1),
        np.stack([z, zero, -x], axis=-1),
        np.stack([-y, x, zero], axis=-1),
    ], axis=-2)


def euler_to_rotation(euler: np.ndarray) -> np.ndarray:
    """
    Body -> earth rotation R = Rz(yaw) Ry(pitch) Rx(roll)

    Args:
        euler: (..., 3) roll, pitch, yaw

    Returns:
        (..., 3, 3) rotation matrix
    """
    euler = np.asarray(euler, dtype=float)
    cphi, sphi = np.cos(euler[..., 0]), np.sin(euler[..., 0])
    cth, sth = np.cos(euler[..., 1]), np.sin(euler[..., 1])
    cpsi, spsi = np.cos(euler[..., 2]), np.sin(euler[..., 2])
    return np.stack([
        np.stack([cpsi * cth, cpsi * sth * sphi - spsi * cphi, cpsi * sth * cphi + spsi * sphi], axis=-1),
        np.stack([spsi * cth, spsi * sth * sphi + cpsi * cphi, spsi * sth * cphi - cpsi * sphi], axis=-1),
        np.stack([-sth, cth * sphi, cth * cphi], axis=-1),
    ], axis=-2)


def rotation_to_euler(rotation: np.ndarray) -> np.ndarray:
    """Inverse of euler_to_rotation for |pitch| < pi/2"""
    rotation = np.asarray(rotation, dtype=float)
    pitch = -np.arcsin(np.clip(rotation[..., 2, 0], -1.0, 1.0))
    roll = np.arctan2(rotation[..., 2, 1], rotation[..., 2, 2])
    yaw = np.arctan2(rotation[..., 1, 0], rotation[..., 0, 0])
    return np.stack([roll, pitch, yaw], axis=-1)


def euler_rate_matrix(euler: np.ndarray) -> np.ndarray:
    """
    Map from body rates [p, q, r] to Euler angle rates

    Singular at pitch = +-pi/2; callers keep pitch inside the gimbal-safe envelope.
    """
    euler = np.asarray(euler, dtype=float)
    cphi, sphi = np.cos(euler[..., 0]), np.sin(euler[..., 0])
    cth, tth = np.cos(euler[..., 1]), np.tan(euler[..., 1])
    one = np.ones_like(cphi)
    zero = np.zeros_like(cphi)
    return np.stack([
        np.stack([one, sphi * tth, cphi * tth], axis=-1),
        np.stack([zero, cphi, -sphi], axis=-1),
        np.stack([zero, sphi / cth, cphi / cth], axis=-1),
    ], axis=-2)


def earth_to_camera(state: np.ndarray, mount: CameraMount) -> np.ndarray:
    """Rotation from the earth frame to the camera frame for a 12-dim state"""
    body_to_earth = euler_to_rotation(np.asarray(state, dtype=float)[..., ATT])
    return mount.rotation @ np.swapaxes(body_to_earth, -1, -2)


def marker_in_camera(state: np.ndarray, marker_earth: np.ndarray, mount: CameraMount) -> np.ndarray:
    """
    Camera-frame position of an earth-frame point seen from the vehicle

    P^C = R_E^C(x) (P^E - p) - R_mount offset
    """
    state = np.asarray(state, dtype=float)
    relative = np.asarray(marker_earth, dtype=float) - state[..., POS]
    camera = np.einsum("...ij,...j->...i", earth_to_camera(state, mount), relative)
    return camera - mount.rotation @ mount.offset


def camera_to_earth(state: np.ndarray, mount: CameraMount, point_camera: np.ndarray) -> np.ndarray:
    """
    Inverse of marker_in_camera without the vehicle position

    Returns the earth-frame offset P^E - p of a camera-frame point.
    """
    rotation = earth_to_camera(state, mount)
    shifted = np.asarray(point_camera, dtype=float) + mount.rotation @ mount.offset
    return np.einsum("...ji,...j->...i", rotation, shifted)


def level_rotation(yaw: float) -> np.ndarray:
    """Earth -> heading frame rotation about z (roll and pitch removed)"""
    c, s = np.cos(yaw), np.sin(yaw)
    return np.array([[c, s, 0.0], [-s, c, 0.0], [0.0, 0.0, 1.0]])
