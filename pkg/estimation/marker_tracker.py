"""
Earth-frame marker tracking and the vision consistency residual
"""

from typing import Optional

import numpy as np
from scipy import linalg

from config import get_logger
from estimation.ekf import BeliefState, ResidualRecord, numeric_jacobian
from perception.camera import CameraModel, VisionNoiseParams, relative_position_covariance
from utils.frames import POS, camera_to_earth, earth_to_camera

logger = get_logger("drone_fdi.estimation.tracker")


class MarkerTracker:
    """
    Constant-velocity Kalman filter of the marker's earth position

    State is [position, velocity]. Between fixes the filter coasts on its
    velocity estimate, which carries it through frames without the marker.
    """

    def __init__(self, dt: float, accel_sigma: float = 1.0, initial_velocity_sigma: float = 2.0):
        self.dt = dt
        self.accel_sigma = accel_sigma
        self.initial_velocity_sigma = initial_velocity_sigma
        self.state = np.zeros(6)
        self.cov = np.eye(6)
        self.initialized = False
        self.steps_since_fix = 0

        transition = np.eye(6)
        transition[:3, 3:] = np.eye(3) * dt
        self._transition = transition
        g = np.array([0.5 * dt ** 2, dt])
        block = np.outer(g, g) * accel_sigma ** 2
        self._process_cov = np.kron(block, np.eye(3))

    @property
    def position(self) -> np.ndarray:
        return self.state[:3].copy()

    @property
    def velocity(self) -> np.ndarray:
        return self.state[3:].copy()

    def reset(self) -> None:
        self.state = np.zeros(6)
        self.cov = np.eye(6)
        self.initialized = False
        self.steps_since_fix = 0

    def predict(self) -> None:
        if not self.initialized:
            return
        self.state = self._transition @ self.state
        self.cov = self._transition @ self.cov @ self._transition.T + self._process_cov
        self.steps_since_fix += 1

    def update(self, fix: np.ndarray, fix_cov: np.ndarray) -> None:
        fix = np.asarray(fix, dtype=float)
        if not self.initialized:
            self.state = np.concatenate([fix, np.zeros(3)])
            self.cov = linalg.block_diag(fix_cov, np.eye(3) * self.initial_velocity_sigma ** 2)
            self.initialized = True
            self.steps_since_fix = 0
            return
        observe = np.hstack([np.eye(3), np.zeros((3, 3))])
        innovation_cov = observe @ self.cov @ observe.T + fix_cov
        gain = linalg.solve(innovation_cov, observe @ self.cov, assume_a="pos").T
        self.state = self.state + gain @ (fix - observe @ self.state)
        keep = np.eye(6) - gain @ observe
        self.cov = keep @ self.cov @ keep.T + gain @ fix_cov @ gain.T
        self.steps_since_fix = 0

    def step(self, fix: Optional[np.ndarray], fix_cov: Optional[np.ndarray] = None) -> None:
        """Coast one step, then fold in the fix when there is one"""
        self.predict()
        if fix is not None:
            self.update(fix, fix_cov if fix_cov is not None else np.eye(3) * 1e-2)


def marker_fix(belief: BeliefState, relative: np.ndarray, camera: CameraModel, side_length: float,
               noise: VisionNoiseParams):
    """Earth-frame marker position and covariance implied by a vision estimate"""
    mean = belief.mean
    fix = mean[POS] + camera_to_earth(mean, camera.mount, relative)
    rotation = earth_to_camera(mean, camera.mount)
    cov_cam = relative_position_covariance(relative, camera, side_length, noise)
    return fix, rotation.T @ cov_cam @ rotation


def vision_residual(belief: BeliefState, relative: np.ndarray, beacon: np.ndarray, camera: CameraModel,
                    side_length: float, noise: VisionNoiseParams, beacon_cov: np.ndarray,
                    epsilon: float = 1e-6) -> ResidualRecord:
    """
    Disagreement between where vision puts the marker and where its beacon says it is

    r = p + R_E^C(x)^T P^C - beacon
    S = J P J^T + R^T R_cam R + R_beacon, J = dr/dx
    """
    relative = np.asarray(relative, dtype=float)

    def locate(x: np.ndarray) -> np.ndarray:
        return x[..., POS] + camera_to_earth(x, camera.mount, relative)

    fix, fix_cov = marker_fix(belief, relative, camera, side_length, noise)
    residual = fix - np.asarray(beacon, dtype=float)
    jac = numeric_jacobian(locate, belief.mean, epsilon)
    cov = jac @ belief.cov @ jac.T + fix_cov + beacon_cov
    return ResidualRecord(residual, 0.5 * (cov + cov.T), belief.step)


def stack_residuals(*records: ResidualRecord) -> ResidualRecord:
    """Concatenate independent residuals with a block-diagonal covariance"""
    residual = np.concatenate([r.residual for r in records])
    cov = linalg.block_diag(*[r.covariance for r in records])
    return ResidualRecord(residual, cov, records[0].step)
