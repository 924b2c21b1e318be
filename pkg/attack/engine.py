"""
Stealthy false-data-injection engine

The attacker sits between the plant and the flight stack. It runs its own
EKF on the true sensor data, keeps a deviation state s_t and rewrites
every sensor measurement and camera frame so they describe a vehicle at
x - s instead of x:

    y_f     = y + h(x_a - s) - h(x_a)
    P^C_f   = R_E^C(x_a - s) (P^E - (p_a - s^p))
    s_{t+1} = f(x_a, u) - f(x_a - s, u)

`image_only` mode leaves the sensors alone and only shows the marker
displaced sideways by a deviation that ramps up to alpha.
"""

from dataclasses import dataclass, field
from typing import Callable, Optional, Tuple

import numpy as np

from config import get_logger
from control.mission import MissionThresholds, acquisition_condition
from estimation.ekf import ExtendedKalmanFilter
from estimation.marker_tracker import MarkerTracker, marker_fix
from perception.camera import (
    CameraModel,
    Frame,
    MarkerObservation,
    VisionNoiseParams,
    detect_marker,
    estimate_relative_position,
    fully_in_view,
    marker_in_camera,
    project,
    projected_side,
    render_marker,
)
from utils.errors import FakeMarkerOutOfViewError, MarkerUnavailableError
from utils.frames import POS, camera_to_earth
from vehicle.dynamics import STATE_DIM
from vehicle.sensing import IDENTITY_MODEL, MeasurementModel, h

logger = get_logger("drone_fdi.attack")

ATTACK_MODES = ("consistent", "image_only")
STOP_RULES = ("marker_out_of_view", "step_limit")


@dataclass(frozen=True)
class AttackConfig:
    enabled: bool = False
    mode: str = "consistent"
    s0: np.ndarray = field(default_factory=lambda: np.eye(STATE_DIM)[6] * 0.01)
    alpha: float = 3.0
    stop_rule: str = "marker_out_of_view"
    max_steps: int = 100000
    # None arms the attack automatically when the marker is acquired at cruise altitude
    start_step: Optional[int] = None
    max_blind_steps: int = 25
    ramp_steps: int = 50
    image_only_direction: np.ndarray = field(default_factory=lambda: np.array([0.0, 1.0, 0.0]))

    def __post_init__(self):
        s0 = np.asarray(self.s0, dtype=float)
        direction = np.asarray(self.image_only_direction, dtype=float)
        object.__setattr__(self, "s0", s0)
        object.__setattr__(self, "image_only_direction", direction)
        if self.mode not in ATTACK_MODES:
            raise ValueError(f"attack.mode must be one of {ATTACK_MODES}, got {self.mode!r}")
        if self.stop_rule not in STOP_RULES:
            raise ValueError(f"attack.stop_rule must be one of {STOP_RULES}, got {self.stop_rule!r}")
        if s0.shape != (STATE_DIM,) or not np.all(np.isfinite(s0)):
            raise ValueError(f"attack.s0 must be a finite {STATE_DIM}-vector")
        if self.alpha <= 0:
            raise ValueError(f"attack.alpha must be positive, got {self.alpha}")
        if self.max_steps < 1 or self.max_blind_steps < 0 or self.ramp_steps < 1:
            raise ValueError("attack step limits must be positive")
        if self.start_step is not None and self.start_step < 0:
            raise ValueError("attack.start_step must be non-negative")
        if direction.shape != (3,) or not np.linalg.norm(direction) > 0:
            raise ValueError("attack.image_only_direction must be a non-zero 3-vector")


@dataclass
class AttackState:
    s: np.ndarray = field(default_factory=lambda: np.zeros(STATE_DIM))
    start_step: Optional[int] = None
    active: bool = False
    stopped: bool = False
    stop_step: Optional[int] = None
    stop_reason: Optional[str] = None

    @property
    def position_deviation(self) -> np.ndarray:
        return self.s[POS]


@dataclass(frozen=True)
class FakeMarker:
    point_camera: np.ndarray
    observation: MarkerObservation

    def frame(self, camera: CameraModel) -> Frame:
        return render_marker(self.observation, camera)


Transition = Callable[[np.ndarray, np.ndarray], np.ndarray]


def propagate_s(s: np.ndarray, estimate: np.ndarray, u: np.ndarray, transition: Transition) -> np.ndarray:
    """s' = f(x_a, u) - f(x_a - s, u)"""
    return transition(estimate, u) - transition(estimate - s, u)


def falsify_sensors(y: np.ndarray, estimate: np.ndarray, s: np.ndarray,
                    model: MeasurementModel = IDENTITY_MODEL) -> np.ndarray:
    """y_f = y + h(x_a - s) - h(x_a)"""
    return np.asarray(y, dtype=float) + h(estimate - s, model) - h(estimate, model)


def estimate_marker_earth(obs: MarkerObservation, estimate: np.ndarray, camera: CameraModel,
                          side_length: float) -> np.ndarray:
    """P^E = p_a + R_E^C(x_a)^T P^C from a real detection"""
    relative = estimate_relative_position(obs, camera, side_length)
    return estimate[POS] + camera_to_earth(estimate, camera.mount, relative)


def _fake_from_point(point: np.ndarray, camera: CameraModel, side_length: float, step: int) -> FakeMarker:
    if not point[2] > 0:
        raise FakeMarkerOutOfViewError(f"fake marker behind the camera (Z={point[2]:.3f}) at step {step}")
    center = project(point, camera)
    side = projected_side(point[2], camera, side_length)
    if not fully_in_view(center, side, camera):
        raise FakeMarkerOutOfViewError(f"fake marker at {center} px (side {side:.1f}) leaves the frame at step {step}")
    return FakeMarker(point, MarkerObservation(center, side, True, step))


def falsify_marker(estimate: np.ndarray, s: np.ndarray, marker_earth: np.ndarray, camera: CameraModel,
                   side_length: float, step: int = 0) -> FakeMarker:
    """
    Marker as seen from the fake state x_a - s

    Raises:
        FakeMarkerOutOfViewError: the fake marker would be behind the camera or outside the frame
    """
    point = marker_in_camera(estimate - s, marker_earth, camera)
    return _fake_from_point(point, camera, side_length, step)


class AttackEngine:
    """
    Message-level attacker shared by the in-process harness and the proxy

    Per step the plant's messages arrive as on_measurement, then on_frame
    (or on_observation), then the flight stack's rotor command arrives as
    on_command.
    """

    def __init__(self, config: AttackConfig, estimator: ExtendedKalmanFilter, tracker: MarkerTracker,
                 camera: CameraModel, side_length: float, vision_noise: VisionNoiseParams,
                 thresholds: MissionThresholds, model: MeasurementModel = IDENTITY_MODEL):
        self.config = config
        self.estimator = estimator
        self.tracker = tracker
        self.camera = camera
        self.side_length = side_length
        self.vision_noise = vision_noise
        self.thresholds = thresholds
        self.model = model
        self.state = AttackState(start_step=config.start_step)
        self.blind_steps = 0
        # marker shown in place of the real one on the latest frame
        self.last_fake: Optional[FakeMarker] = None
        self.logger = logger.getChild("engine")

    @property
    def estimate(self) -> np.ndarray:
        return self.estimator.mean

    @property
    def falsifying(self) -> bool:
        return self.state.active and not self.state.stopped

    def _activate_if_due(self, step: int) -> None:
        st = self.state
        if st.active or st.stopped or st.start_step is None or step < st.start_step:
            return
        st.active = True
        st.s = self.config.s0.copy()
        self.logger.info(f"Attack ({self.config.mode}) started at step {step} with |s0|={np.linalg.norm(st.s):.4g}")

    def stop(self, step: int, reason: str) -> None:
        if self.state.stopped:
            return
        self.state.stopped = True
        self.state.stop_step = step
        self.state.stop_reason = reason
        self.logger.info(f"Attack stopped at step {step}: {reason}")

    def _check_step_limit(self, step: int) -> None:
        if (self.config.stop_rule == "step_limit" and self.falsifying
                and step - self.state.start_step >= self.config.max_steps):
            self.stop(step, "step_limit")

    def on_measurement(self, step: int, y: np.ndarray) -> np.ndarray:
        """Fold the true measurement into the attacker's EKF and return what the flight stack gets"""
        self.estimator.update(y)
        self._activate_if_due(step)
        self._check_step_limit(step)
        if not self.falsifying or self.config.mode != "consistent" or not np.any(self.state.s):
            return y
        return falsify_sensors(y, self.estimate, self.state.s, self.model)

    def on_frame(self, step: int, frame: Frame) -> Frame:
        obs = detect_marker(frame, self.camera)
        fake = self.on_observation(step, obs)
        if fake is obs:
            return frame
        return render_marker(fake, self.camera)

    def on_observation(self, step: int, obs: MarkerObservation) -> MarkerObservation:
        """Update the marker estimate from the real detection and return the observation to forward"""
        self.last_fake = None
        belief = self.estimator.belief
        if obs.visible:
            relative = estimate_relative_position(obs, self.camera, self.side_length)
            fix, fix_cov = marker_fix(belief, relative, self.camera, self.side_length, self.vision_noise)
            self.tracker.step(fix, fix_cov)
            self.blind_steps = 0
        else:
            self.tracker.step(None)
            self.blind_steps += 1

        st = self.state
        if st.start_step is None and acquisition_condition(obs.visible, self.estimate[2], self.thresholds):
            st.start_step = step + 1
            self.logger.info(f"Marker acquired at step {step}; attack armed for step {st.start_step}")

        self._activate_if_due(step)
        if not self.falsifying:
            return obs
        # zero deviation: nothing to hide, nothing to stop
        if self.config.mode == "consistent" and not np.any(self.state.s):
            return obs

        if self.config.stop_rule == "marker_out_of_view" and self.blind_steps > self.config.max_blind_steps:
            self.stop(step, "marker_lost")
            return obs
        if not self.tracker.initialized:
            self.stop(step, "marker_unavailable")
            return obs

        try:
            fake = self._fake_marker(step)
        except MarkerUnavailableError:
            self.stop(step, "marker_unavailable")
            return obs
        except FakeMarkerOutOfViewError as e:
            self.logger.debug(str(e))
            self.stop(step, "fake_marker_out_of_view")
            return obs
        if fake is None:
            return obs
        self.last_fake = fake
        return fake.observation

    def _fake_marker(self, step: int) -> Optional[FakeMarker]:
        if not self.tracker.initialized:
            raise MarkerUnavailableError("attacker has no marker estimate")
        marker = self.tracker.position
        if self.config.mode == "consistent":
            if not np.any(self.state.s):
                return None
            return falsify_marker(self.estimate, self.state.s, marker, self.camera, self.side_length, step)

        ramp = min(1.0, (step - self.state.start_step + 1) / self.config.ramp_steps)
        direction = self.config.image_only_direction / np.linalg.norm(self.config.image_only_direction)
        shown = marker + self.config.alpha * ramp * direction
        point = marker_in_camera(self.estimate, shown, self.camera)
        return _fake_from_point(point, self.camera, self.side_length, step)

    def on_command(self, step: int, u: np.ndarray) -> None:
        """Advance s with the actual rotor command, then predict the attacker's EKF"""
        if self.falsifying and self.config.mode == "consistent" and np.any(self.state.s):
            self.state.s = propagate_s(self.state.s, self.estimate, u, self.estimator.transition)
        self.estimator.predict(u)

    def attack_step(self, step: int, y: np.ndarray, frame: Frame, u: np.ndarray) -> Tuple[np.ndarray, Frame]:
        """Measurement, frame and command of one step in a single call"""
        y_f = self.on_measurement(step, y)
        frame_f = self.on_frame(step, frame)
        self.on_command(step, u)
        return y_f, frame_f
