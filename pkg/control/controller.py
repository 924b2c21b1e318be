"""
Cascade PID controller

position -> velocity setpoint -> acceleration -> tilt and thrust ->
body-rate setpoint -> torques -> inverse mixer -> rotor command
"""

from dataclasses import dataclass, field
from typing import Optional, Tuple

import numpy as np

from config import get_logger
from control.mission import MissionPhase, MissionThresholds
from utils.frames import ATT, POS, RATE, VEL, CameraMount, camera_to_earth, euler_to_rotation, level_rotation
from vehicle.dynamics import VehicleParams, WrenchBody, inverse_mixer

logger = get_logger("drone_fdi.control")


def _vector3(value) -> np.ndarray:
    arr = np.broadcast_to(np.asarray(value, dtype=float), (3,)).copy()
    return arr


@dataclass(frozen=True)
class LoopGains:
    """PID gains and limits of one cascade loop (per axis)"""

    kp: np.ndarray
    ki: np.ndarray = field(default_factory=lambda: np.zeros(3))
    kd: np.ndarray = field(default_factory=lambda: np.zeros(3))
    limit: np.ndarray = field(default_factory=lambda: np.full(3, np.inf))
    integrator_limit: float = 1.0

    def __post_init__(self):
        for name in ("kp", "ki", "kd", "limit"):
            object.__setattr__(self, name, _vector3(getattr(self, name)))
        if np.any(self.kp < 0) or np.any(self.ki < 0) or np.any(self.kd < 0):
            raise ValueError("controller gains must be non-negative")
        if np.any(self.limit <= 0) or self.integrator_limit <= 0:
            raise ValueError("controller limits must be strictly positive")

    @classmethod
    def from_dict(cls, data: dict) -> "LoopGains":
        return cls(
            kp=data["kp"],
            ki=data.get("ki", 0.0),
            kd=data.get("kd", 0.0),
            limit=data.get("limit", np.inf),
            integrator_limit=data.get("integrator_limit", 1.0),
        )


@dataclass(frozen=True)
class PidGains:
    position: LoopGains
    velocity: LoopGains
    attitude: LoopGains
    rate: LoopGains

    @classmethod
    def from_dict(cls, data: dict) -> "PidGains":
        return cls(**{name: LoopGains.from_dict(data[name]) for name in ("position", "velocity", "attitude", "rate")})


class PidLoop:
    """Vector PID with a clamped integrator and a clamped output"""

    def __init__(self, gains: LoopGains, dt: float):
        self.gains = gains
        self.dt = dt
        self.reset()

    def reset(self) -> None:
        self.integral = np.zeros(3)
        self.previous_error: Optional[np.ndarray] = None

    def update(self, error: np.ndarray, feed_forward: Optional[np.ndarray] = None) -> np.ndarray:
        g = self.gains
        self.integral = np.clip(self.integral + error * self.dt, -g.integrator_limit, g.integrator_limit)
        derivative = np.zeros(3) if self.previous_error is None else (error - self.previous_error) / self.dt
        self.previous_error = error.copy()
        output = g.kp * error + g.ki * self.integral + g.kd * derivative
        if feed_forward is not None:
            output = output + feed_forward
        return np.clip(output, -g.limit, g.limit)


def _wrap(angle):
    return (angle + np.pi) % (2.0 * np.pi) - np.pi


class CascadeController:
    """
    Marker-relative position controller for both missions

    The target is the marker's earth position p + R_E^C(x)^T P^C while the
    marker is visible. During a short loss the caller may pass the marker
    tracker's coasted position and velocity instead; without one the last
    target is held with zero velocity feed-forward.
    """

    def __init__(self, params: VehicleParams, gains: PidGains, thresholds: MissionThresholds,
                 mount: CameraMount, dt: float, max_tilt: float = 0.35, yaw_setpoint: float = 0.0):
        self.params = params
        self.gains = gains
        self.thresholds = thresholds
        self.mount = mount
        self.dt = dt
        self.max_tilt = max_tilt
        self.yaw_setpoint = yaw_setpoint
        self.position_loop = PidLoop(gains.position, dt)
        self.velocity_loop = PidLoop(gains.velocity, dt)
        self.attitude_loop = PidLoop(gains.attitude, dt)
        self.rate_loop = PidLoop(gains.rate, dt)
        self.logger = logger.getChild("cascade")
        self.reset()

    def reset(self) -> None:
        """Clear integrators and held targets"""
        for loop in (self.position_loop, self.velocity_loop, self.attitude_loop, self.rate_loop):
            loop.reset()
        self.target_xy: Optional[np.ndarray] = None
        self.altitude_ref: Optional[float] = None
        self.last_attitude_setpoint = np.zeros(3)
        self.last_wrench: Optional[WrenchBody] = None
        self.saturation_count = 0

    def _altitude_reference(self, phase: MissionPhase, altitude: float) -> Tuple[float, float]:
        """Altitude setpoint and vertical feed-forward for a phase"""
        t = self.thresholds
        if self.altitude_ref is None:
            self.altitude_ref = altitude
        if phase in (MissionPhase.ASCEND, MissionPhase.TRACK):
            self.altitude_ref = t.cruise_altitude
            return self.altitude_ref, 0.0
        floor = t.approach_altitude if phase == MissionPhase.APPROACH else 0.0
        if self.altitude_ref > floor:
            self.altitude_ref = max(floor, self.altitude_ref - t.descent_rate * self.dt)
            return self.altitude_ref, -t.descent_rate
        return floor, 0.0

    def compute_wrench(self, estimate: np.ndarray, relative: Optional[np.ndarray], phase: MissionPhase,
                       target_velocity: Optional[np.ndarray] = None,
                       coasted_target: Optional[np.ndarray] = None) -> WrenchBody:
        """
        Desired body wrench for the current estimate

        Args:
            estimate: estimated 12-dim state
            relative: estimated camera-frame marker position, None when not visible
            phase: current mission phase
            target_velocity: earth-frame marker velocity feed-forward
            coasted_target: predicted earth-frame marker position, used only when relative is None

        Returns:
            WrenchBody
        """
        position = estimate[POS]
        feed_xy = np.zeros(2)
        if relative is not None:
            self.target_xy = (position + camera_to_earth(estimate, self.mount, relative))[:2]
        elif coasted_target is not None:
            self.target_xy = np.asarray(coasted_target, dtype=float)[:2].copy()
        else:
            target_velocity = None
            if self.target_xy is None:
                self.target_xy = position[:2].copy()
        if target_velocity is not None:
            feed_xy = np.asarray(target_velocity, dtype=float)[:2]

        z_ref, feed_z = self._altitude_reference(phase, position[2])
        reference = np.array([self.target_xy[0], self.target_xy[1], z_ref])
        feed = np.array([feed_xy[0], feed_xy[1], feed_z])

        # Outer loop: position PID plus target feed-forward
        velocity_sp = self.position_loop.update(reference - position, feed)

        # Velocity PID to desired acceleration
        accel = self.velocity_loop.update(velocity_sp - estimate[VEL])

        # Desired force in the heading frame -> tilt and thrust
        force = self.params.mass * (accel + np.array([0.0, 0.0, self.params.gravity]))
        yaw = estimate[ATT][2]
        heading_force = level_rotation(yaw) @ force
        magnitude = float(np.linalg.norm(force))
        roll_sp = np.arcsin(np.clip(-heading_force[1] / magnitude, -1.0, 1.0))
        pitch_sp = np.arctan2(heading_force[0], heading_force[2])
        roll_sp, pitch_sp = np.clip([roll_sp, pitch_sp], -self.max_tilt, self.max_tilt)
        attitude_sp = np.array([roll_sp, pitch_sp, self.yaw_setpoint])
        self.last_attitude_setpoint = attitude_sp

        body_z = euler_to_rotation(estimate[ATT])[:, 2]
        thrust = max(0.0, float(force @ body_z))

        # Attitude loop to body-rate setpoint, rate loop to angular acceleration
        rate_sp = self.attitude_loop.update(_wrap(attitude_sp - estimate[ATT]))
        angular_accel = self.rate_loop.update(rate_sp - estimate[RATE])
        torque = self.params.inertia * angular_accel

        self.last_wrench = WrenchBody(thrust, torque)
        return self.last_wrench

    def compute(self, estimate: np.ndarray, relative: Optional[np.ndarray], phase: MissionPhase,
                target_velocity: Optional[np.ndarray] = None,
                coasted_target: Optional[np.ndarray] = None) -> Tuple[np.ndarray, bool]:
        """Rotor command for the current estimate, with the saturation flag"""
        wrench = self.compute_wrench(estimate, relative, phase, target_velocity, coasted_target)
        command, saturated = inverse_mixer(wrench, self.params, strict=False)
        if saturated:
            self.saturation_count += 1
            self.logger.debug(f"rotor command clamped for wrench {wrench.as_vector()}")
        return command, saturated
