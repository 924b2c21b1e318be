"""
Quadcopter rigid-body model

Newton-Euler dynamics driven by four rotors in a plus layout, the rotor
mixer and its inverse, and an RK4 stepper x_{t+1} = f(x_t, u_t) + w_t.
State layout is [p, v, euler, omega] (see utils.frames).
"""

from dataclasses import dataclass, field
from typing import Optional, Tuple

import numpy as np

from utils.errors import ActuatorSaturationError, GimbalLockError
from utils.frames import ATT, POS, RATE, VEL, euler_rate_matrix, euler_to_rotation

STATE_DIM = 12
COMMAND_DIM = 4


@dataclass(frozen=True)
class VehicleParams:
    """Physical parameters of the airframe"""

    mass: float = 1.5
    inertia: np.ndarray = field(default_factory=lambda: np.array([0.02, 0.02, 0.04]))
    arm_length: float = 0.25
    thrust_coeff: float = 1e-5
    drag_coeff: float = 1e-7
    gravity: float = 9.81
    max_rotor_speed_sq: float = 1.5e6
    max_pitch: float = 1.4

    def __post_init__(self):
        inertia = np.asarray(self.inertia, dtype=float)
        object.__setattr__(self, "inertia", inertia)
        if inertia.shape != (3,):
            raise ValueError(f"inertia must hold the three diagonal terms, got shape {inertia.shape}")
        scalars = {
            "mass": self.mass,
            "arm_length": self.arm_length,
            "thrust_coeff": self.thrust_coeff,
            "drag_coeff": self.drag_coeff,
            "gravity": self.gravity,
            "max_rotor_speed_sq": self.max_rotor_speed_sq,
            "max_pitch": self.max_pitch,
        }
        for name, value in scalars.items():
            if not np.isfinite(value) or value <= 0:
                raise ValueError(f"vehicle.{name} must be strictly positive, got {value}")
        if np.any(inertia <= 0):
            raise ValueError("vehicle.inertia entries must be strictly positive")
        if self.max_pitch >= np.pi / 2:
            raise ValueError("vehicle.max_pitch must stay below pi/2")

    @property
    def mixer_matrix(self) -> np.ndarray:
        b, d, arm = self.thrust_coeff, self.drag_coeff, self.arm_length
        return np.array([
            [b, b, b, b],
            [0.0, -b * arm, 0.0, b * arm],
            [-b * arm, 0.0, b * arm, 0.0],
            [d, -d, d, -d],
        ])

    @property
    def weight(self) -> float:
        return self.mass * self.gravity


@dataclass(frozen=True)
class WrenchBody:
    """Collective thrust along body z and body torques"""

    thrust: float
    torque: np.ndarray

    def as_vector(self) -> np.ndarray:
        return np.concatenate([[self.thrust], np.asarray(self.torque, dtype=float)])

    @classmethod
    def from_vector(cls, vector: np.ndarray) -> "WrenchBody":
        vector = np.asarray(vector, dtype=float)
        return cls(float(vector[0]), vector[1:4].copy())


def mixer(u: np.ndarray, params: VehicleParams) -> WrenchBody:
    """
    Body wrench produced by squared rotor speeds

    Args:
        u: [w1^2, w2^2, w3^2, w4^2]
        params: vehicle parameters

    Returns:
        WrenchBody
    """
    u = np.asarray(u, dtype=float)
    if np.any(u < 0):
        raise ValueError(f"rotor command components must be non-negative, got {u}")
    return WrenchBody.from_vector(params.mixer_matrix @ u)


def inverse_mixer(wrench: WrenchBody, params: VehicleParams, strict: bool = False) -> Tuple[np.ndarray, bool]:
    """
    Squared rotor speeds realising a body wrench

    Args:
        wrench: desired thrust and torques
        params: vehicle parameters
        strict: raise ActuatorSaturationError instead of returning a clamped command

    Returns:
        (command clamped to [0, w2_max], saturated flag)
    """
    raw = np.linalg.solve(params.mixer_matrix, wrench.as_vector())
    clamped = np.clip(raw, 0.0, params.max_rotor_speed_sq)
    saturated = bool(np.any(clamped != raw))
    if saturated and strict:
        raise ActuatorSaturationError(f"wrench needs rotor command {raw} outside [0, {params.max_rotor_speed_sq}]", clamped=clamped)
    return clamped, saturated


def hover_command(params: VehicleParams) -> np.ndarray:
    """Equal rotor command balancing gravity"""
    return np.full(COMMAND_DIM, params.weight / (4.0 * params.thrust_coeff))


def _check_gimbal(x: np.ndarray, params: VehicleParams) -> None:
    pitch = x[..., ATT][..., 1]
    if not np.all(np.abs(pitch) <= params.max_pitch):
        worst = float(np.max(np.abs(pitch))) if np.all(np.isfinite(pitch)) else float("nan")
        raise GimbalLockError(worst, params.max_pitch)


def continuous_derivative(x: np.ndarray, u: np.ndarray, params: VehicleParams) -> np.ndarray:
    """
    Time derivative of the state under rotor command u

    p' = v
    m v' = R f_B - m g e3
    euler' = W(euler) omega
    omega' = I^-1 (tau - omega x I omega)

    Accepts (..., 12) states; u may be (4,) or (..., 4).
    """
    x = np.asarray(x, dtype=float)
    _check_gimbal(x, params)
    wrench = np.einsum("ij,...j->...i", params.mixer_matrix, np.asarray(u, dtype=float))
    thrust, torque = wrench[..., 0], wrench[..., 1:]

    euler = x[..., ATT]
    omega = x[..., RATE]
    body_z = euler_to_rotation(euler)[..., :, 2]

    accel = body_z * (thrust / params.mass)[..., None]
    accel[..., 2] -= params.gravity

    euler_dot = np.einsum("...ij,...j->...i", euler_rate_matrix(euler), omega)

    inertia = params.inertia
    gyro = np.cross(omega, inertia * omega)
    omega_dot = (torque - gyro) / inertia

    return np.concatenate([x[..., VEL], accel, euler_dot, omega_dot], axis=-1)


def step(x: np.ndarray, u: np.ndarray, dt: float, params: VehicleParams, w: Optional[np.ndarray] = None) -> np.ndarray:
    """
    One RK4 step of the continuous model plus additive process noise

    Args:
        x: state (or stack of states)
        u: rotor command held over the step
        dt: step length in seconds
        params: vehicle parameters
        w: process-noise sample added after integration

    Returns:
        next state
    """
    if dt <= 0:
        raise ValueError(f"dt must be positive, got {dt}")
    x = np.asarray(x, dtype=float)
    k1 = continuous_derivative(x, u, params)
    k2 = continuous_derivative(x + 0.5 * dt * k1, u, params)
    k3 = continuous_derivative(x + 0.5 * dt * k2, u, params)
    k4 = continuous_derivative(x + dt * k3, u, params)
    nxt = x + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
    if w is not None:
        nxt = nxt + w
    return nxt


def continuous_jacobian(x: np.ndarray, u: np.ndarray, params: VehicleParams) -> np.ndarray:
    """Analytic d(continuous_derivative)/dx at a single state"""
    x = np.asarray(x, dtype=float)
    thrust = float(params.mixer_matrix[0] @ np.asarray(u, dtype=float))
    phi, theta, psi = x[ATT]
    p, q, r = x[RATE]
    cphi, sphi = np.cos(phi), np.sin(phi)
    cth, sth, tth = np.cos(theta), np.sin(theta), np.tan(theta)
    cpsi, spsi = np.cos(psi), np.sin(psi)
    ix, iy, iz = params.inertia

    jac = np.zeros((STATE_DIM, STATE_DIM))
    jac[POS, VEL] = np.eye(3)

    scale = thrust / params.mass
    jac[VEL, 6] = scale * np.array([-cpsi * sth * sphi + spsi * cphi, -spsi * sth * sphi - cpsi * cphi, -cth * sphi])
    jac[VEL, 7] = scale * np.array([cpsi * cth * cphi, spsi * cth * cphi, -sth * cphi])
    jac[VEL, 8] = scale * np.array([-spsi * sth * cphi + cpsi * sphi, cpsi * sth * cphi + spsi * sphi, 0.0])

    lateral = q * sphi + r * cphi
    lateral_dphi = q * cphi - r * sphi
    jac[6, 6] = lateral_dphi * tth
    jac[6, 7] = lateral / cth ** 2
    jac[7, 6] = -lateral
    jac[8, 6] = lateral_dphi / cth
    jac[8, 7] = lateral * sth / cth ** 2
    jac[ATT, RATE] = euler_rate_matrix(x[ATT])

    jac[9, 10] = -r * (iz - iy) / ix
    jac[9, 11] = -q * (iz - iy) / ix
    jac[10, 9] = -r * (ix - iz) / iy
    jac[10, 11] = -p * (ix - iz) / iy
    jac[11, 9] = -q * (iy - ix) / iz
    jac[11, 10] = -p * (iy - ix) / iz
    return jac


def step_jacobian(x: np.ndarray, u: np.ndarray, dt: float, params: VehicleParams) -> np.ndarray:
    """Exact Jacobian of the noiseless RK4 step, by the chain rule through each stage"""
    x = np.asarray(x, dtype=float)
    eye = np.eye(STATE_DIM)
    k1 = continuous_derivative(x, u, params)
    x2 = x + 0.5 * dt * k1
    k2 = continuous_derivative(x2, u, params)
    x3 = x + 0.5 * dt * k2
    k3 = continuous_derivative(x3, u, params)
    x4 = x + dt * k3

    dk1 = continuous_jacobian(x, u, params)
    dk2 = continuous_jacobian(x2, u, params) @ (eye + 0.5 * dt * dk1)
    dk3 = continuous_jacobian(x3, u, params) @ (eye + 0.5 * dt * dk2)
    dk4 = continuous_jacobian(x4, u, params) @ (eye + dt * dk3)
    return eye + (dt / 6.0) * (dk1 + 2.0 * dk2 + 2.0 * dk3 + dk4)


def level_state(position=(0.0, 0.0, 0.0), velocity=(0.0, 0.0, 0.0), yaw: float = 0.0) -> np.ndarray:
    """Level state at a given position, velocity and heading"""
    x = np.zeros(STATE_DIM)
    x[POS] = position
    x[VEL] = velocity
    x[8] = yaw
    return x
