"""
Physical-sensor channel y_t = h(x_t) + v_t

GPS position/velocity, IMU attitude and gyro rates, plus the GPS fix
the ground vehicle reports for its own marker (target beacon).
"""

from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from vehicle.dynamics import STATE_DIM

MEASUREMENT_DIM = STATE_DIM
BEACON_DIM = 3


@dataclass(frozen=True)
class SensorNoiseParams:
    """
    Per-channel standard deviations

    The same layout describes the process noise w_t. `extra` holds the
    deviations of channels appended by a custom MeasurementModel.
    """

    position: float = 0.05
    velocity: float = 0.05
    attitude: float = 0.005
    rate: float = 0.005
    extra: Sequence[float] = field(default_factory=tuple)

    def __post_init__(self):
        object.__setattr__(self, "extra", tuple(float(v) for v in self.extra))
        for name in ("position", "velocity", "attitude", "rate"):
            value = getattr(self, name)
            if not np.isfinite(value) or value < 0:
                raise ValueError(f"noise std '{name}' must be finite and non-negative, got {value}")
        if any((not np.isfinite(v)) or v < 0 for v in self.extra):
            raise ValueError(f"extra noise stds must be finite and non-negative, got {self.extra}")

    def std_vector(self) -> np.ndarray:
        base = np.repeat([self.position, self.velocity, self.attitude, self.rate], 3)
        return np.concatenate([base, np.asarray(self.extra, dtype=float)])

    def covariance(self) -> np.ndarray:
        return np.diag(self.std_vector() ** 2)

    def is_strictly_positive(self) -> bool:
        return bool(np.all(self.std_vector() > 0))


def _identity(x: np.ndarray) -> np.ndarray:
    return np.array(x, dtype=float, copy=True)


def _identity_jacobian(x: np.ndarray) -> np.ndarray:
    return np.eye(np.shape(x)[-1])


@dataclass(frozen=True)
class MeasurementModel:
    """
    Measurement function h with an optional analytic Jacobian

    fn must accept (..., 12) states. When jacobian is None the estimator
    differentiates fn numerically.
    """

    fn: Callable[[np.ndarray], np.ndarray]
    dim: int
    jacobian: Optional[Callable[[np.ndarray], np.ndarray]] = None
    name: str = "custom"

    def __call__(self, x: np.ndarray) -> np.ndarray:
        return self.fn(x)


IDENTITY_MODEL = MeasurementModel(fn=_identity, dim=MEASUREMENT_DIM, jacobian=_identity_jacobian, name="identity")


def h(x: np.ndarray, model: MeasurementModel = IDENTITY_MODEL) -> np.ndarray:
    """Noise-free measurement of state x"""
    return model(np.asarray(x, dtype=float))


def measure(x: np.ndarray, noise: SensorNoiseParams, rng: np.random.Generator,
            model: MeasurementModel = IDENTITY_MODEL) -> np.ndarray:
    """
    Noisy measurement h(x) + v

    Always draws model.dim standard normals, so the rng stream advances the
    same way whatever the configured deviations are.
    """
    clean = h(x, model)
    stds = noise.std_vector()
    if stds.shape[0] != model.dim:
        raise ValueError(f"noise has {stds.shape[0]} channels but measurement model '{model.name}' has {model.dim}")
    return clean + rng.standard_normal(model.dim) * stds


@dataclass(frozen=True)
class TargetBeacon:
    """GPS fix of the marker reported by the ground vehicle"""

    enabled: bool = True
    sigma: float = 0.15

    def __post_init__(self):
        if not np.isfinite(self.sigma) or self.sigma <= 0:
            raise ValueError(f"beacon.sigma must be strictly positive, got {self.sigma}")

    def measure(self, marker_earth: np.ndarray, rng: np.random.Generator) -> Optional[np.ndarray]:
        if not self.enabled:
            return None
        return np.asarray(marker_earth, dtype=float) + self.sigma * rng.standard_normal(BEACON_DIM)

    def covariance(self) -> np.ndarray:
        return np.eye(BEACON_DIM) * self.sigma ** 2
