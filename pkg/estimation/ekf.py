"""
Extended Kalman filter for Drone FDI Lab

The same filter runs twice in every attacked simulation: in the flight
stack on (possibly falsified) data, and inside the attacker on true data.
"""

from dataclasses import dataclass
from typing import Callable, Optional, Tuple

import numpy as np
from scipy import linalg

from config import get_logger
from utils.errors import SingularInnovationError
from vehicle.dynamics import VehicleParams, step, step_jacobian
from vehicle.sensing import IDENTITY_MODEL, MeasurementModel

logger = get_logger("drone_fdi.estimation")

Transition = Callable[[np.ndarray, np.ndarray], np.ndarray]


@dataclass(frozen=True)
class BeliefState:
    """Mean and covariance of the state estimate at a step"""

    mean: np.ndarray
    cov: np.ndarray
    step: int = 0

    def __post_init__(self):
        object.__setattr__(self, "mean", np.asarray(self.mean, dtype=float))
        object.__setattr__(self, "cov", np.asarray(self.cov, dtype=float))


@dataclass(frozen=True)
class ResidualRecord:
    """Innovation r = y - h(x_prior) and its covariance S"""

    residual: np.ndarray
    covariance: np.ndarray
    step: int = 0

    @property
    def dim(self) -> int:
        return int(self.residual.shape[0])


def numeric_jacobian(fn: Callable[[np.ndarray], np.ndarray], point: np.ndarray,
                     epsilon: float = 1e-6, vectorized: bool = True) -> np.ndarray:
    """
    Central-difference Jacobian, one column per input coordinate

    Args:
        fn: map to differentiate; with vectorized=True it must accept a
            (2n, n) stack of points and return (2n, m)
        point: (n,) evaluation point
        epsilon: perturbation size
        vectorized: evaluate all perturbations in a single call

    Returns:
        (m, n) matrix
    """
    if epsilon <= 0:
        raise ValueError(f"epsilon must be positive, got {epsilon}")
    point = np.asarray(point, dtype=float)
    n = point.shape[0]
    offsets = np.eye(n) * epsilon
    if vectorized:
        values = np.asarray(fn(np.concatenate([point + offsets, point - offsets])), dtype=float)
        forward, backward = values[:n], values[n:]
    else:
        forward = np.stack([np.asarray(fn(point + offsets[i]), dtype=float) for i in range(n)])
        backward = np.stack([np.asarray(fn(point - offsets[i]), dtype=float) for i in range(n)])
    return ((forward - backward) / (2.0 * epsilon)).T


def _symmetrize(matrix: np.ndarray) -> np.ndarray:
    return 0.5 * (matrix + matrix.T)


def ekf_predict(belief: BeliefState, u: np.ndarray, transition: Transition, process_cov: np.ndarray,
                transition_jacobian: Optional[Callable[[np.ndarray, np.ndarray], np.ndarray]] = None,
                epsilon: float = 1e-6) -> BeliefState:
    """
    Propagate a belief through the noiseless transition

    mean' = f(mean, u); P' = F P F^T + Q with F = df/dx at (mean, u).
    The Jacobian is numeric unless transition_jacobian is given.
    """
    mean = transition(belief.mean, u)
    if transition_jacobian is not None:
        jac = transition_jacobian(belief.mean, u)
    else:
        jac = numeric_jacobian(lambda z: transition(z, u), belief.mean, epsilon)
    cov = _symmetrize(jac @ belief.cov @ jac.T + process_cov)
    return BeliefState(mean, cov, belief.step + 1)


def ekf_update(belief: BeliefState, y: np.ndarray, sensor_cov: np.ndarray,
               model: MeasurementModel = IDENTITY_MODEL, epsilon: float = 1e-6) -> Tuple[BeliefState, ResidualRecord]:
    """
    Correct a belief with a measurement (Joseph-form covariance update)

    Raises:
        SingularInnovationError: S = H P H^T + R is not positive definite
    """
    prior = belief.mean
    predicted = model(prior)
    if model.jacobian is not None:
        jac = model.jacobian(prior)
    else:
        jac = numeric_jacobian(model.fn, prior, epsilon)

    residual = np.asarray(y, dtype=float) - predicted
    innovation_cov = _symmetrize(jac @ belief.cov @ jac.T + sensor_cov)
    try:
        factor = linalg.cho_factor(innovation_cov)
    except linalg.LinAlgError as e:
        raise SingularInnovationError(f"innovation covariance not invertible at step {belief.step}: {e}") from e

    gain = linalg.cho_solve(factor, jac @ belief.cov).T
    mean = prior + gain @ residual
    keep = np.eye(prior.shape[0]) - gain @ jac
    cov = _symmetrize(keep @ belief.cov @ keep.T + gain @ sensor_cov @ gain.T)
    return BeliefState(mean, cov, belief.step), ResidualRecord(residual, innovation_cov, belief.step)


class ExtendedKalmanFilter:
    """
    EKF over the quadcopter model with a configurable measurement model

    predict() and update() delegate to ekf_predict/ekf_update and keep the
    latest belief and residual.
    """

    def __init__(self, params: VehicleParams, dt: float, process_cov: np.ndarray, sensor_cov: np.ndarray,
                 initial: BeliefState, model: MeasurementModel = IDENTITY_MODEL,
                 jacobian: str = "numeric", epsilon: float = 1e-6):
        if jacobian not in ("numeric", "analytic"):
            raise ValueError(f"jacobian must be 'numeric' or 'analytic', got {jacobian!r}")
        self.params = params
        self.dt = dt
        self.process_cov = np.asarray(process_cov, dtype=float)
        self.sensor_cov = np.asarray(sensor_cov, dtype=float)
        self.model = model
        self.jacobian = jacobian
        self.epsilon = epsilon
        self.belief = initial
        self.last_residual: Optional[ResidualRecord] = None

    def transition(self, x: np.ndarray, u: np.ndarray) -> np.ndarray:
        return step(x, u, self.dt, self.params)

    def _transition_jacobian(self, x: np.ndarray, u: np.ndarray) -> np.ndarray:
        return step_jacobian(x, u, self.dt, self.params)

    @property
    def mean(self) -> np.ndarray:
        return self.belief.mean

    def predict(self, u: np.ndarray) -> BeliefState:
        analytic = self._transition_jacobian if self.jacobian == "analytic" else None
        self.belief = ekf_predict(self.belief, u, self.transition, self.process_cov, analytic, self.epsilon)
        return self.belief

    def update(self, y: np.ndarray) -> ResidualRecord:
        self.belief, self.last_residual = ekf_update(self.belief, y, self.sensor_cov, self.model, self.epsilon)
        return self.last_residual
