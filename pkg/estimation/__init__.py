"""
Estimation package: EKF sensor fusion and marker tracking
"""

from .ekf import (
    BeliefState,
    ExtendedKalmanFilter,
    ResidualRecord,
    ekf_predict,
    ekf_update,
    numeric_jacobian,
)
from .marker_tracker import MarkerTracker, marker_fix, stack_residuals, vision_residual
