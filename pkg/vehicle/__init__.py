"""
Vehicle package: quadcopter dynamics and the physical sensor channel
"""

from .dynamics import (
    STATE_DIM,
    COMMAND_DIM,
    VehicleParams,
    WrenchBody,
    mixer,
    inverse_mixer,
    hover_command,
    continuous_derivative,
    continuous_jacobian,
    step,
    step_jacobian,
    level_state,
)
from .sensing import (
    MEASUREMENT_DIM,
    IDENTITY_MODEL,
    MeasurementModel,
    SensorNoiseParams,
    TargetBeacon,
    h,
    measure,
)
