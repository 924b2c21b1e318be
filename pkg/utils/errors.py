"""
Exception hierarchy for Drone FDI Lab

Recoverable conditions (an invisible marker, a clamped rotor command, an
attack that stopped) are returned as values. The classes below are for
conditions the caller has to handle or abort on.
"""

from typing import Optional


class DroneFdiError(Exception):
    """Base class for all errors raised by this package"""


class ConfigError(DroneFdiError, ValueError):
    """Scenario or calibration configuration is missing or invalid"""


class GimbalLockError(DroneFdiError):
    """Pitch left the gimbal-safe envelope"""

    def __init__(self, pitch: float, limit: float):
        super().__init__(f"pitch {pitch:.4f} rad exceeds gimbal-safe limit {limit:.4f} rad")
        self.pitch = pitch
        self.limit = limit

    def __reduce__(self):
        return (self.__class__, (self.pitch, self.limit))


class ActuatorSaturationError(DroneFdiError):
    """Requested wrench needs rotor speeds outside [0, w2_max]"""

    def __init__(self, message: str, clamped=None):
        super().__init__(message)
        self.clamped = clamped


class BehindCameraError(DroneFdiError):
    """Point has non-positive depth in the camera frame"""


class MarkerNotVisibleError(DroneFdiError):
    """Relative position requested from an observation that is not visible"""


class SingularInnovationError(DroneFdiError):
    """Innovation covariance cannot be inverted"""


class NotPositiveDefiniteError(DroneFdiError):
    """Covariance handed to a detector is not positive definite"""


class TrainingDivergenceError(DroneFdiError):
    """Recurrent detector loss became non-finite"""


class ShortWindowError(DroneFdiError):
    """Residual window too short to score"""


class ShapeMismatchError(DroneFdiError, ValueError):
    """Verdict or mask arrays do not have matching shapes"""


class MarkerUnavailableError(DroneFdiError):
    """Attacker has no estimate of the marker position yet"""


class FakeMarkerOutOfViewError(DroneFdiError):
    """Falsified marker would be behind the camera or outside the frame"""


class SimulationDivergenceError(DroneFdiError):
    """State norm overflowed or left the envelope during a run"""

    def __init__(self, message: str, step: int, run_index: Optional[int] = None):
        where = f"step {step}" if run_index is None else f"run {run_index}, step {step}"
        super().__init__(f"{message} ({where})")
        self.message = message
        self.step = step
        self.run_index = run_index

    def __reduce__(self):
        return (self.__class__, (self.message, self.step, self.run_index))


class ProtocolError(DroneFdiError):
    """Base class for telemetry wire format errors"""


class TruncatedMessageError(ProtocolError):
    """Buffer ends before a complete message"""


class UnknownMessageTypeError(ProtocolError):
    """Type tag outside the closed set"""


class LengthMismatchError(ProtocolError):
    """Declared payload length disagrees with the payload contents"""
