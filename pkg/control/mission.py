"""
Mission finite state machines

GVT:  Ascend -> Track
VTOL: Ascend -> Approach -> Land
"""

from dataclasses import dataclass
from enum import Enum
from typing import Optional

import numpy as np


class MissionType(str, Enum):
    GVT = "GVT"
    VTOL = "VTOL"


class MissionPhase(str, Enum):
    ASCEND = "Ascend"
    TRACK = "Track"
    APPROACH = "Approach"
    LAND = "Land"


PHASE_ORDER = {
    MissionType.GVT: (MissionPhase.ASCEND, MissionPhase.TRACK),
    MissionType.VTOL: (MissionPhase.ASCEND, MissionPhase.APPROACH, MissionPhase.LAND),
}

# Integer codes used in exported records
PHASE_CODES = {MissionPhase.ASCEND: 0, MissionPhase.TRACK: 1, MissionPhase.APPROACH: 2, MissionPhase.LAND: 3}


@dataclass(frozen=True)
class MissionThresholds:
    cruise_altitude: float = 5.0
    altitude_tolerance: float = 0.3
    landing_threshold: float = 1.2
    # horizontal part of the camera-frame marker position that still allows landing
    landing_xy_tolerance: float = 0.25
    approach_altitude: float = 1.0
    descent_rate: float = 0.5
    touchdown_altitude: float = 0.05

    def __post_init__(self):
        for name in ("cruise_altitude", "altitude_tolerance", "landing_threshold", "landing_xy_tolerance",
                     "approach_altitude", "descent_rate", "touchdown_altitude"):
            value = getattr(self, name)
            if not np.isfinite(value) or value <= 0:
                raise ValueError(f"mission_thresholds.{name} must be strictly positive, got {value}")
        if self.approach_altitude >= self.cruise_altitude:
            raise ValueError("approach_altitude must be below cruise_altitude")
        if self.touchdown_altitude >= self.approach_altitude:
            raise ValueError("touchdown_altitude must be below approach_altitude")


def first_active_phase(mission: MissionType) -> MissionPhase:
    """Phase entered once the marker is acquired at cruise altitude"""
    return PHASE_ORDER[MissionType(mission)][1]


def acquisition_condition(marker_visible: bool, altitude: float, thresholds: MissionThresholds) -> bool:
    """Marker in view with the vehicle at cruise altitude"""
    return bool(marker_visible and abs(altitude - thresholds.cruise_altitude) < thresholds.altitude_tolerance)


def fsm_step(phase: MissionPhase, mission: MissionType, marker_visible: bool,
             relative: Optional[np.ndarray], altitude: float, thresholds: MissionThresholds) -> MissionPhase:
    """
    Next mission phase

    Args:
        phase: current phase
        mission: GVT or VTOL
        marker_visible: marker detected in the current frame
        relative: estimated camera-frame marker position (ignored when not visible)
        altitude: estimated altitude
        thresholds: mission thresholds

    Returns:
        MissionPhase
    """
    mission = MissionType(mission)
    if phase not in PHASE_ORDER[mission]:
        raise ValueError(f"phase {phase} does not belong to mission {mission.value}")

    if phase == MissionPhase.ASCEND:
        if acquisition_condition(marker_visible, altitude, thresholds):
            return first_active_phase(mission)
        return phase

    if phase == MissionPhase.APPROACH and marker_visible and relative is not None:
        relative = np.asarray(relative, dtype=float)
        if (float(np.linalg.norm(relative)) < thresholds.landing_threshold
                and float(np.linalg.norm(relative[:2])) < thresholds.landing_xy_tolerance):
            return MissionPhase.LAND

    # Track and Land hold; Land is terminal
    return phase


def mission_complete(phase: MissionPhase, altitude: float, thresholds: MissionThresholds) -> bool:
    return phase == MissionPhase.LAND and altitude <= thresholds.touchdown_altitude
