"""
Control package: mission state machines, cascade controller, ground vehicle
"""

from .mission import (
    PHASE_CODES,
    MissionPhase,
    MissionThresholds,
    MissionType,
    acquisition_condition,
    first_active_phase,
    fsm_step,
    mission_complete,
)
from .ground_vehicle import GroundVehicle, ground_vehicle_step
from .controller import CascadeController, LoopGains, PidGains, PidLoop
