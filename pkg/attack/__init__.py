"""
Attack package: deviation propagation and consistent falsification of sensors and images
"""

from .engine import (
    ATTACK_MODES,
    STOP_RULES,
    AttackConfig,
    AttackEngine,
    AttackState,
    FakeMarker,
    estimate_marker_earth,
    falsify_marker,
    falsify_sensors,
    propagate_s,
)
