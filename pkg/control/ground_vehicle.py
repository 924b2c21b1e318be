"""
Ground vehicle carrying the landing marker

Drives a square at constant speed, clockwise seen from above:
corner -> +y -> +x -> -y -> -x back to the corner.
"""

from dataclasses import dataclass, field, replace
from typing import Tuple

import numpy as np

_LEG_DIRECTIONS = np.array([[0.0, 1.0], [1.0, 0.0], [0.0, -1.0], [-1.0, 0.0]])


@dataclass(frozen=True)
class GroundVehicle:
    side: float = 20.0
    speed: float = 1.0
    corner: np.ndarray = field(default_factory=lambda: np.zeros(2))
    # distance travelled along the perimeter, in meters
    phase: float = 0.0

    def __post_init__(self):
        if not np.isfinite(self.side) or self.side <= 0:
            raise ValueError(f"ground_vehicle.side must be positive, got {self.side}")
        if not np.isfinite(self.speed) or self.speed <= 0:
            raise ValueError(f"ground_vehicle.speed must be positive, got {self.speed}")
        object.__setattr__(self, "corner", np.asarray(self.corner, dtype=float))
        object.__setattr__(self, "phase", float(self.phase) % self.perimeter)

    @property
    def perimeter(self) -> float:
        return 4.0 * self.side

    @property
    def lap_time(self) -> float:
        return self.perimeter / self.speed

    def _leg(self) -> Tuple[int, float]:
        leg = min(int(self.phase // self.side), 3)
        return leg, self.phase - leg * self.side

    def position(self) -> np.ndarray:
        """Earth-frame marker position (z = 0)"""
        leg, along = self._leg()
        offset = self.side * np.cumsum(np.vstack([np.zeros(2), _LEG_DIRECTIONS[:3]]), axis=0)[leg]
        xy = self.corner + offset + along * _LEG_DIRECTIONS[leg]
        return np.array([xy[0], xy[1], 0.0])

    def velocity(self) -> np.ndarray:
        leg, _ = self._leg()
        vx, vy = self.speed * _LEG_DIRECTIONS[leg]
        return np.array([vx, vy, 0.0])


def ground_vehicle_step(gv: GroundVehicle, dt: float) -> Tuple[GroundVehicle, np.ndarray]:
    """Advance the vehicle by dt; corners are turned instantaneously"""
    if dt <= 0:
        raise ValueError(f"dt must be positive, got {dt}")
    moved = replace(gv, phase=gv.phase + gv.speed * dt)
    return moved, moved.position()
