"""
Scenario configuration for Drone FDI Lab

A scenario file is JSON that lists only what it changes; it is
deep-merged over DEFAULT_SCENARIO and turned into typed parameter objects.
"""

import copy
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Dict, Optional, Tuple, Union

from attack.engine import AttackConfig
from config.config import DEFAULT_SCENARIO, DETECTOR_NAMES
from config.logger import get_logger
from control.controller import PidGains
from control.ground_vehicle import GroundVehicle
from control.mission import MissionThresholds, MissionType
from detectors.recurrent import RecurrentHyperparams
from perception.camera import CameraModel, VisionNoiseParams
from utils.errors import ConfigError
from utils.file_utils import load_json_file, merge_json_data
from utils.frames import CameraMount
from vehicle.dynamics import VehicleParams
from vehicle.sensing import SensorNoiseParams, TargetBeacon

logger = get_logger("drone_fdi.config.scenario")


@dataclass(frozen=True)
class InitialStateConfig:
    # height above the marker at step 0
    altitude: float = 1.0
    match_ground_vehicle_velocity: bool = True

    def __post_init__(self):
        if not self.altitude > 0:
            raise ValueError(f"altitude must be positive, got {self.altitude}")


@dataclass(frozen=True)
class EstimationConfig:
    jacobian: str = "numeric"
    epsilon: float = 1e-6
    tracker_accel_sigma: float = 1.0

    def __post_init__(self):
        if self.jacobian not in ("numeric", "analytic"):
            raise ValueError(f"jacobian must be 'numeric' or 'analytic', got {self.jacobian!r}")
        if not self.epsilon > 0 or not self.tracker_accel_sigma > 0:
            raise ValueError("epsilon and tracker_accel_sigma must be positive")


@dataclass(frozen=True)
class DetectorConfig:
    enabled: Tuple[str, ...] = tuple(DETECTOR_NAMES)
    p_fa: float = 0.01
    cusum_drift: float = 3.0
    cusum_threshold: float = 60.0
    recurrent: RecurrentHyperparams = RecurrentHyperparams()

    def __post_init__(self):
        object.__setattr__(self, "enabled", tuple(self.enabled))
        unknown = [name for name in self.enabled if name not in DETECTOR_NAMES]
        if unknown:
            raise ValueError(f"unknown detectors {unknown}; choose from {DETECTOR_NAMES}")
        if not 0.0 < self.p_fa < 1.0:
            raise ValueError(f"p_fa must lie in (0, 1), got {self.p_fa}")
        if not self.cusum_drift > 0 or not self.cusum_threshold > 0:
            raise ValueError("cusum_drift and cusum_threshold must be positive")


@dataclass(frozen=True)
class EvaluationConfig:
    window_steps: int = 500
    epsilon: float = 0.05

    def __post_init__(self):
        if self.window_steps < 2:
            raise ValueError(f"window_steps must be at least 2, got {self.window_steps}")
        if not 0.0 <= self.epsilon <= 1.0:
            raise ValueError(f"epsilon must lie in [0, 1], got {self.epsilon}")


@dataclass(frozen=True)
class HarnessConfig:
    terminate_on_attack_stop: bool = True
    divergence_limit: float = 1e6
    workers: int = 1

    def __post_init__(self):
        if not self.divergence_limit > 0:
            raise ValueError("divergence_limit must be positive")
        if self.workers < 1:
            raise ValueError(f"workers must be at least 1, got {self.workers}")


@dataclass(frozen=True)
class ScenarioConfig:
    """Validated scenario; `raw` keeps the merged dict it was built from"""

    name: str
    mission: MissionType
    dt: float
    duration: float
    seed: int
    vehicle: VehicleParams
    initial_state: InitialStateConfig
    process_noise: SensorNoiseParams
    sensor_noise: SensorNoiseParams
    camera: CameraModel
    side_length: float
    vision: VisionNoiseParams
    beacon: TargetBeacon
    estimation: EstimationConfig
    gains: PidGains
    max_tilt: float
    coast_steps: int
    thresholds: MissionThresholds
    ground_vehicle: GroundVehicle
    attack: AttackConfig
    detectors: DetectorConfig
    evaluation: EvaluationConfig
    harness: HarnessConfig
    raw: Dict[str, Any]

    @property
    def n_steps(self) -> int:
        return int(round(self.duration / self.dt))

    def to_dict(self) -> Dict[str, Any]:
        return copy.deepcopy(self.raw)

    def with_overrides(self, overrides: Dict[str, Any]) -> "ScenarioConfig":
        """New scenario with a nested dict of changes merged in"""
        return scenario_from_dict(merge_json_data(self.raw, overrides), merge_defaults=False)

    def nominal(self) -> "ScenarioConfig":
        """Same scenario with the attack disabled"""
        return self.with_overrides({"attack": {"enabled": False}})


def _check_keys(data: Dict[str, Any], defaults: Dict[str, Any], prefix: str = "") -> None:
    for key, value in data.items():
        path = f"{prefix}{key}"
        if key not in defaults:
            raise ConfigError(f"unknown scenario key '{path}'")
        if isinstance(defaults[key], dict):
            if not isinstance(value, dict):
                raise ConfigError(f"scenario key '{path}' must be an object")
            # gain loops are free-form per loop
            if path != "control.gains":
                _check_keys(value, defaults[key], path + ".")


def _build(section: str, builder, *args, **kwargs):
    try:
        return builder(*args, **kwargs)
    except ConfigError:
        raise
    except (KeyError, TypeError, ValueError) as e:
        raise ConfigError(f"invalid '{section}': {e}") from e


def _camera(data: Dict[str, Any]) -> CameraModel:
    mount = CameraMount.from_config(data["mount_rotation"], data["mount_offset"])
    fields = {k: v for k, v in data.items() if k not in ("mount_rotation", "mount_offset")}
    return CameraModel(mount=mount, **fields)


def _sensor_noise(data: Dict[str, Any]) -> SensorNoiseParams:
    noise = SensorNoiseParams(**data)
    if not noise.is_strictly_positive():
        raise ValueError("sensor noise deviations must be strictly positive")
    return noise


def _ground_vehicle(data: Dict[str, Any]) -> GroundVehicle:
    return GroundVehicle(side=data["side"], speed=data["speed"], corner=data["corner"], phase=data["phase"])


def _detectors(data: Dict[str, Any]) -> DetectorConfig:
    fields = {k: v for k, v in data.items() if k != "recurrent"}
    return DetectorConfig(recurrent=RecurrentHyperparams(**data["recurrent"]), **fields)


def scenario_from_dict(data: Dict[str, Any], merge_defaults: bool = True) -> ScenarioConfig:
    """
    Build a ScenarioConfig from a (partial) scenario dict

    Args:
        data: scenario values, nested like DEFAULT_SCENARIO
        merge_defaults: merge data over DEFAULT_SCENARIO first

    Returns:
        ScenarioConfig

    Raises:
        ConfigError: unknown key or invalid value, naming the section
    """
    if not isinstance(data, dict):
        raise ConfigError("scenario must be a JSON object")
    _check_keys(data, DEFAULT_SCENARIO)
    merged = merge_json_data(copy.deepcopy(DEFAULT_SCENARIO), data) if merge_defaults else copy.deepcopy(data)

    dt = _build("dt", float, merged["dt"])
    duration = _build("duration", float, merged["duration"])
    if not dt > 0:
        raise ConfigError(f"invalid 'dt': must be positive, got {dt}")
    if not duration > 0:
        raise ConfigError(f"invalid 'duration': must be positive, got {duration}")
    mission = _build("mission", MissionType, str(merged["mission"]).upper())
    control = merged["control"]

    config = ScenarioConfig(
        name=str(merged["name"]),
        mission=mission,
        dt=dt,
        duration=duration,
        seed=_build("seed", int, merged["seed"]),
        vehicle=_build("vehicle", VehicleParams, **merged["vehicle"]),
        initial_state=_build("initial_state", InitialStateConfig, **merged["initial_state"]),
        process_noise=_build("process_noise", SensorNoiseParams, **merged["process_noise"]),
        sensor_noise=_build("sensor_noise", _sensor_noise, merged["sensor_noise"]),
        camera=_build("camera", _camera, merged["camera"]),
        side_length=_build("marker.side_length", float, merged["marker"]["side_length"]),
        vision=_build("vision", VisionNoiseParams, **merged["vision"]),
        beacon=_build("beacon", TargetBeacon, **merged["beacon"]),
        estimation=_build("estimation", EstimationConfig, **merged["estimation"]),
        gains=_build("control.gains", PidGains.from_dict, control["gains"]),
        max_tilt=_build("control.max_tilt", float, control["max_tilt"]),
        coast_steps=_build("control.coast_steps", int, control["coast_steps"]),
        thresholds=_build("mission_thresholds", MissionThresholds, **merged["mission_thresholds"]),
        ground_vehicle=_build("ground_vehicle", _ground_vehicle, merged["ground_vehicle"]),
        attack=_build("attack", AttackConfig, **merged["attack"]),
        detectors=_build("detectors", _detectors, merged["detectors"]),
        evaluation=_build("evaluation", EvaluationConfig, **merged["evaluation"]),
        harness=_build("harness", HarnessConfig, **merged["harness"]),
        raw=merged,
    )
    if not config.side_length > 0:
        raise ConfigError(f"invalid 'marker.side_length': must be positive, got {config.side_length}")
    if not 0 < config.max_tilt < config.vehicle.max_pitch:
        raise ConfigError("invalid 'control.max_tilt': must lie in (0, vehicle.max_pitch)")
    if config.coast_steps < 0:
        raise ConfigError(f"invalid 'control.coast_steps': must be non-negative, got {config.coast_steps}")
    if config.attack.enabled and config.attack.mode == "consistent" and not config.attack.s0.any():
        logger.warning(f"Scenario '{config.name}' enables a consistent attack with s0 = 0; it will pass data through")
    return config


def load_scenario(file_path: Union[str, Path], overrides: Optional[Dict[str, Any]] = None) -> ScenarioConfig:
    """
    Load a scenario file

    Raises:
        ConfigError: the file is missing or unreadable, or a value is invalid
    """
    path = Path(file_path)
    if not path.exists():
        raise ConfigError(f"scenario file not found: {path}")
    data = load_json_file(path)
    if data is None:
        raise ConfigError(f"scenario file could not be parsed: {path}")
    if overrides:
        data = merge_json_data(data, overrides)
    config = scenario_from_dict(data)
    logger.info(f"Loaded scenario '{config.name}' ({config.mission.value}) from {path}")
    return config
