"""
Closed-loop mission simulation

Two halves talk once per step:

    PlantSide   truth, ground vehicle, sensors, camera, beacon
    FlightStack perception, EKF, marker tracker, detectors, FSM, controller

run_scenario wires them directly, optionally with an AttackEngine in
between. The telemetry endpoints wire the same objects through sockets.
"""

from dataclasses import dataclass
from typing import Callable, Dict, List, Optional

import numpy as np

from attack.engine import AttackEngine
from config import DETECTOR_NAMES, get_logger
from config.scenario import ScenarioConfig
from control.controller import CascadeController
from control.ground_vehicle import GroundVehicle, ground_vehicle_step
from control.mission import PHASE_CODES, MissionPhase, fsm_step, mission_complete
from detectors.calibration import DetectorCalibration
from detectors.chi_square import Chi2Detector, DetectorVerdict, normalized_residual
from detectors.cusum import CusumDetector
from detectors.recurrent import RecurrentDetector, RecurrentDetectorModel
from estimation.ekf import BeliefState, ExtendedKalmanFilter, ResidualRecord
from estimation.marker_tracker import MarkerTracker, marker_fix, stack_residuals, vision_residual
from perception.camera import (
    Frame,
    MarkerObservation,
    camera_observation,
    detect_marker,
    estimate_relative_position,
    marker_in_camera,
)
from utils.errors import (
    GimbalLockError,
    NotPositiveDefiniteError,
    SimulationDivergenceError,
    SingularInnovationError,
)
from vehicle.dynamics import STATE_DIM, level_state, step as dynamics_step
from vehicle.sensing import IDENTITY_MODEL, measure

logger = get_logger("drone_fdi.harness")

COMMAND_WIDTH = 4


def initial_state(config: ScenarioConfig) -> np.ndarray:
    """Level hover above the marker, optionally moving with the ground vehicle"""
    gv = config.ground_vehicle
    marker = gv.position()
    position = marker + np.array([0.0, 0.0, config.initial_state.altitude])
    velocity = gv.velocity() if config.initial_state.match_ground_vehicle_velocity else np.zeros(3)
    return level_state(position, velocity)


def initial_belief(config: ScenarioConfig) -> BeliefState:
    return BeliefState(initial_state(config), config.sensor_noise.covariance(), 0)


def build_estimator(config: ScenarioConfig) -> ExtendedKalmanFilter:
    return ExtendedKalmanFilter(
        config.vehicle,
        config.dt,
        config.process_noise.covariance(),
        config.sensor_noise.covariance(),
        initial_belief(config),
        IDENTITY_MODEL,
        jacobian=config.estimation.jacobian,
        epsilon=config.estimation.epsilon,
    )


def build_tracker(config: ScenarioConfig) -> MarkerTracker:
    return MarkerTracker(config.dt, config.estimation.tracker_accel_sigma)


def build_attack_engine(config: ScenarioConfig) -> AttackEngine:
    """Attacker with its own estimator and marker tracker, started from the same prior as the flight stack"""
    return AttackEngine(
        config.attack,
        build_estimator(config),
        build_tracker(config),
        config.camera,
        config.side_length,
        config.vision,
        config.thresholds,
        IDENTITY_MODEL,
    )


def build_detectors(config: ScenarioConfig, calibration: Optional[DetectorCalibration] = None,
                    recurrent_model: Optional[RecurrentDetectorModel] = None) -> Dict[str, object]:
    """
    Online detectors enabled in the scenario

    Calibrated thresholds are used when the sidecar was written for the
    scenario's p_FA. The recurrent detector is skipped without a model.
    """
    settings = config.detectors
    usable = calibration if calibration is not None and calibration.p_fa == settings.p_fa else None
    if calibration is not None and usable is None:
        logger.warning(f"Calibration is for p_fa={calibration.p_fa}, scenario uses {settings.p_fa}; ignoring it")

    detectors: Dict[str, object] = {}
    if "chi2" in settings.enabled:
        detectors["chi2"] = Chi2Detector(settings.p_fa, usable.chi2_thresholds if usable else None)
    if "cusum" in settings.enabled:
        drift, threshold = settings.cusum_drift, settings.cusum_threshold
        if usable and usable.cusum_threshold is not None:
            drift, threshold = usable.cusum_drift, usable.cusum_threshold
        detectors["cusum"] = CusumDetector(drift, threshold)
    if "recurrent" in settings.enabled:
        if recurrent_model is None:
            logger.warning("No recurrent detector model available; run `calibrate --detector recurrent` first")
        else:
            detectors["recurrent"] = RecurrentDetector(recurrent_model)
    return detectors


@dataclass
class SensorPacket:
    """Everything the plant emits at one step, plus the truth behind it"""

    step: int
    measurement: np.ndarray
    beacon: Optional[np.ndarray]
    frame: Frame
    state: np.ndarray
    marker: np.ndarray
    marker_camera: np.ndarray


class PlantSide:
    """
    True vehicle, ground vehicle and sensors, driven by one seeded rng

    Per step the rng is drawn in a fixed order: sensor noise, beacon
    noise, process noise.
    """

    def __init__(self, config: ScenarioConfig, seed: int):
        self.config = config
        self.seed = seed
        self.rng = np.random.default_rng(seed)
        self.state = initial_state(config)
        self.ground_vehicle: GroundVehicle = config.ground_vehicle
        self.marker = self.ground_vehicle.position()
        self.step = 0
        self._process_std = config.process_noise.std_vector()

    def sense(self) -> SensorPacket:
        cfg = self.config
        y = measure(self.state, cfg.sensor_noise, self.rng, IDENTITY_MODEL)
        beacon = cfg.beacon.measure(self.marker, self.rng)
        frame = camera_observation(self.state, self.marker, cfg.camera, cfg.side_length, self.step)
        return SensorPacket(
            step=self.step,
            measurement=y,
            beacon=beacon,
            frame=frame,
            state=self.state.copy(),
            marker=self.marker.copy(),
            marker_camera=marker_in_camera(self.state, self.marker, cfg.camera),
        )

    def advance(self, command: np.ndarray) -> np.ndarray:
        """
        Apply a rotor command for one step

        Raises:
            SimulationDivergenceError: gimbal lock, non-finite state or state norm over the limit
        """
        noise = self._process_std * self.rng.standard_normal(STATE_DIM)
        try:
            x_next = dynamics_step(self.state, command, self.config.dt, self.config.vehicle, noise)
        except GimbalLockError as e:
            raise SimulationDivergenceError(str(e), self.step) from e
        norm = float(np.linalg.norm(x_next))
        if not np.isfinite(norm) or norm > self.config.harness.divergence_limit:
            raise SimulationDivergenceError(f"state norm {norm:.4g} left the envelope", self.step)
        self.state = x_next
        self.ground_vehicle, self.marker = ground_vehicle_step(self.ground_vehicle, self.config.dt)
        self.step += 1
        return self.state


@dataclass
class FlightDecision:
    step: int
    command: np.ndarray
    saturated: bool
    phase: MissionPhase
    estimate: np.ndarray
    observation: MarkerObservation
    relative: Optional[np.ndarray]
    residual: ResidualRecord
    verdicts: Dict[str, Optional[DetectorVerdict]]
    complete: bool


class FlightStack:
    """
    The defended vehicle's onboard software

    process() consumes one step of (possibly falsified) sensor data and
    returns the rotor command; the EKF is predicted with that command
    before returning.
    """

    def __init__(self, config: ScenarioConfig, calibration: Optional[DetectorCalibration] = None,
                 recurrent_model: Optional[RecurrentDetectorModel] = None):
        self.config = config
        self.estimator = build_estimator(config)
        self.tracker = build_tracker(config)
        self.controller = CascadeController(config.vehicle, config.gains, config.thresholds, config.camera.mount,
                                            config.dt, config.max_tilt)
        self.detectors = build_detectors(config, calibration, recurrent_model)
        self.phase = MissionPhase.ASCEND
        self.track_entry_step: Optional[int] = None
        self._beacon_cov = config.beacon.covariance()
        self.logger = logger.getChild("flight")

    def _score(self, residual: ResidualRecord, step: int) -> Dict[str, Optional[DetectorVerdict]]:
        verdicts: Dict[str, Optional[DetectorVerdict]] = {}
        normalized = None
        chi2 = self.detectors.get("chi2")
        if chi2 is not None:
            verdicts["chi2"] = chi2.score(residual.residual, residual.covariance, step)
            normalized = verdicts["chi2"].score
        cusum = self.detectors.get("cusum")
        if cusum is not None:
            if normalized is None:
                normalized = normalized_residual(residual.residual, residual.covariance)
            verdicts["cusum"] = cusum.score(normalized, residual.dim, step)
        recurrent = self.detectors.get("recurrent")
        if recurrent is not None:
            verdicts["recurrent"] = recurrent.score(residual.residual, residual.covariance, step)
        return verdicts

    def process(self, step: int, measurement: np.ndarray, beacon: Optional[np.ndarray],
                frame: Optional[Frame] = None, observation: Optional[MarkerObservation] = None) -> FlightDecision:
        cfg = self.config
        if frame is not None:
            observation = detect_marker(frame, cfg.camera)
        elif observation is None:
            observation = MarkerObservation.invisible(step)

        sensor_residual = self.estimator.update(measurement)
        belief = self.estimator.belief

        relative = None
        residual = sensor_residual
        if observation.visible:
            relative = estimate_relative_position(observation, cfg.camera, cfg.side_length)
            fix, fix_cov = marker_fix(belief, relative, cfg.camera, cfg.side_length, cfg.vision)
            self.tracker.step(fix, fix_cov)
            if beacon is not None:
                vision = vision_residual(belief, relative, beacon, cfg.camera, cfg.side_length, cfg.vision,
                                         self._beacon_cov, cfg.estimation.epsilon)
                residual = stack_residuals(sensor_residual, vision)
        else:
            self.tracker.step(None)

        verdicts = self._score(residual, step)

        estimate = belief.mean.copy()
        phase = fsm_step(self.phase, cfg.mission, observation.visible, relative, estimate[2], cfg.thresholds)
        if phase != self.phase:
            self.logger.info(f"Phase {self.phase.value} -> {phase.value} at step {step}")
            if self.track_entry_step is None:
                self.track_entry_step = step
            self.phase = phase

        target_velocity = None
        coasted = None
        if relative is not None:
            target_velocity = self.tracker.velocity
        elif self.tracker.initialized and self.tracker.steps_since_fix <= cfg.coast_steps:
            coasted = self.tracker.position
            target_velocity = self.tracker.velocity
        command, saturated = self.controller.compute(estimate, relative, phase, target_velocity, coasted)
        complete = mission_complete(phase, estimate[2], cfg.thresholds)
        self.estimator.predict(command)
        return FlightDecision(step, command, saturated, phase, estimate, observation, relative, residual,
                              verdicts, complete)


@dataclass
class AttackSnapshot:
    estimate: np.ndarray
    deviation: np.ndarray
    active: bool
    shown_camera: Optional[np.ndarray]

    @classmethod
    def capture(cls, engine: AttackEngine) -> "AttackSnapshot":
        shown = None if engine.last_fake is None else engine.last_fake.point_camera.copy()
        return cls(engine.estimate.copy(), engine.state.s.copy(), engine.falsifying, shown)


@dataclass
class RunRecord:
    """
    Per-step log of one run

    Arrays share the leading length. attacker_estimate is NaN without an
    attacker; pc_seen is NaN on steps where the flight stack saw no marker;
    scores are NaN for detectors that are off or still warming up.
    """

    seed: int
    mission: str
    dt: float
    step: np.ndarray
    phase: np.ndarray
    true_state: np.ndarray
    estimate: np.ndarray
    attacker_estimate: np.ndarray
    deviation: np.ndarray
    command: np.ndarray
    pc_true: np.ndarray
    pc_shown: np.ndarray
    pc_seen: np.ndarray
    visible: np.ndarray
    marker: np.ndarray
    separation: np.ndarray
    residual_dim: np.ndarray
    scores: Dict[str, np.ndarray]
    alarms: Dict[str, np.ndarray]
    attack_active: np.ndarray
    saturated: np.ndarray
    track_entry_step: Optional[int] = None
    attack_start_step: Optional[int] = None
    attack_stop_step: Optional[int] = None
    stop_reason: Optional[str] = None
    completed: bool = False
    terminated_by: str = "duration"
    run_index: Optional[int] = None

    def __len__(self) -> int:
        return int(self.step.shape[0])

    @property
    def time(self) -> np.ndarray:
        return self.step * self.dt

    def metadata(self) -> dict:
        return {
            "seed": self.seed,
            "mission": self.mission,
            "dt": self.dt,
            "steps": len(self),
            "track_entry_step": self.track_entry_step,
            "attack_start_step": self.attack_start_step,
            "attack_stop_step": self.attack_stop_step,
            "stop_reason": self.stop_reason,
            "completed": self.completed,
            "terminated_by": self.terminated_by,
            "run_index": self.run_index,
        }

    def window_start(self) -> Optional[int]:
        """First evaluated step: the attack start, or the step after Track/Approach entry"""
        if self.attack_start_step is not None:
            return self.attack_start_step
        if self.track_entry_step is not None:
            return self.track_entry_step + 1
        return None

    def verdict_window(self, detector: str, start: int, length: int, require_attack: bool):
        """
        Alarms of one detector over [start, start + length) with a validity mask

        Cells past the end of the run, with no score, or (require_attack)
        where the attack was not active are masked out.
        """
        idx = start + np.arange(length)
        valid = idx < len(self)
        inside = idx[valid]
        alarms = np.zeros(length, dtype=bool)
        mask = np.zeros(length, dtype=bool)
        alarms[valid] = self.alarms[detector][inside]
        cell_ok = np.isfinite(self.scores[detector][inside])
        if require_attack:
            cell_ok &= self.attack_active[inside]
        mask[valid] = cell_ok
        return alarms, mask

    def effectiveness_trace(self) -> np.ndarray:
        """Horizontal drone-marker separation from the window start until the attack stops"""
        start = self.window_start()
        if start is None:
            return np.empty(0)
        end = len(self) if self.attack_stop_step is None else min(len(self), self.attack_stop_step + 1)
        return self.separation[start:end]


class RunRecorder:
    """Accumulates per-step rows and assembles a RunRecord"""

    def __init__(self, config: ScenarioConfig, seed: int, detectors=DETECTOR_NAMES):
        self.config = config
        self.seed = seed
        self.detectors = list(detectors)
        self.rows: Dict[str, List] = {name: [] for name in (
            "step", "phase", "true_state", "estimate", "attacker_estimate", "deviation", "command",
            "pc_true", "pc_shown", "pc_seen", "visible", "marker", "separation", "residual_dim",
            "attack_active", "saturated")}
        self.scores: Dict[str, List[float]] = {name: [] for name in self.detectors}
        self.alarms: Dict[str, List[bool]] = {name: [] for name in self.detectors}

    def add(self, packet: SensorPacket, decision: FlightDecision, attack: Optional[AttackSnapshot] = None) -> None:
        r = self.rows
        r["step"].append(packet.step)
        r["phase"].append(PHASE_CODES[decision.phase])
        r["true_state"].append(packet.state)
        r["estimate"].append(decision.estimate)
        r["command"].append(decision.command)
        r["pc_true"].append(packet.marker_camera)
        r["pc_seen"].append(decision.relative if decision.relative is not None else np.full(3, np.nan))
        r["visible"].append(decision.observation.visible)
        r["marker"].append(packet.marker)
        r["separation"].append(float(np.linalg.norm(packet.marker[:2] - packet.state[:2])))
        r["residual_dim"].append(decision.residual.dim)
        r["saturated"].append(decision.saturated)
        if attack is None:
            r["attacker_estimate"].append(np.full(STATE_DIM, np.nan))
            r["deviation"].append(np.zeros(STATE_DIM))
            r["attack_active"].append(False)
            r["pc_shown"].append(packet.marker_camera)
        else:
            r["attacker_estimate"].append(attack.estimate)
            r["deviation"].append(attack.deviation)
            r["attack_active"].append(attack.active)
            r["pc_shown"].append(packet.marker_camera if attack.shown_camera is None else attack.shown_camera)
        for name in self.detectors:
            verdict = decision.verdicts.get(name)
            self.scores[name].append(np.nan if verdict is None else verdict.score)
            self.alarms[name].append(False if verdict is None else verdict.alarm)

    def build(self, **metadata) -> RunRecord:
        r = self.rows

        def stacked(name: str, width: int) -> np.ndarray:
            return np.array(r[name], dtype=float).reshape(-1, width)

        attack_active = np.array(r["attack_active"], dtype=bool)
        active_steps = np.flatnonzero(attack_active)
        if "attack_start_step" not in metadata:
            metadata["attack_start_step"] = int(r["step"][active_steps[0]]) if active_steps.size else None
        return RunRecord(
            seed=self.seed,
            mission=self.config.mission.value,
            dt=self.config.dt,
            step=np.array(r["step"], dtype=np.int64),
            phase=np.array(r["phase"], dtype=np.int64),
            true_state=stacked("true_state", STATE_DIM),
            estimate=stacked("estimate", STATE_DIM),
            attacker_estimate=stacked("attacker_estimate", STATE_DIM),
            deviation=stacked("deviation", STATE_DIM),
            command=stacked("command", COMMAND_WIDTH),
            pc_true=stacked("pc_true", 3),
            pc_shown=stacked("pc_shown", 3),
            pc_seen=stacked("pc_seen", 3),
            visible=np.array(r["visible"], dtype=bool),
            marker=stacked("marker", 3),
            separation=np.array(r["separation"], dtype=float),
            residual_dim=np.array(r["residual_dim"], dtype=np.int64),
            scores={name: np.array(v, dtype=float) for name, v in self.scores.items()},
            alarms={name: np.array(v, dtype=bool) for name, v in self.alarms.items()},
            attack_active=attack_active,
            saturated=np.array(r["saturated"], dtype=bool),
            **metadata,
        )


StepObserver = Callable[[SensorPacket, FlightDecision], None]


def run_scenario(config: ScenarioConfig, seed: Optional[int] = None,
                 calibration: Optional[DetectorCalibration] = None,
                 recurrent_model: Optional[RecurrentDetectorModel] = None,
                 run_index: Optional[int] = None, observer: Optional[StepObserver] = None) -> RunRecord:
    """
    Simulate one mission

    Per step: ground vehicle and truth -> sensing -> camera -> attack
    engine -> flight EKF -> detectors -> FSM -> controller -> dynamics.

    Args:
        config: validated scenario
        seed: rng seed, defaults to config.seed
        calibration: detector thresholds from the calibration sidecar
        recurrent_model: trained recurrent detector
        run_index: index reported in errors from Monte Carlo batches
        observer: called with every (packet, decision) pair

    Returns:
        RunRecord

    Raises:
        SimulationDivergenceError: the state overflowed or a filter broke down
    """
    seed = config.seed if seed is None else seed
    plant = PlantSide(config, seed)
    stack = FlightStack(config, calibration, recurrent_model)
    engine = build_attack_engine(config) if config.attack.enabled else None
    recorder = RunRecorder(config, seed)
    terminated_by = "duration"

    logger.info(f"Running {config.name} ({config.mission.value}) seed={seed} "
                f"attack={'on' if engine else 'off'} for {config.n_steps} steps")
    for t in range(config.n_steps):
        try:
            packet = plant.sense()
            measurement, frame, snapshot = packet.measurement, packet.frame, None
            if engine is not None:
                measurement = engine.on_measurement(t, measurement)
                frame = engine.on_frame(t, frame)
                snapshot = AttackSnapshot.capture(engine)
            decision = stack.process(t, measurement, packet.beacon, frame)
            if engine is not None:
                engine.on_command(t, decision.command)
        except (GimbalLockError, SingularInnovationError, NotPositiveDefiniteError) as e:
            logger.error(f"Run diverged at step {t}: {e}")
            raise SimulationDivergenceError(str(e), t, run_index) from e

        recorder.add(packet, decision, snapshot)
        if observer is not None:
            observer(packet, decision)
        if decision.complete:
            terminated_by = "mission_complete"
            break
        if engine is not None and engine.state.stopped and config.harness.terminate_on_attack_stop:
            terminated_by = "attack_stop"
            break
        try:
            plant.advance(decision.command)
        except SimulationDivergenceError as e:
            logger.error(f"Run diverged: {e}")
            raise SimulationDivergenceError(e.message, e.step, run_index) from e

    state = engine.state if engine is not None else None
    record = recorder.build(
        track_entry_step=stack.track_entry_step,
        attack_stop_step=state.stop_step if state else None,
        stop_reason=state.stop_reason if state else None,
        completed=terminated_by == "mission_complete",
        terminated_by=terminated_by,
        run_index=run_index,
    )
    saturated = int(record.saturated.sum())
    if saturated:
        logger.warning(f"Rotor command clamped on {saturated} of {len(record)} steps")
    logger.info(f"Run finished after {len(record)} steps ({terminated_by}); "
                f"final separation {record.separation[-1] if len(record) else float('nan'):.3f} m")
    return record
