"""
Detector calibration from nominal runs

chi2:      quantile thresholds per residual dimension
cusum:     threshold bisected on nominal normalized-residual traces
recurrent: predictor trained on nominal whitened residuals, threshold at the
           held-out (1 - p_fa) quantile
"""

from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Union

import numpy as np

from config import DEFAULT_RECURRENT_MODEL_FILE, DEFAULT_THRESHOLDS_FILE, DETECTOR_NAMES, get_logger
from config.scenario import ScenarioConfig
from data_providers.nominal_traces import NominalTraceProvider, NominalTraces
from detectors.calibration import DetectorCalibration, load_calibration, merge_calibration, save_calibration
from detectors.chi_square import chi2_threshold
from detectors.cusum import cusum_alarm_rate, calibrate_cusum
from detectors.recurrent import RESIDUAL_WIDTH, RecurrentDetectorModel, save_model, train_recurrent
from vehicle.sensing import MEASUREMENT_DIM

logger = get_logger("drone_fdi.harness.calibrate")

DEFAULT_CALIBRATION_RUNS = 10


@dataclass
class CalibrationResult:
    detector: str
    calibration: DetectorCalibration
    # alarm rate of the new threshold on the nominal traces it was fitted on
    empirical_rate: Optional[float]
    traces: Optional[NominalTraces] = None
    model: Optional[RecurrentDetectorModel] = None

    def summary(self) -> dict:
        return {
            "detector": self.detector,
            "p_fa": self.calibration.p_fa,
            "empirical_rate": self.empirical_rate,
            "runs": self.traces.n_runs if self.traces else 0,
            "steps": self.traces.n_steps if self.traces else 0,
            "calibration": self.calibration.to_dict(),
        }


def _chi2_rate(traces: NominalTraces, thresholds: dict) -> float:
    scores = np.concatenate(traces.scores)
    dofs = np.concatenate(traces.dofs)
    limits = np.array([thresholds[int(d)] for d in dofs])
    return float(np.mean(scores > limits)) if scores.size else float("nan")


def calibrate_detector(config: ScenarioConfig, detector: str, p_fa: float,
                       n_runs: int = DEFAULT_CALIBRATION_RUNS,
                       thresholds_file: Union[str, Path] = DEFAULT_THRESHOLDS_FILE,
                       traces: Optional[NominalTraces] = None) -> CalibrationResult:
    """
    Calibrate one detector at p_fa and merge it into the sidecar file

    Args:
        config: scenario the nominal runs are drawn from (its attack is ignored)
        detector: chi2, cusum or recurrent
        p_fa: target false-alarm rate, in (0, 1)
        n_runs: nominal runs to collect traces from
        thresholds_file: sidecar to update; the recurrent model is written next to it
        traces: reuse traces instead of simulating

    Raises:
        ValueError: unknown detector, p_fa outside (0, 1) or n_runs < 1
        TrainingDivergenceError: recurrent training diverged
        OSError: the sidecar or model file cannot be written
    """
    if detector not in DETECTOR_NAMES:
        raise ValueError(f"unknown detector {detector!r}; choose from {DETECTOR_NAMES}")
    if not 0.0 < p_fa < 1.0:
        raise ValueError(f"p_fa must lie in (0, 1), got {p_fa}")

    thresholds_file = Path(thresholds_file)
    if traces is None:
        traces = NominalTraceProvider(config).collect(n_runs)
    calibration = DetectorCalibration(p_fa=p_fa)
    model = None

    if detector == "chi2":
        calibration.chi2_thresholds = {dof: chi2_threshold(dof, p_fa) for dof in (MEASUREMENT_DIM, RESIDUAL_WIDTH)}
        rate = _chi2_rate(traces, calibration.chi2_thresholds)
    elif detector == "cusum":
        drift = config.detectors.cusum_drift
        calibration.cusum_drift = drift
        calibration.cusum_threshold = calibrate_cusum(traces.score_traces(), p_fa, drift)
        rate = cusum_alarm_rate(traces.score_traces(), drift, calibration.cusum_threshold)
    else:
        model = train_recurrent(traces.whitened, config.detectors.recurrent, p_fa)
        model_file = thresholds_file.parent / Path(DEFAULT_RECURRENT_MODEL_FILE).name
        save_model(model, model_file)
        calibration.recurrent_model_file = model_file.name
        calibration.recurrent_threshold = model.threshold
        # held-out rate is p_fa by construction of the quantile
        rate = None

    merged = merge_calibration(load_calibration(thresholds_file), calibration)
    save_calibration(merged, thresholds_file)
    if rate is not None:
        logger.info(f"{detector} nominal alarm rate {rate:.4f} over {traces.n_steps} steps (target {p_fa})")
    return CalibrationResult(detector, merged, rate, traces, model)
