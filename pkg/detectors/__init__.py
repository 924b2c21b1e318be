"""
Detectors package: chi-square, CUSUM and recurrent residual detectors
"""

from .chi_square import Chi2Detector, DetectorVerdict, chi2_score, chi2_threshold, normalized_residual
from .cusum import CusumDetector, CusumState, calibrate_cusum, cusum_alarm_rate, cusum_step
from .recurrent import (
    RESIDUAL_WIDTH,
    GruPredictor,
    RecurrentDetector,
    RecurrentDetectorModel,
    RecurrentHyperparams,
    load_model,
    recurrent_score,
    save_model,
    split_windows,
    train_recurrent,
    whiten,
)
from .evaluation import AlarmStats, alarm_rates, effectiveness, evaluate_stealthiness
from .calibration import DetectorCalibration, load_calibration, merge_calibration, save_calibration
