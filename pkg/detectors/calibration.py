"""
Calibration sidecar: detector thresholds shared by run and montecarlo
"""

from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, Optional, Union

from config import DEFAULT_THRESHOLDS_FILE, get_logger
from detectors.recurrent import RecurrentDetectorModel, load_model
from utils.errors import ConfigError
from utils.file_utils import load_json_file, save_json_file

logger = get_logger("drone_fdi.detectors.calibration")


@dataclass
class DetectorCalibration:
    p_fa: float
    chi2_thresholds: Dict[int, float] = field(default_factory=dict)
    cusum_drift: Optional[float] = None
    cusum_threshold: Optional[float] = None
    recurrent_model_file: Optional[str] = None
    recurrent_threshold: Optional[float] = None

    def to_dict(self) -> dict:
        return {
            "p_fa": self.p_fa,
            "chi2": {str(k): v for k, v in sorted(self.chi2_thresholds.items())},
            "cusum": {"drift": self.cusum_drift, "threshold": self.cusum_threshold},
            "recurrent": {"model_file": self.recurrent_model_file, "threshold": self.recurrent_threshold},
        }

    @classmethod
    def from_dict(cls, data: dict) -> "DetectorCalibration":
        try:
            cusum = data.get("cusum") or {}
            recurrent = data.get("recurrent") or {}
            return cls(
                p_fa=float(data["p_fa"]),
                chi2_thresholds={int(k): float(v) for k, v in (data.get("chi2") or {}).items()},
                cusum_drift=cusum.get("drift"),
                cusum_threshold=cusum.get("threshold"),
                recurrent_model_file=recurrent.get("model_file"),
                recurrent_threshold=recurrent.get("threshold"),
            )
        except (KeyError, TypeError, ValueError) as e:
            raise ConfigError(f"malformed calibration data: {e}") from e

    def load_recurrent(self, base_dir: Path) -> Optional[RecurrentDetectorModel]:
        if not self.recurrent_model_file:
            return None
        path = Path(self.recurrent_model_file)
        if not path.is_absolute():
            path = base_dir / path
        if not path.exists():
            logger.warning(f"Recurrent detector file missing: {path}")
            return None
        return load_model(path)


def save_calibration(calibration: DetectorCalibration, file_path: Union[str, Path] = DEFAULT_THRESHOLDS_FILE) -> None:
    save_json_file(file_path, calibration.to_dict(), raise_errors=True)
    logger.info(f"Saved detector calibration to {file_path}")


def load_calibration(file_path: Union[str, Path] = DEFAULT_THRESHOLDS_FILE) -> Optional[DetectorCalibration]:
    """Calibration from a sidecar file, or None when it does not exist"""
    if not Path(file_path).exists():
        return None
    data = load_json_file(file_path)
    if data is None:
        raise ConfigError(f"calibration file {file_path} could not be read")
    return DetectorCalibration.from_dict(data)


def merge_calibration(existing: Optional[DetectorCalibration], update: DetectorCalibration) -> DetectorCalibration:
    """Keep entries of detectors that were not recalibrated"""
    if existing is None or existing.p_fa != update.p_fa:
        return update
    merged = DetectorCalibration(
        p_fa=update.p_fa,
        chi2_thresholds={**existing.chi2_thresholds, **update.chi2_thresholds},
        cusum_drift=update.cusum_drift if update.cusum_threshold is not None else existing.cusum_drift,
        cusum_threshold=update.cusum_threshold if update.cusum_threshold is not None else existing.cusum_threshold,
        recurrent_model_file=update.recurrent_model_file or existing.recurrent_model_file,
        recurrent_threshold=update.recurrent_threshold if update.recurrent_threshold is not None else existing.recurrent_threshold,
    )
    return merged
