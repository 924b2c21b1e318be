"""
Chi-square detector over EKF residuals
"""

from dataclasses import dataclass
from typing import Dict, Optional

import numpy as np
from scipy import linalg
from scipy.stats import chi2

from config import get_logger
from utils.errors import NotPositiveDefiniteError

logger = get_logger("drone_fdi.detectors.chi2")


@dataclass(frozen=True)
class DetectorVerdict:
    step: int
    alarm: bool
    score: float


def chi2_threshold(dof: int, p_fa: float) -> float:
    """Upper (1 - p_fa) quantile of the chi-square distribution with dof degrees of freedom"""
    if not 0.0 < p_fa < 1.0:
        raise ValueError(f"p_fa must lie in (0, 1), got {p_fa}")
    if dof < 1:
        raise ValueError(f"dof must be at least 1, got {dof}")
    return float(chi2.ppf(1.0 - p_fa, dof))


def normalized_residual(residual: np.ndarray, covariance: np.ndarray) -> float:
    """
    r^T S^-1 r

    Raises:
        NotPositiveDefiniteError: S is not positive definite
    """
    residual = np.atleast_1d(np.asarray(residual, dtype=float))
    covariance = np.atleast_2d(np.asarray(covariance, dtype=float))
    try:
        factor = linalg.cho_factor(covariance)
    except linalg.LinAlgError as e:
        raise NotPositiveDefiniteError(f"residual covariance is not positive definite: {e}") from e
    return float(residual @ linalg.cho_solve(factor, residual))


def chi2_score(residual: np.ndarray, covariance: np.ndarray, threshold: float, step: int = 0) -> DetectorVerdict:
    """Alarm iff r^T S^-1 r > threshold"""
    score = normalized_residual(residual, covariance)
    return DetectorVerdict(step, score > threshold, score)


class Chi2Detector:
    """Chi-square test with one threshold cached per residual dimension"""

    name = "chi2"

    def __init__(self, p_fa: float = 0.01, thresholds: Optional[Dict[int, float]] = None):
        self.p_fa = p_fa
        self.thresholds: Dict[int, float] = {int(k): float(v) for k, v in (thresholds or {}).items()}
        self.logger = logger

    def threshold(self, dof: int) -> float:
        if dof not in self.thresholds:
            self.thresholds[dof] = chi2_threshold(dof, self.p_fa)
            self.logger.debug(f"chi2 threshold for dof={dof}: {self.thresholds[dof]:.4f}")
        return self.thresholds[dof]

    def score(self, residual: np.ndarray, covariance: np.ndarray, step: int = 0) -> DetectorVerdict:
        return chi2_score(residual, covariance, self.threshold(len(residual)), step)
