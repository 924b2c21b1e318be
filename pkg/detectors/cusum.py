"""
CUSUM detector over normalized residual scores
"""

from dataclasses import dataclass
from typing import Sequence, Tuple

import numpy as np

from config import get_logger
from detectors.chi_square import DetectorVerdict

logger = get_logger("drone_fdi.detectors.cusum")


@dataclass(frozen=True)
class CusumState:
    statistic: float = 0.0


def cusum_step(state: CusumState, score: float, drift: float, threshold: float,
               expected: float, step: int = 0) -> Tuple[CusumState, DetectorVerdict]:
    """
    g <- max(0, g + score - expected - drift); alarm and reset when g >= threshold

    The verdict reports the statistic before the reset.
    """
    if drift <= 0:
        raise ValueError(f"drift must be positive, got {drift}")
    statistic = max(0.0, state.statistic + score - expected - drift)
    alarm = statistic >= threshold
    verdict = DetectorVerdict(step, alarm, statistic)
    return CusumState(0.0 if alarm else statistic), verdict


def cusum_alarm_rate(traces: Sequence[Tuple[np.ndarray, np.ndarray]], drift: float, threshold: float) -> float:
    alarms = 0
    total = 0
    for scores, dofs in traces:
        state = CusumState()
        for score, dof in zip(scores, dofs):
            state, verdict = cusum_step(state, float(score), drift, threshold, float(dof))
            alarms += verdict.alarm
        total += len(scores)
    return alarms / total if total else 0.0


def calibrate_cusum(traces: Sequence[Tuple[np.ndarray, np.ndarray]], p_fa: float, drift: float,
                    iterations: int = 50) -> float:
    """
    Smallest threshold whose empirical alarm rate on nominal traces is at most p_fa

    Args:
        traces: (scores, residual dimensions) per nominal run
        p_fa: target false-alarm rate
        drift: CUSUM drift
        iterations: bisection steps

    Returns:
        threshold
    """
    if not 0.0 < p_fa < 1.0:
        raise ValueError(f"p_fa must lie in (0, 1), got {p_fa}")
    if not traces:
        raise ValueError("CUSUM calibration needs at least one nominal trace")

    low = 0.0
    high = 1.0
    while cusum_alarm_rate(traces, drift, high) > p_fa:
        high *= 2.0
        if high > 1e12:
            raise ValueError("CUSUM calibration did not find a threshold bound")

    for _ in range(iterations):
        mid = 0.5 * (low + high)
        if cusum_alarm_rate(traces, drift, mid) > p_fa:
            low = mid
        else:
            high = mid
    logger.info(f"CUSUM threshold calibrated to {high:.4f} (drift={drift}, p_fa={p_fa})")
    return high


class CusumDetector:
    """Online CUSUM with E[score] taken as the residual dimension"""

    name = "cusum"

    def __init__(self, drift: float, threshold: float):
        if drift <= 0 or threshold <= 0:
            raise ValueError("CUSUM drift and threshold must be positive")
        self.drift = drift
        self.threshold = threshold
        self.state = CusumState()

    def reset(self) -> None:
        self.state = CusumState()

    def score(self, normalized: float, dof: int, step: int = 0) -> DetectorVerdict:
        self.state, verdict = cusum_step(self.state, normalized, self.drift, self.threshold, float(dof), step)
        return verdict
