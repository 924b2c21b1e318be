"""
Stealthiness and effectiveness of an attack against the deployed detectors
"""

from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np

from utils.errors import ShapeMismatchError


@dataclass(frozen=True)
class AlarmStats:
    """
    Per-step and aggregate alarm rates of one detector

    per_step_fa / per_step_td are NaN at steps where no run is valid.
    """

    per_step_fa: np.ndarray
    per_step_td: np.ndarray
    p_fa: float
    p_td: float
    per_step_gap: np.ndarray
    max_gap: float
    stealthy: bool
    # every per-step gap within epsilon, not just the aggregate one
    stealthy_per_step: bool
    epsilon: float
    nominal_runs: int
    attacked_runs: int

    def summary(self) -> dict:
        return {
            "p_fa": self.p_fa,
            "p_td": self.p_td,
            "max_gap": self.max_gap,
            "epsilon": self.epsilon,
            "stealthy": self.stealthy,
            "stealthy_per_step": self.stealthy_per_step,
            "nominal_runs": self.nominal_runs,
            "attacked_runs": self.attacked_runs,
        }


def _masked_rates(verdicts: np.ndarray, mask: np.ndarray) -> Tuple[np.ndarray, float]:
    counts = mask.sum(axis=0)
    alarms = (verdicts & mask).sum(axis=0)
    with np.errstate(invalid="ignore", divide="ignore"):
        per_step = np.where(counts > 0, alarms / np.maximum(counts, 1), np.nan)
    total = mask.sum()
    overall = float((verdicts & mask).sum() / total) if total else float("nan")
    return per_step, overall


def alarm_rates(verdicts: np.ndarray, mask: Optional[np.ndarray] = None) -> Tuple[np.ndarray, float]:
    """Per-step and overall alarm rate of (runs, steps) verdicts over the valid cells"""
    verdicts = _as_bool_2d("verdicts", verdicts)
    mask = np.ones_like(verdicts) if mask is None else _as_bool_2d("mask", mask)
    if mask.shape != verdicts.shape:
        raise ShapeMismatchError("mask must match the shape of the verdict array")
    return _masked_rates(verdicts, mask)


def _as_bool_2d(name: str, array) -> np.ndarray:
    array = np.asarray(array, dtype=bool)
    if array.ndim != 2:
        raise ShapeMismatchError(f"{name} must be (runs, steps), got shape {array.shape}")
    return array


def evaluate_stealthiness(nominal: np.ndarray, attacked: np.ndarray, epsilon: float = 0.05,
                          nominal_mask: Optional[np.ndarray] = None,
                          attacked_mask: Optional[np.ndarray] = None) -> AlarmStats:
    """
    Compare alarm rates of nominal and attacked runs of one detector

    Args:
        nominal: (runs, T) verdicts of nominal runs, t = 0 aligned with attack start
        attacked: (runs, T) verdicts of attacked runs, t = 0 is the attack start
        epsilon: stealthiness tolerance
        nominal_mask, attacked_mask: which (run, step) cells hold valid verdicts

    Returns:
        AlarmStats; p_FA counts every step of nominal runs, p_TD the steps t > 0 of attacked runs
    """
    nominal = _as_bool_2d("nominal", nominal)
    attacked = _as_bool_2d("attacked", attacked)
    if nominal.shape[1] != attacked.shape[1]:
        raise ShapeMismatchError(f"trace lengths differ: nominal {nominal.shape[1]}, attacked {attacked.shape[1]}")
    nominal_mask = np.ones_like(nominal) if nominal_mask is None else _as_bool_2d("nominal_mask", nominal_mask)
    attacked_mask = np.ones_like(attacked) if attacked_mask is None else _as_bool_2d("attacked_mask", attacked_mask)
    if nominal_mask.shape != nominal.shape or attacked_mask.shape != attacked.shape:
        raise ShapeMismatchError("masks must match the shape of their verdict arrays")

    attacked_mask = attacked_mask.copy()
    if attacked_mask.shape[1]:
        attacked_mask[:, 0] = False

    per_step_fa, p_fa = _masked_rates(nominal, nominal_mask)
    per_step_td, p_td = _masked_rates(attacked, attacked_mask)
    gap = per_step_td - per_step_fa
    finite_gap = gap[np.isfinite(gap)]
    max_gap = float(finite_gap.max()) if finite_gap.size else float("nan")
    stealthy = bool(np.isfinite(p_td) and np.isfinite(p_fa) and p_td - p_fa <= epsilon)
    return AlarmStats(
        per_step_fa=per_step_fa,
        per_step_td=per_step_td,
        p_fa=p_fa,
        p_td=p_td,
        per_step_gap=gap,
        max_gap=max_gap,
        stealthy=stealthy,
        stealthy_per_step=bool(np.isfinite(max_gap) and max_gap <= epsilon),
        epsilon=epsilon,
        nominal_runs=int(nominal.shape[0]),
        attacked_runs=int(attacked.shape[0]),
    )


def effectiveness(trace: np.ndarray, alpha: float) -> Tuple[bool, Optional[int]]:
    """
    Whether a deviation trace ever reaches alpha, and the first step it does

    Args:
        trace: (T, k) relative positions or (T,) distances
        alpha: deviation target in meters

    Returns:
        (effective, first crossing step or None)
    """
    if alpha <= 0:
        raise ValueError(f"alpha must be positive, got {alpha}")
    trace = np.asarray(trace, dtype=float)
    distances = np.linalg.norm(trace, axis=1) if trace.ndim == 2 else np.abs(trace)
    hits = np.flatnonzero(distances >= alpha)
    if hits.size == 0:
        return False, None
    return True, int(hits[0])
