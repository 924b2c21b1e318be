"""
Monte Carlo experiments: seeded batches of runs, alarm-rate statistics and
attack effectiveness
"""

from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from config import DETECTOR_NAMES, get_logger
from config.scenario import ScenarioConfig
from detectors.calibration import DetectorCalibration
from detectors.evaluation import AlarmStats, alarm_rates, effectiveness, evaluate_stealthiness
from detectors.recurrent import RecurrentDetectorModel
from harness.simulation import RunRecord, run_scenario

logger = get_logger("drone_fdi.harness.montecarlo")

Job = Tuple[int, ScenarioConfig, int, Optional[DetectorCalibration], Optional[RecurrentDetectorModel]]


def _run_job(job: Job) -> Tuple[int, RunRecord]:
    index, config, seed, calibration, recurrent_model = job
    return index, run_scenario(config, seed, calibration, recurrent_model, run_index=index)


def run_batch(config: ScenarioConfig, seeds: Sequence[int], calibration: Optional[DetectorCalibration] = None,
              recurrent_model: Optional[RecurrentDetectorModel] = None,
              workers: Optional[int] = None) -> List[RunRecord]:
    """
    Run one scenario for each seed, in parallel when workers > 1

    Records come back in seed order whatever the completion order was.
    """
    workers = config.harness.workers if workers is None else workers
    jobs = [(i, config, int(seed), calibration, recurrent_model) for i, seed in enumerate(seeds)]
    if workers <= 1 or len(jobs) <= 1:
        results = [_run_job(job) for job in jobs]
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_run_job, jobs))
    results.sort(key=lambda item: item[0])
    return [record for _, record in results]


def verdict_matrix(records: Sequence[RunRecord], detector: str, length: int,
                   require_attack: bool) -> Tuple[np.ndarray, np.ndarray]:
    """(runs, length) alarms and validity mask, each run aligned at its window start"""
    alarms = np.zeros((len(records), length), dtype=bool)
    mask = np.zeros((len(records), length), dtype=bool)
    for i, record in enumerate(records):
        start = record.window_start()
        if start is None:
            logger.warning(f"Run seed={record.seed} never reached the evaluated phase; excluded")
            continue
        alarms[i], mask[i] = record.verdict_window(detector, start, length, require_attack)
    return alarms, mask


@dataclass
class MonteCarloReport:
    """
    Aggregate statistics of a batch

    per_step_fa / p_fa come from the nominal runs (the paired nominal runs
    when the batch is attacked). stats holds the stealthiness comparison
    per detector and is empty for nominal batches.
    """

    scenario: str
    mission: str
    seeds: List[int]
    window_steps: int
    attacked: bool
    attack_mode: Optional[str]
    alpha: float
    epsilon: float
    per_step_fa: Dict[str, np.ndarray]
    p_fa: Dict[str, float]
    stats: Dict[str, AlarmStats]
    effective: np.ndarray
    first_crossing: List[Optional[int]]
    peak_separation: np.ndarray
    final_separation: np.ndarray
    stop_reasons: List[Optional[str]]
    attack_windows: List[Tuple[Optional[int], Optional[int]]] = field(default_factory=list)

    @property
    def n_runs(self) -> int:
        return len(self.seeds)

    @property
    def effective_fraction(self) -> float:
        return float(self.effective.mean()) if self.effective.size else float("nan")

    @property
    def mean_peak_separation(self) -> float:
        finite = self.peak_separation[np.isfinite(self.peak_separation)]
        return float(finite.mean()) if finite.size else float("nan")

    @property
    def stealthy(self) -> Optional[bool]:
        if not self.stats:
            return None
        return all(s.stealthy for s in self.stats.values())

    @property
    def stealthy_per_step(self) -> Optional[bool]:
        if not self.stats:
            return None
        return all(s.stealthy_per_step for s in self.stats.values())

    def summary(self) -> dict:
        """Machine-readable summary block"""
        detectors = {}
        for name in self.p_fa:
            entry = {"p_fa": self.p_fa[name]}
            if name in self.stats:
                entry.update(self.stats[name].summary())
            detectors[name] = entry
        return {
            "scenario": self.scenario,
            "mission": self.mission,
            "runs": self.n_runs,
            "seeds": list(self.seeds),
            "window_steps": self.window_steps,
            "attacked": self.attacked,
            "attack_mode": self.attack_mode,
            "epsilon": self.epsilon,
            "epsilon_stealthy": self.stealthy,
            "epsilon_stealthy_per_step": self.stealthy_per_step,
            "alpha": self.alpha,
            "alpha_effective_fraction": self.effective_fraction,
            "mean_peak_separation": self.mean_peak_separation,
            "detectors": detectors,
        }


def _effectiveness_columns(records: Sequence[RunRecord], alpha: float):
    effective, first, peak, final = [], [], [], []
    for record in records:
        trace = record.effectiveness_trace()
        hit, crossing = effectiveness(trace, alpha) if trace.size else (False, None)
        effective.append(hit)
        first.append(crossing)
        peak.append(float(trace.max()) if trace.size else float("nan"))
        final.append(float(record.separation[-1]) if len(record) else float("nan"))
    return np.array(effective, dtype=bool), first, np.array(peak), np.array(final)


def build_report(config: ScenarioConfig, nominal: Sequence[RunRecord],
                 attacked: Optional[Sequence[RunRecord]] = None) -> MonteCarloReport:
    """Alarm statistics and effectiveness from already simulated runs"""
    window = config.evaluation.window_steps
    epsilon = config.evaluation.epsilon
    per_step_fa: Dict[str, np.ndarray] = {}
    p_fa: Dict[str, float] = {}
    stats: Dict[str, AlarmStats] = {}

    for name in DETECTOR_NAMES:
        if name not in config.detectors.enabled:
            continue
        nominal_alarms, nominal_mask = verdict_matrix(nominal, name, window, require_attack=False)
        if not nominal_mask.any():
            logger.warning(f"Detector {name} produced no scores in the nominal runs")
            continue
        per_step_fa[name], p_fa[name] = alarm_rates(nominal_alarms, nominal_mask)
        if attacked:
            attacked_alarms, attacked_mask = verdict_matrix(attacked, name, window, require_attack=True)
            stats[name] = evaluate_stealthiness(nominal_alarms, attacked_alarms, epsilon, nominal_mask, attacked_mask)
            logger.info(f"{name}: p_fa={stats[name].p_fa:.4f} p_td={stats[name].p_td:.4f} "
                        f"stealthy={stats[name].stealthy}")

    evaluated = attacked if attacked else nominal
    effective, first, peak, final = _effectiveness_columns(evaluated, config.attack.alpha)
    return MonteCarloReport(
        scenario=config.name,
        mission=config.mission.value,
        seeds=[r.seed for r in evaluated],
        window_steps=window,
        attacked=bool(attacked),
        attack_mode=config.attack.mode if attacked else None,
        alpha=config.attack.alpha,
        epsilon=epsilon,
        per_step_fa=per_step_fa,
        p_fa=p_fa,
        stats=stats,
        effective=effective,
        first_crossing=first,
        peak_separation=peak,
        final_separation=final,
        stop_reasons=[r.stop_reason for r in evaluated],
        attack_windows=[(r.attack_start_step, r.attack_stop_step) for r in evaluated],
    )


def monte_carlo(config: ScenarioConfig, n_runs: int, calibration: Optional[DetectorCalibration] = None,
                recurrent_model: Optional[RecurrentDetectorModel] = None,
                workers: Optional[int] = None) -> Tuple[MonteCarloReport, List[RunRecord], List[RunRecord]]:
    """
    Run n seeded missions (seeds config.seed + i) and aggregate them

    With an attack configured, the same seeds are also run with the attack
    disabled and those runs provide p_FA.

    Returns:
        (report, nominal records, attacked records)

    Raises:
        ValueError: n_runs < 1
        SimulationDivergenceError: a run diverged; carries its run index
    """
    if n_runs < 1:
        raise ValueError(f"n_runs must be at least 1, got {n_runs}")
    seeds = [config.seed + i for i in range(n_runs)]
    logger.info(f"Monte Carlo: {n_runs} runs of {config.name} (attack {'on' if config.attack.enabled else 'off'})")

    attacked: List[RunRecord] = []
    if config.attack.enabled:
        attacked = run_batch(config, seeds, calibration, recurrent_model, workers)
        nominal = run_batch(config.nominal(), seeds, calibration, recurrent_model, workers)
    else:
        nominal = run_batch(config, seeds, calibration, recurrent_model, workers)
    report = build_report(config, nominal, attacked or None)
    return report, nominal, attacked
