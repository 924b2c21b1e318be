from dataclasses import dataclass, field
from typing import List, Optional, Tuple

import numpy as np

from config import logger
from config.scenario import ScenarioConfig
from detectors.chi_square import normalized_residual
from detectors.recurrent import RESIDUAL_WIDTH, whiten
from harness.simulation import FlightDecision, SensorPacket, run_scenario

# calibration seeds start here so they never overlap the Monte Carlo seeds
DEFAULT_SEED_OFFSET = 100000


@dataclass
class NominalTraces:
    """Residual streams of attack-free runs, one entry per run"""

    seeds: List[int] = field(default_factory=list)
    whitened: List[np.ndarray] = field(default_factory=list)
    scores: List[np.ndarray] = field(default_factory=list)
    dofs: List[np.ndarray] = field(default_factory=list)

    @property
    def n_runs(self) -> int:
        return len(self.seeds)

    @property
    def n_steps(self) -> int:
        return int(sum(len(s) for s in self.scores))

    def score_traces(self) -> List[Tuple[np.ndarray, np.ndarray]]:
        return list(zip(self.scores, self.dofs))


class _TraceCollector:
    def __init__(self):
        self.whitened: List[np.ndarray] = []
        self.scores: List[float] = []
        self.dofs: List[int] = []

    def __call__(self, packet: SensorPacket, decision: FlightDecision) -> None:
        residual = decision.residual
        self.whitened.append(whiten(residual.residual, residual.covariance, RESIDUAL_WIDTH))
        self.scores.append(normalized_residual(residual.residual, residual.covariance))
        self.dofs.append(residual.dim)


class NominalTraceProvider:
    """
    Runs attack-free missions and collects the detector inputs of every step

    The traces feed detector calibration: normalized residual scores for the
    CUSUM threshold search, whitened residuals for recurrent training.
    """

    def __init__(self, config: ScenarioConfig, seed_offset: int = DEFAULT_SEED_OFFSET):
        self.logger = logger.getChild("nominal_traces")
        # detectors are not needed to read residuals
        self.config = config.nominal().with_overrides({"detectors": {"enabled": []}})
        self.seed_offset = seed_offset

    def seeds(self, n_runs: int) -> List[int]:
        return [self.config.seed + self.seed_offset + i for i in range(n_runs)]

    def collect(self, n_runs: int, seeds: Optional[List[int]] = None) -> NominalTraces:
        """
        Simulate n_runs nominal missions

        Raises:
            ValueError: n_runs < 1
            SimulationDivergenceError: a run diverged
        """
        if n_runs < 1:
            raise ValueError(f"n_runs must be at least 1, got {n_runs}")
        seeds = self.seeds(n_runs) if seeds is None else list(seeds)
        traces = NominalTraces()
        for index, seed in enumerate(seeds):
            collector = _TraceCollector()
            run_scenario(self.config, seed, run_index=index, observer=collector)
            traces.seeds.append(seed)
            traces.whitened.append(np.array(collector.whitened, dtype=float).reshape(-1, RESIDUAL_WIDTH))
            traces.scores.append(np.array(collector.scores, dtype=float))
            traces.dofs.append(np.array(collector.dofs, dtype=np.int64))
        self.logger.info(f"Collected {traces.n_steps} nominal residuals from {traces.n_runs} runs")
        return traces
