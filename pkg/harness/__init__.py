"""
Harness package: closed-loop runs, Monte Carlo batches and CSV export
"""

from .simulation import (
    AttackSnapshot,
    FlightDecision,
    FlightStack,
    PlantSide,
    RunRecord,
    RunRecorder,
    SensorPacket,
    build_attack_engine,
    build_detectors,
    run_scenario,
)
from .monte_carlo import MonteCarloReport, build_report, monte_carlo, run_batch, verdict_matrix
from .export import export_record, export_report, read_record, record_columns, record_to_frame
