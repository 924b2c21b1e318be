"""
CSV and summary output for runs and Monte Carlo reports

Floats are written with 17 significant digits and read back with the
round-trip parser, so an exported record re-imports bit for bit.
"""

import os
from pathlib import Path
from typing import Dict, List, Optional, Union

import numpy as np
import pandas as pd

from config import DETECTOR_NAMES, get_logger
from harness.monte_carlo import MonteCarloReport
from harness.simulation import COMMAND_WIDTH, RunRecord
from utils.file_utils import ensure_dir_exists, load_json_file, save_json_file
from vehicle.dynamics import STATE_DIM

logger = get_logger("drone_fdi.harness.export")

FLOAT_FORMAT = "%.17g"
XYZ = ("x", "y", "z")

PathLike = Union[str, Path]


def _state_columns(prefix: str) -> List[str]:
    return [f"{prefix}_x{i}" for i in range(STATE_DIM)]


def record_columns(detectors=DETECTOR_NAMES) -> List[str]:
    """Fixed column order of a run CSV"""
    columns = ["step", "time", "phase"]
    columns += _state_columns("true") + _state_columns("est") + _state_columns("att")
    columns += [f"s{i}" for i in range(STATE_DIM)]
    columns += [f"u{i}" for i in range(COMMAND_WIDTH)]
    for prefix in ("pc_true", "pc_shown", "pc_seen", "marker"):
        columns += [f"{prefix}_{axis}" for axis in XYZ]
    columns += ["visible", "separation", "residual_dim"]
    for name in detectors:
        columns += [f"{name}_score", f"{name}_alarm"]
    columns += ["attack_active", "saturated"]
    return columns


def record_to_frame(record: RunRecord) -> pd.DataFrame:
    data: Dict[str, np.ndarray] = {
        "step": record.step,
        "time": record.time,
        "phase": record.phase,
    }
    for prefix, block in (("true", record.true_state), ("est", record.estimate), ("att", record.attacker_estimate)):
        for i, column in enumerate(_state_columns(prefix)):
            data[column] = block[:, i]
    for i in range(STATE_DIM):
        data[f"s{i}"] = record.deviation[:, i]
    for i in range(COMMAND_WIDTH):
        data[f"u{i}"] = record.command[:, i]
    for prefix, block in (("pc_true", record.pc_true), ("pc_shown", record.pc_shown),
                          ("pc_seen", record.pc_seen), ("marker", record.marker)):
        for i, axis in enumerate(XYZ):
            data[f"{prefix}_{axis}"] = block[:, i]
    data["visible"] = record.visible
    data["separation"] = record.separation
    data["residual_dim"] = record.residual_dim
    for name in record.scores:
        data[f"{name}_score"] = record.scores[name]
        data[f"{name}_alarm"] = record.alarms[name]
    data["attack_active"] = record.attack_active
    data["saturated"] = record.saturated
    return pd.DataFrame(data, columns=record_columns(list(record.scores)))


def _bool_column(frame: pd.DataFrame, column: str) -> np.ndarray:
    values = frame[column]
    if values.dtype == bool:
        return values.to_numpy()
    return values.astype(str).str.lower().eq("true").to_numpy()


def record_from_frame(frame: pd.DataFrame, metadata: dict) -> RunRecord:
    """Rebuild a RunRecord from its CSV table and summary metadata"""
    detectors = [c[:-len("_score")] for c in frame.columns if c.endswith("_score")]

    def block(columns: List[str]) -> np.ndarray:
        return frame[columns].to_numpy(dtype=float).reshape(len(frame), len(columns))

    return RunRecord(
        seed=int(metadata["seed"]),
        mission=str(metadata["mission"]),
        dt=float(metadata["dt"]),
        step=frame["step"].to_numpy(dtype=np.int64),
        phase=frame["phase"].to_numpy(dtype=np.int64),
        true_state=block(_state_columns("true")),
        estimate=block(_state_columns("est")),
        attacker_estimate=block(_state_columns("att")),
        deviation=block([f"s{i}" for i in range(STATE_DIM)]),
        command=block([f"u{i}" for i in range(COMMAND_WIDTH)]),
        pc_true=block([f"pc_true_{a}" for a in XYZ]),
        pc_shown=block([f"pc_shown_{a}" for a in XYZ]),
        pc_seen=block([f"pc_seen_{a}" for a in XYZ]),
        visible=_bool_column(frame, "visible"),
        marker=block([f"marker_{a}" for a in XYZ]),
        separation=frame["separation"].to_numpy(dtype=float),
        residual_dim=frame["residual_dim"].to_numpy(dtype=np.int64),
        scores={name: frame[f"{name}_score"].to_numpy(dtype=float) for name in detectors},
        alarms={name: _bool_column(frame, f"{name}_alarm") for name in detectors},
        attack_active=_bool_column(frame, "attack_active"),
        saturated=_bool_column(frame, "saturated"),
        track_entry_step=metadata.get("track_entry_step"),
        attack_start_step=metadata.get("attack_start_step"),
        attack_stop_step=metadata.get("attack_stop_step"),
        stop_reason=metadata.get("stop_reason"),
        completed=bool(metadata.get("completed", False)),
        terminated_by=metadata.get("terminated_by", "duration"),
        run_index=metadata.get("run_index"),
    )


def run_summary(record: RunRecord, alpha: Optional[float] = None) -> dict:
    summary = record.metadata()
    trace = record.effectiveness_trace()
    summary["peak_separation"] = float(trace.max()) if trace.size else None
    summary["final_separation"] = float(record.separation[-1]) if len(record) else None
    summary["alarm_counts"] = {name: int(alarms.sum()) for name, alarms in record.alarms.items()}
    summary["saturated_steps"] = int(record.saturated.sum())
    if alpha is not None and trace.size:
        hit = bool(np.any(trace >= alpha))
        summary["alpha"] = alpha
        summary["alpha_effective"] = hit
    return summary


def _write_text(file_path: Path, summary: dict, title: str) -> None:
    lines = [title, "=" * len(title)]

    def emit(data: dict, indent: str = "") -> None:
        for key, value in data.items():
            if isinstance(value, dict):
                lines.append(f"{indent}{key}:")
                emit(value, indent + "  ")
            elif isinstance(value, float):
                lines.append(f"{indent}{key}: {value:.6g}")
            else:
                lines.append(f"{indent}{key}: {value}")

    emit(summary)
    with open(file_path, "w") as f:
        f.write("\n".join(lines) + "\n")


def export_record(record: RunRecord, out_dir: PathLike, prefix: str = "run",
                  alpha: Optional[float] = None) -> Dict[str, Path]:
    """
    Write <prefix>.csv (one row per step) plus <prefix>_summary.json/.txt

    Raises:
        OSError: the directory or files cannot be written
    """
    out_dir = Path(out_dir)
    ensure_dir_exists(out_dir)
    paths = {
        "csv": out_dir / f"{prefix}.csv",
        "json": out_dir / f"{prefix}_summary.json",
        "text": out_dir / f"{prefix}_summary.txt",
    }
    record_to_frame(record).to_csv(paths["csv"], index=False, float_format=FLOAT_FORMAT)
    summary = run_summary(record, alpha)
    save_json_file(paths["json"], summary, raise_errors=True)
    _write_text(paths["text"], summary, f"Run seed={record.seed} ({record.mission})")
    logger.info(f"Exported run ({len(record)} steps) to {paths['csv']}")
    return paths


def read_record(csv_path: PathLike, summary_path: Optional[PathLike] = None) -> RunRecord:
    """Load a record written by export_record"""
    csv_path = Path(csv_path)
    if summary_path is None:
        summary_path = csv_path.with_name(csv_path.stem + "_summary.json")
    metadata = load_json_file(summary_path)
    if metadata is None:
        raise OSError(f"run summary not readable: {summary_path}")
    frame = pd.read_csv(csv_path, float_precision="round_trip")
    return record_from_frame(frame, metadata)


def report_rates_frame(report: MonteCarloReport) -> pd.DataFrame:
    """Per-step mean alarm rates: nominal (fa) and, for attacked batches, td and their gap"""
    data = {"step": np.arange(report.window_steps)}
    for name, per_step in report.per_step_fa.items():
        data[f"{name}_fa"] = per_step
        if name in report.stats:
            data[f"{name}_td"] = report.stats[name].per_step_td
            data[f"{name}_gap"] = report.stats[name].per_step_gap
    return pd.DataFrame(data)


def report_runs_frame(report: MonteCarloReport) -> pd.DataFrame:
    starts = [w[0] for w in report.attack_windows] or [None] * report.n_runs
    stops = [w[1] for w in report.attack_windows] or [None] * report.n_runs
    return pd.DataFrame({
        "run": np.arange(report.n_runs),
        "seed": report.seeds,
        "effective": report.effective,
        "first_crossing": pd.array(report.first_crossing, dtype="Int64"),
        "peak_separation": report.peak_separation,
        "final_separation": report.final_separation,
        "attack_start_step": pd.array(starts, dtype="Int64"),
        "attack_stop_step": pd.array(stops, dtype="Int64"),
        "stop_reason": report.stop_reasons,
    })


def export_report(report: MonteCarloReport, out_dir: PathLike) -> Dict[str, Path]:
    """
    Write montecarlo_rates.csv, montecarlo_runs.csv and summary.json/.txt

    Raises:
        OSError: the directory or files cannot be written
    """
    out_dir = Path(out_dir)
    ensure_dir_exists(out_dir)
    paths = {
        "rates": out_dir / "montecarlo_rates.csv",
        "runs": out_dir / "montecarlo_runs.csv",
        "json": out_dir / "summary.json",
        "text": out_dir / "summary.txt",
    }
    report_rates_frame(report).to_csv(paths["rates"], index=False, float_format=FLOAT_FORMAT)
    report_runs_frame(report).to_csv(paths["runs"], index=False, float_format=FLOAT_FORMAT)
    summary = report.summary()
    save_json_file(paths["json"], summary, raise_errors=True)
    _write_text(paths["text"], summary, f"Monte Carlo: {report.scenario} ({report.n_runs} runs)")
    logger.info(f"Exported Monte Carlo report to {os.fspath(out_dir)}")
    return paths
