import dataclasses
import os

import pytest

from harness.monte_carlo import build_report
from harness.simulation import run_scenario
from visualizers import AlarmVisualizer, TrajectoryVisualizer


@pytest.fixture
def windowed_records(short_config):
    # pretend tracking started early so the short runs have an evaluation window
    return [dataclasses.replace(run_scenario(short_config, seed=s), track_entry_step=5) for s in (0, 1)]


def test_alarm_charts(tmp_path, short_config, windowed_records):
    config = short_config.with_overrides({"evaluation": {"window_steps": 50}})
    report = build_report(config, windowed_records)
    assert set(report.p_fa) == {"chi2", "cusum"}
    assert all(0.0 <= rate <= 1.0 for rate in report.p_fa.values())

    paths = AlarmVisualizer(str(tmp_path)).generate_all_visualizations(report, windowed_records)
    assert len(paths) == 3
    assert all(os.path.exists(p) and p.endswith(".svg") for p in paths)


def test_alarm_chart_without_rates_is_skipped(tmp_path, short_config):
    report = build_report(short_config, [run_scenario(short_config, seed=0)])
    assert AlarmVisualizer(str(tmp_path)).generate_alarm_rate_chart(report) is None


def test_trajectory_charts(tmp_path, short_attack_config):
    attacked = run_scenario(short_attack_config, seed=2)
    nominal = run_scenario(short_attack_config.nominal(), seed=2)
    paths = TrajectoryVisualizer(str(tmp_path)).generate_all_visualizations(
        attacked, nominal, short_attack_config.attack.alpha)
    assert [os.path.basename(p) for p in paths] == ["trajectory_xy.svg", "separation.svg"]
