"""
Closed-loop Monte Carlo checks of detector calibration and attack outcomes
"""

import numpy as np
import pytest

from config import SCENARIOS_DIR
from config.scenario import load_scenario
from data_providers.nominal_traces import NominalTraceProvider
from detectors import RecurrentHyperparams, train_recurrent
from harness.monte_carlo import build_report, monte_carlo, run_batch
from tests.scenarios import small_scenario

RUNS = 10
WORKERS = 4
CHI2_ONLY = {"enabled": ["chi2"]}


def _scenario(name, **overrides):
    return load_scenario(SCENARIOS_DIR / f"{name}.json", overrides)


def _median_crossing(report):
    hits = [step for step in report.first_crossing if step is not None]
    assert hits, "no run reached alpha"
    return float(np.median(hits))


@pytest.mark.slow
def test_chi2_nominal_alarm_rate_matches_target():
    config = small_scenario(duration=40.0, detectors=CHI2_ONLY)
    records = run_batch(config, range(55), workers=WORKERS)
    scores = np.concatenate([record.scores["chi2"] for record in records])
    alarms = np.concatenate([record.alarms["chi2"] for record in records])
    valid = np.isfinite(scores)
    assert valid.sum() >= 100_000
    assert alarms[valid].mean() == pytest.approx(config.detectors.p_fa, abs=0.003)


@pytest.mark.slow
def test_consistent_attack_is_stealthy():
    config = _scenario("gvt_attack", duration=30.0, detectors={"enabled": ["chi2", "recurrent"]})
    hyper = RecurrentHyperparams(hidden=8, window=10, epochs=3, max_windows=2000)
    traces = NominalTraceProvider(config).collect(4)
    model = train_recurrent(traces.whitened, hyper, p_fa=config.detectors.p_fa)

    report, _, _ = monte_carlo(config, RUNS, recurrent_model=model, workers=WORKERS)
    for name in ("chi2", "recurrent"):
        stats = report.stats[name]
        assert stats.p_td - stats.p_fa <= config.evaluation.epsilon, f"{name}: {stats.summary()}"
        assert stats.stealthy


@pytest.mark.slow
def test_gvt_attack_pulls_drone_off_the_vehicle():
    config = _scenario("gvt_attack", detectors=CHI2_ONLY)
    report, _, _ = monte_carlo(config, RUNS, workers=WORKERS)
    assert np.mean(report.peak_separation >= 1.0) >= 0.9
    assert report.mean_peak_separation >= 2.0


@pytest.mark.slow
def test_vtol_attack_lands_away_from_the_marker():
    config = _scenario("vtol_attack", detectors=CHI2_ONLY)
    report, _, _ = monte_carlo(config, RUNS, workers=WORKERS)
    assert np.mean(report.final_separation >= 0.5) >= 0.9


@pytest.mark.slow
def test_larger_initial_deviation_is_faster_and_no_quieter():
    base = _scenario("gvt_attack", detectors=CHI2_ONLY, attack={"alpha": 1.0})
    seeds = [base.seed + i for i in range(RUNS)]
    nominal = run_batch(base.nominal(), seeds, workers=WORKERS)
    reports = []
    for roll in (0.01, 0.05, 0.1):
        s0 = [0.0] * 12
        s0[6] = roll
        config = base.with_overrides({"attack": {"s0": s0}})
        reports.append(build_report(config, nominal, run_batch(config, seeds, workers=WORKERS)))

    p_td = [report.stats["chi2"].p_td for report in reports]
    assert all(later >= earlier - 0.02 for earlier, later in zip(p_td, p_td[1:])), p_td
    crossings = [_median_crossing(report) for report in reports]
    assert crossings[-1] <= crossings[0], crossings


@pytest.mark.slow
def test_image_only_detection_grows_with_alpha():
    base = _scenario("gvt_image_only", detectors=CHI2_ONLY)
    seeds = [base.seed + i for i in range(RUNS)]
    nominal = run_batch(base.nominal(), seeds, workers=WORKERS)
    p_td = []
    for alpha in (0.2, 0.4, 0.6, 0.8, 1.0):
        config = base.with_overrides({"attack": {"alpha": alpha}})
        report = build_report(config, nominal, run_batch(config, seeds, workers=WORKERS))
        p_td.append(report.stats["chi2"].p_td)

    assert p_td[-1] >= 0.9
    assert p_td[0] <= 0.2
    assert all(later >= earlier - 0.02 for earlier, later in zip(p_td, p_td[1:])), p_td
