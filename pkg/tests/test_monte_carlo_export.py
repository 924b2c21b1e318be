import json

import numpy as np
import pandas as pd
import pytest

from harness.export import (
    export_record,
    export_report,
    read_record,
    record_columns,
    report_rates_frame,
)
from harness.monte_carlo import build_report, monte_carlo, run_batch, verdict_matrix
from harness.simulation import RunRecorder, run_scenario


def _assert_records_equal(a, b):
    meta_a, meta_b = a.metadata(), b.metadata()
    meta_a.pop("run_index")
    meta_b.pop("run_index")
    assert meta_a == meta_b
    for name in ("step", "phase", "true_state", "estimate", "attacker_estimate", "deviation", "command",
                 "pc_true", "pc_shown", "pc_seen", "visible", "marker", "separation", "residual_dim",
                 "attack_active", "saturated"):
        np.testing.assert_array_equal(getattr(a, name), getattr(b, name), err_msg=name)
    for name in a.scores:
        np.testing.assert_array_equal(a.scores[name], b.scores[name])
        np.testing.assert_array_equal(a.alarms[name], b.alarms[name])


class TestBatches:
    def test_batch_order_follows_seeds(self, short_config):
        forward = run_batch(short_config, [4, 5])
        backward = run_batch(short_config, [5, 4])
        assert [r.seed for r in forward] == [4, 5]
        _assert_records_equal(forward[0], backward[1])
        assert forward[1].run_index == 1
        assert backward[1].run_index == 1

    @pytest.mark.slow
    def test_worker_pool_matches_sequential(self, short_config):
        sequential = run_batch(short_config, [1, 2, 3], workers=1)
        pooled = run_batch(short_config, [1, 2, 3], workers=2)
        for a, b in zip(sequential, pooled):
            _assert_records_equal(a, b)

    def test_single_run(self, short_config):
        report, nominal, attacked = monte_carlo(short_config, 1)
        assert report.n_runs == 1
        assert report.seeds == [short_config.seed]
        assert len(nominal) == 1
        assert attacked == []
        assert not report.attacked
        assert report.stealthy is None

    def test_zero_runs_rejected(self, short_config):
        with pytest.raises(ValueError):
            monte_carlo(short_config, 0)

    def test_runs_without_window_are_masked(self, short_config):
        records = run_batch(short_config, [0])
        # the short run never reaches cruise altitude
        assert records[0].window_start() is None
        alarms, mask = verdict_matrix(records, "chi2", 20, require_attack=False)
        assert alarms.shape == (1, 20)
        assert not mask.any()

    def test_attacked_batch_pairs_nominal_seeds(self, short_attack_config):
        short = short_attack_config.with_overrides({"evaluation": {"window_steps": 50}})
        report, nominal, attacked = monte_carlo(short, 2)
        assert [r.seed for r in nominal] == [r.seed for r in attacked]
        assert all(not r.attack_active.any() for r in nominal)
        assert all(r.attack_start_step == 10 for r in attacked)
        assert report.attacked
        assert report.attack_mode == "consistent"
        assert report.effective.shape == (2,)

        summary = report.summary()
        for key in ("scenario", "mission", "runs", "seeds", "window_steps", "attacked", "epsilon",
                    "epsilon_stealthy", "alpha", "alpha_effective_fraction", "mean_peak_separation", "detectors"):
            assert key in summary
        json.dumps(summary)

    def test_nominal_batch_has_no_window(self, short_config):
        records = run_batch(short_config, [0, 1])
        report = build_report(short_config, records)
        # nominal short runs stay in Ascend, so there is nothing to score
        assert report.p_fa == {}
        assert report.summary()["detectors"] == {}


class TestExport:
    def test_csv_round_trip(self, tmp_path, short_attack_config):
        record = run_scenario(short_attack_config, seed=1)
        paths = export_record(record, tmp_path, alpha=short_attack_config.attack.alpha)
        assert paths["csv"].exists() and paths["text"].exists()
        _assert_records_equal(read_record(paths["csv"]), record)

        summary = json.loads(paths["json"].read_text())
        assert summary["attack_start_step"] == 10
        assert summary["alpha"] == short_attack_config.attack.alpha

    def test_column_order(self, tmp_path, short_config):
        record = run_scenario(short_config, seed=0)
        paths = export_record(record, tmp_path)
        frame = pd.read_csv(paths["csv"])
        assert list(frame.columns) == record_columns()
        assert len(frame) == len(record)

    def test_empty_record_writes_header_only(self, tmp_path, short_config):
        record = RunRecorder(short_config, seed=0).build()
        paths = export_record(record, tmp_path, prefix="empty")
        lines = paths["csv"].read_text().strip().splitlines()
        assert lines == [",".join(record_columns())]
        assert len(read_record(paths["csv"])) == 0

    def test_missing_summary_raises(self, tmp_path, short_config):
        record = RunRecorder(short_config, seed=0).build()
        paths = export_record(record, tmp_path)
        paths["json"].unlink()
        with pytest.raises(OSError):
            read_record(paths["csv"])

    def test_report_files(self, tmp_path, short_attack_config):
        short = short_attack_config.with_overrides({"evaluation": {"window_steps": 50}})
        report, _, _ = monte_carlo(short, 1)
        paths = export_report(report, tmp_path)
        for key in ("rates", "runs", "json", "text"):
            assert paths[key].exists()
        rates = report_rates_frame(report)
        assert len(rates) == 50
        runs = pd.read_csv(paths["runs"])
        assert list(runs["seed"]) == report.seeds
        assert json.loads(paths["json"].read_text())["runs"] == 1
