import numpy as np
import pytest
from scipy.stats import chi2

from data_providers.nominal_traces import DEFAULT_SEED_OFFSET, NominalTraceProvider
from detectors.calibration import load_calibration
from detectors.recurrent import RESIDUAL_WIDTH
from harness.calibrate import calibrate_detector

TINY_RECURRENT = {"hidden": 4, "window": 5, "epochs": 1, "batch_size": 16, "max_windows": 60}


@pytest.fixture
def traces(short_config):
    return NominalTraceProvider(short_config).collect(2)


class TestNominalTraces:
    def test_provider_strips_attack_and_detectors(self, short_attack_config):
        provider = NominalTraceProvider(short_attack_config)
        assert not provider.config.attack.enabled
        assert provider.config.detectors.enabled == []
        assert provider.seeds(2) == [short_attack_config.seed + DEFAULT_SEED_OFFSET + i for i in range(2)]

    def test_collected_shapes(self, short_config, traces):
        assert traces.n_runs == 2
        assert traces.n_steps == 2 * short_config.n_steps
        assert traces.whitened[0].shape == (short_config.n_steps, RESIDUAL_WIDTH)
        assert set(np.unique(np.concatenate(traces.dofs))) <= {12, 15}
        assert np.all(np.concatenate(traces.scores) >= 0.0)

    def test_zero_runs_rejected(self, short_config):
        with pytest.raises(ValueError):
            NominalTraceProvider(short_config).collect(0)


class TestCalibrateDetector:
    def test_chi2_thresholds_are_quantiles(self, tmp_path, short_config, traces):
        sidecar = tmp_path / "thresholds.json"
        result = calibrate_detector(short_config, "chi2", 0.05, thresholds_file=sidecar, traces=traces)
        assert set(result.calibration.chi2_thresholds) == {12, 15}
        assert result.calibration.chi2_thresholds[15] == pytest.approx(chi2.ppf(0.95, 15))
        assert 0.0 <= result.empirical_rate <= 1.0
        assert load_calibration(sidecar) == result.calibration
        assert result.summary()["runs"] == 2

    def test_cusum_merges_into_existing_sidecar(self, tmp_path, short_config, traces):
        sidecar = tmp_path / "thresholds.json"
        calibrate_detector(short_config, "chi2", 0.05, thresholds_file=sidecar, traces=traces)
        result = calibrate_detector(short_config, "cusum", 0.05, thresholds_file=sidecar, traces=traces)
        stored = load_calibration(sidecar)
        assert stored.chi2_thresholds
        assert stored.cusum_threshold == result.calibration.cusum_threshold
        assert stored.cusum_drift == short_config.detectors.cusum_drift
        assert result.empirical_rate <= 0.05

    def test_new_false_alarm_rate_replaces_sidecar(self, tmp_path, short_config, traces):
        sidecar = tmp_path / "thresholds.json"
        calibrate_detector(short_config, "chi2", 0.05, thresholds_file=sidecar, traces=traces)
        calibrate_detector(short_config, "cusum", 0.01, thresholds_file=sidecar, traces=traces)
        stored = load_calibration(sidecar)
        assert stored.p_fa == 0.01
        assert stored.chi2_thresholds == {}

    def test_recurrent_model_is_written_next_to_sidecar(self, tmp_path, short_config, traces):
        config = short_config.with_overrides({"detectors": {"recurrent": TINY_RECURRENT}})
        sidecar = tmp_path / "thresholds.json"
        result = calibrate_detector(config, "recurrent", 0.05, thresholds_file=sidecar, traces=traces)
        assert result.empirical_rate is None
        model_file = tmp_path / result.calibration.recurrent_model_file
        assert model_file.exists()
        loaded = load_calibration(sidecar).load_recurrent(tmp_path)
        assert loaded.threshold == pytest.approx(result.model.threshold)
        assert result.calibration.recurrent_threshold == result.model.threshold

    @pytest.mark.parametrize("detector, p_fa", [("lstm", 0.05), ("chi2", 0.0), ("cusum", 1.0)])
    def test_rejects_bad_arguments(self, tmp_path, short_config, detector, p_fa):
        with pytest.raises(ValueError):
            calibrate_detector(short_config, detector, p_fa, thresholds_file=tmp_path / "t.json")
