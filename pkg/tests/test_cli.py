import json

import pytest

import main as cli
from tests.scenarios import SMALL_CAMERA
from utils.errors import SimulationDivergenceError


@pytest.fixture
def scenario_file(tmp_path):
    path = tmp_path / "short.json"
    path.write_text(json.dumps({"name": "cli_short", "duration": 1.0, "camera": SMALL_CAMERA}))
    return path


@pytest.fixture
def no_thresholds(tmp_path):
    return tmp_path / "calibration" / "thresholds.json"


def test_help_exits_cleanly(capsys):
    with pytest.raises(SystemExit) as exc:
        cli.main(["--help"])
    assert exc.value.code == 0
    assert "montecarlo" in capsys.readouterr().out


def test_usage_error_is_a_config_error():
    with pytest.raises(SystemExit) as exc:
        cli.main(["run", "--no-such-flag"])
    assert exc.value.code == cli.EXIT_CONFIG
    with pytest.raises(SystemExit) as exc:
        cli.main([])
    assert exc.value.code == cli.EXIT_CONFIG


def test_run_writes_outputs(tmp_path, scenario_file, no_thresholds, capsys):
    out = tmp_path / "out"
    code = cli.main(["run", "--config", str(scenario_file), "--thresholds", str(no_thresholds),
                     "--out", str(out), "--seed", "3"])
    assert code == cli.EXIT_OK
    assert (out / "run.csv").exists()
    summary = json.loads((out / "run_summary.json").read_text())
    assert summary["seed"] == 3
    assert summary["steps"] == 50
    assert "50 steps" in capsys.readouterr().out


def test_missing_config_file(tmp_path, no_thresholds):
    code = cli.main(["run", "--config", str(tmp_path / "absent.json"), "--thresholds", str(no_thresholds)])
    assert code == cli.EXIT_CONFIG


def test_montecarlo_rejects_zero_runs(tmp_path, scenario_file, no_thresholds):
    code = cli.main(["montecarlo", "--config", str(scenario_file), "--thresholds", str(no_thresholds),
                     "--runs", "0", "--out", str(tmp_path / "mc")])
    assert code == cli.EXIT_CONFIG


def test_montecarlo_single_run(tmp_path, scenario_file, no_thresholds):
    out = tmp_path / "mc"
    code = cli.main(["montecarlo", "--config", str(scenario_file), "--thresholds", str(no_thresholds),
                     "--runs", "1", "--workers", "1", "--out", str(out)])
    assert code == cli.EXIT_OK
    assert json.loads((out / "summary.json").read_text())["runs"] == 1


@pytest.mark.parametrize("pfa", ["0", "1", "1.5"])
def test_calibrate_rejects_pfa_outside_unit_interval(scenario_file, no_thresholds, pfa):
    code = cli.main(["calibrate", "--config", str(scenario_file), "--thresholds", str(no_thresholds),
                     "--detector", "chi2", "--pfa", pfa])
    assert code == cli.EXIT_CONFIG
    assert not no_thresholds.exists()


def test_calibrate_writes_sidecar(scenario_file, no_thresholds):
    code = cli.main(["calibrate", "--config", str(scenario_file), "--thresholds", str(no_thresholds),
                     "--detector", "chi2", "--pfa", "0.05", "--runs", "1"])
    assert code == cli.EXIT_OK
    assert json.loads(no_thresholds.read_text())["p_fa"] == 0.05


@pytest.mark.parametrize("argv", [
    ["proxy", "--listen", "nowhere", "--upstream", "127.0.0.1:9001"],
    ["plant", "--listen", "127.0.0.1:99999"],
    ["flight", "--connect", "127.0.0.1"],
])
def test_bad_addresses(argv, scenario_file, no_thresholds):
    extra = ["--config", str(scenario_file)]
    if argv[0] == "flight":
        extra += ["--thresholds", str(no_thresholds)]
    assert cli.main(argv + extra) == cli.EXIT_CONFIG


def test_divergence_exit_status(monkeypatch, scenario_file, no_thresholds, tmp_path):
    def diverge(*args, **kwargs):
        raise SimulationDivergenceError("state overflow", 12)

    monkeypatch.setattr(cli, "run_scenario", diverge)
    code = cli.main(["run", "--config", str(scenario_file), "--thresholds", str(no_thresholds),
                     "--out", str(tmp_path / "out")])
    assert code == cli.EXIT_DIVERGENCE


def test_io_error_exit_status(monkeypatch, scenario_file, no_thresholds, tmp_path):
    def unwritable(*args, **kwargs):
        raise PermissionError("read-only file system")

    monkeypatch.setattr(cli, "export_record", unwritable)
    code = cli.main(["run", "--config", str(scenario_file), "--thresholds", str(no_thresholds),
                     "--out", str(tmp_path / "out")])
    assert code == cli.EXIT_IO
