#!/usr/bin/env python3
"""
Command-line front end for Drone FDI Lab

    run         one mission, per-step CSV plus summary
    montecarlo  seeded batch, alarm rates and attack effectiveness
    calibrate   detector thresholds from nominal runs
    proxy       man-in-the-middle between the plant and the flight stack
    plant       simulator endpoint of a split-process run
    flight      flight-stack endpoint of a split-process run

Exit status: 0 success, 1 configuration or validation error, 2 simulation
divergence, 3 I/O or protocol error.
"""

import argparse
import logging
import sys
from pathlib import Path
from typing import List, Optional

from config import DEFAULT_THRESHOLDS_FILE, DETECTOR_NAMES, GVT_SCENARIO_FILE, OUTPUT_DIR, logger, set_console_level
from config.scenario import ScenarioConfig, load_scenario
from detectors.calibration import load_calibration
from harness.calibrate import DEFAULT_CALIBRATION_RUNS, calibrate_detector
from harness.export import export_record, export_report
from harness.monte_carlo import monte_carlo
from harness.simulation import build_attack_engine, run_scenario
from telemetry.endpoints import FlightEndpoint, PlantEndpoint, connect, listen_once, parse_address
from telemetry.proxy import PROXY_MODES, serve_proxy
from utils.errors import ConfigError, ProtocolError, SimulationDivergenceError, TrainingDivergenceError
from utils.file_utils import ensure_dir_exists, save_json_file
from visualizers import AlarmVisualizer, TrajectoryVisualizer

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_DIVERGENCE = 2
EXIT_IO = 3


class CliParser(argparse.ArgumentParser):
    """ArgumentParser whose usage errors exit with the configuration status"""

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_CONFIG, f"{self.prog}: error: {message}\n")


def _add_scenario_args(parser: argparse.ArgumentParser, with_seed: bool = True) -> None:
    parser.add_argument("--config", type=Path, default=GVT_SCENARIO_FILE,
                        help=f"scenario JSON file (default: {GVT_SCENARIO_FILE.name})")
    if with_seed:
        parser.add_argument("--seed", type=int, default=None, help="rng seed, overrides the scenario seed")


def _add_detector_args(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--thresholds", type=Path, default=DEFAULT_THRESHOLDS_FILE,
                        help="calibration sidecar written by `calibrate`")


def build_parser() -> CliParser:
    parser = CliParser(prog="main.py", description="Stealthy false-data-injection attacks on vision-guided drones")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to the console")
    sub = parser.add_subparsers(dest="command", metavar="COMMAND", required=True)

    run = sub.add_parser("run", help="simulate one mission")
    _add_scenario_args(run)
    _add_detector_args(run)
    run.add_argument("--out", type=Path, default=OUTPUT_DIR / "run", help="output directory")
    run.add_argument("--attack", action="store_true", help="enable the scenario's attack")
    run.add_argument("--plots", action="store_true", help="write SVG trajectory plots")

    mc = sub.add_parser("montecarlo", help="seeded batch of missions")
    _add_scenario_args(mc)
    _add_detector_args(mc)
    mc.add_argument("--runs", type=int, default=10, help="number of runs, seeds seed..seed+runs-1 (default: 10)")
    mc.add_argument("--workers", type=int, default=None, help="worker processes (default: scenario setting)")
    mc.add_argument("--out", type=Path, default=OUTPUT_DIR / "montecarlo", help="output directory")
    mc.add_argument("--attack", action="store_true", help="enable the scenario's attack")
    mc.add_argument("--plots", action="store_true", help="write SVG alarm-rate and trajectory plots")

    cal = sub.add_parser("calibrate", help="detector thresholds from nominal runs")
    _add_scenario_args(cal, with_seed=False)
    _add_detector_args(cal)
    cal.add_argument("--detector", choices=DETECTOR_NAMES, required=True, help="detector to calibrate")
    cal.add_argument("--pfa", type=float, default=None, help="target false-alarm rate in (0, 1) (default: scenario p_fa)")
    cal.add_argument("--runs", type=int, default=DEFAULT_CALIBRATION_RUNS,
                     help=f"nominal runs to draw traces from (default: {DEFAULT_CALIBRATION_RUNS})")

    proxy = sub.add_parser("proxy", help="man-in-the-middle between plant and flight stack")
    _add_scenario_args(proxy, with_seed=False)
    proxy.add_argument("--listen", required=True, help="host:port the flight stack connects to")
    proxy.add_argument("--upstream", required=True, help="host:port of the plant")
    proxy.add_argument("--mode", choices=PROXY_MODES, default="pass", help="pass bytes through or falsify them")
    proxy.add_argument("--out", type=Path, default=None, help="directory for the session summary")

    plant = sub.add_parser("plant", help="simulator endpoint of a split-process run")
    _add_scenario_args(plant)
    plant.add_argument("--listen", required=True, help="host:port to accept the flight stack (or proxy) on")
    plant.add_argument("--out", type=Path, default=OUTPUT_DIR / "plant", help="output directory")

    flight = sub.add_parser("flight", help="flight-stack endpoint of a split-process run")
    _add_scenario_args(flight, with_seed=False)
    _add_detector_args(flight)
    flight.add_argument("--connect", required=True, help="host:port of the plant or the proxy")
    flight.add_argument("--out", type=Path, default=OUTPUT_DIR / "flight", help="output directory")
    return parser


def _scenario(args, attack: bool = False) -> ScenarioConfig:
    overrides = {}
    if getattr(args, "seed", None) is not None:
        overrides["seed"] = args.seed
    if attack:
        overrides["attack"] = {"enabled": True}
    return load_scenario(args.config, overrides or None)


def _detector_inputs(args):
    calibration = load_calibration(args.thresholds)
    if calibration is None:
        logger.info(f"No calibration at {args.thresholds}; using configured thresholds")
        return None, None
    return calibration, calibration.load_recurrent(Path(args.thresholds).parent)


def cmd_run(args) -> int:
    config = _scenario(args, attack=args.attack)
    calibration, model = _detector_inputs(args)
    record = run_scenario(config, calibration=calibration, recurrent_model=model)
    paths = export_record(record, args.out, alpha=config.attack.alpha)

    if args.plots:
        nominal = None
        if config.attack.enabled:
            nominal = run_scenario(config.nominal(), calibration=calibration, recurrent_model=model)
        TrajectoryVisualizer(str(Path(args.out) / "plots")).generate_all_visualizations(
            record, nominal, config.attack.alpha)

    print(f"Run {config.name} seed={record.seed}: {len(record)} steps, ended by {record.terminated_by}")
    if record.attack_start_step is not None:
        print(f"Attack active from step {record.attack_start_step}, stopped at {record.attack_stop_step} "
              f"({record.stop_reason})")
    print(f"Final separation {record.separation[-1]:.3f} m" if len(record) else "Empty run")
    print(f"Wrote {paths['csv']}")
    return EXIT_OK


def cmd_montecarlo(args) -> int:
    config = _scenario(args, attack=args.attack)
    calibration, model = _detector_inputs(args)
    report, nominal, attacked = monte_carlo(config, args.runs, calibration, model, args.workers)
    paths = export_report(report, args.out)

    if args.plots:
        plots_dir = str(Path(args.out) / "plots")
        AlarmVisualizer(plots_dir).generate_all_visualizations(report, nominal, attacked)
        if attacked:
            TrajectoryVisualizer(plots_dir).generate_xy_trajectory_chart(attacked[0], nominal[0])

    summary = report.summary()
    print(f"Monte Carlo {report.scenario}: {report.n_runs} runs")
    for name, entry in summary["detectors"].items():
        line = f"  {name}: p_FA={entry['p_fa']:.4f}"
        if "p_td" in entry:
            line += f" p_TD={entry['p_td']:.4f} stealthy={entry['stealthy']}"
        print(line)
    if report.attacked:
        print(f"  alpha={report.alpha:g} m reached in {report.effective_fraction:.0%} of runs, "
              f"mean peak separation {report.mean_peak_separation:.3f} m")
    print(f"Wrote {paths['json']}")
    return EXIT_OK


def cmd_calibrate(args) -> int:
    config = load_scenario(args.config)
    p_fa = config.detectors.p_fa if args.pfa is None else args.pfa
    if not 0.0 < p_fa < 1.0:
        raise ConfigError(f"--pfa must lie in (0, 1), got {p_fa}")
    if args.runs < 1:
        raise ConfigError(f"--runs must be at least 1, got {args.runs}")
    result = calibrate_detector(config, args.detector, p_fa, args.runs, args.thresholds)
    print(f"Calibrated {args.detector} at p_FA={p_fa} from {result.traces.n_runs} nominal runs")
    if result.empirical_rate is not None:
        print(f"  nominal alarm rate {result.empirical_rate:.4f}")
    print(f"Wrote {args.thresholds}")
    return EXIT_OK


def cmd_proxy(args) -> int:
    listen = parse_address(args.listen)
    upstream = parse_address(args.upstream)
    config = load_scenario(args.config)
    engine = build_attack_engine(config) if args.mode == "attack" else None
    summary = serve_proxy(listen, upstream, args.mode, engine, config.harness.terminate_on_attack_stop)
    if args.out is not None:
        save_json_file(Path(args.out) / "proxy_summary.json", summary.to_dict(), raise_errors=True)
    print(f"Proxy session ({args.mode}) ended by {summary.ended_by}: {summary.messages}, "
          f"{summary.falsified} messages falsified")
    return EXIT_OK


def cmd_plant(args) -> int:
    address = parse_address(args.listen)
    config = _scenario(args)
    sock = listen_once(address)
    with sock:
        endpoint = PlantEndpoint(config, args.seed, sock).run()
    ensure_dir_exists(args.out)
    endpoint.to_frame().to_csv(Path(args.out) / "plant.csv", index=False, float_format="%.17g")
    print(f"Plant ran {len(endpoint.states)} steps, ended by {endpoint.ended_by}")
    return EXIT_OK


def cmd_flight(args) -> int:
    address = parse_address(args.connect)
    config = load_scenario(args.config)
    calibration, model = _detector_inputs(args)
    sock = connect(address)
    with sock:
        endpoint = FlightEndpoint(config, sock, calibration, model).run()
    ensure_dir_exists(args.out)
    endpoint.to_frame().to_csv(Path(args.out) / "flight.csv", index=False, float_format="%.17g")
    print(f"Flight stack ran {len(endpoint.decisions)} steps, ended by {endpoint.ended_by}")
    return EXIT_OK


COMMANDS = {
    "run": cmd_run,
    "montecarlo": cmd_montecarlo,
    "calibrate": cmd_calibrate,
    "proxy": cmd_proxy,
    "plant": cmd_plant,
    "flight": cmd_flight,
}


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    if args.verbose:
        set_console_level(logging.INFO)
    try:
        return COMMANDS[args.command](args)
    except (ConfigError, ValueError) as e:
        logger.error(f"Configuration error: {e}")
        print(f"error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except (SimulationDivergenceError, TrainingDivergenceError) as e:
        logger.error(f"Divergence: {e}")
        print(f"error: {e}", file=sys.stderr)
        return EXIT_DIVERGENCE
    except (OSError, ProtocolError) as e:
        logger.error(f"I/O error: {e}")
        print(f"error: {e}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
