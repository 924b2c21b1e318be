"""
Configuration management for Drone FDI Lab
"""
import os
from pathlib import Path

# Base paths
BASE_DIR = Path(os.path.dirname(os.path.dirname(os.path.abspath(__file__))))
DATA_DIR = BASE_DIR / 'data'
SCENARIOS_DIR = DATA_DIR / 'scenarios'
CALIBRATION_DIR = DATA_DIR / 'calibration'
OUTPUT_DIR = DATA_DIR / 'output'
LOGS_DIR = BASE_DIR / 'logs'

# Ensure directories exist
os.makedirs(DATA_DIR, exist_ok=True)
os.makedirs(SCENARIOS_DIR, exist_ok=True)
os.makedirs(CALIBRATION_DIR, exist_ok=True)
os.makedirs(OUTPUT_DIR, exist_ok=True)
os.makedirs(LOGS_DIR, exist_ok=True)

# Calibration sidecar files written by `main.py calibrate`
DEFAULT_THRESHOLDS_FILE = CALIBRATION_DIR / 'thresholds.json'
DEFAULT_RECURRENT_MODEL_FILE = CALIBRATION_DIR / 'recurrent.bin'

# Bundled scenarios
GVT_SCENARIO_FILE = SCENARIOS_DIR / 'gvt.json'
VTOL_SCENARIO_FILE = SCENARIOS_DIR / 'vtol.json'

# Names of the deployable detectors, in report order
DETECTOR_NAMES = ["chi2", "cusum", "recurrent"]

# Default scenario. Scenario files only need to list what they change;
# they are deep-merged over this dict by config.scenario.load_scenario.
DEFAULT_SCENARIO = {
    "name": "gvt",
    "mission": "GVT",
    "dt": 0.02,
    "duration": 40.0,
    "seed": 0,
    "vehicle": {
        "mass": 1.5,
        "inertia": [0.02, 0.02, 0.04],
        "arm_length": 0.25,
        "thrust_coeff": 1e-5,
        "drag_coeff": 1e-7,
        "gravity": 9.81,
        "max_rotor_speed_sq": 1.5e6,
        "max_pitch": 1.4,
    },
    "initial_state": {
        "altitude": 1.0,
        "match_ground_vehicle_velocity": True,
    },
    # Per-step standard deviations of the additive process noise w_t
    "process_noise": {
        "position": 0.001,
        "velocity": 0.01,
        "attitude": 0.0005,
        "rate": 0.005,
    },
    "sensor_noise": {
        "position": 0.05,
        "velocity": 0.05,
        "attitude": 0.005,
        "rate": 0.005,
    },
    "camera": {
        "focal_px": 800.0,
        "width": 1280,
        "height": 720,
        # body -> camera, down-facing
        "mount_rotation": [[1.0, 0.0, 0.0], [0.0, -1.0, 0.0], [0.0, 0.0, -1.0]],
        "mount_offset": [0.0, 0.0, 0.0],
        "marker_intensity": 255,
        "background_intensity": 0,
        "detection_threshold": 128,
        "min_area_px": 25,
    },
    "marker": {
        "side_length": 0.5,
    },
    "vision": {
        "sigma_px": 0.3,
        "sigma_side_px": 0.6,
    },
    "beacon": {
        "enabled": True,
        "sigma": 0.15,
    },
    "estimation": {
        "jacobian": "numeric",
        "epsilon": 1e-6,
        "tracker_accel_sigma": 1.0,
    },
    "control": {
        "gains": {
            "position": {"kp": [2.0, 2.0, 1.0], "ki": [0.0, 0.0, 0.0], "kd": [0.0, 0.0, 0.0],
                         "limit": [3.0, 3.0, 1.5], "integrator_limit": 1.0},
            "velocity": {"kp": [5.0, 5.0, 3.0], "ki": [0.1, 0.1, 0.3], "kd": [0.0, 0.0, 0.0],
                         "limit": [4.0, 4.0, 4.0], "integrator_limit": 2.0},
            "attitude": {"kp": [10.0, 10.0, 2.0], "ki": [0.0, 0.0, 0.0], "kd": [0.0, 0.0, 0.0],
                         "limit": [4.0, 4.0, 1.0], "integrator_limit": 0.5},
            "rate": {"kp": [20.0, 20.0, 10.0], "ki": [0.0, 0.0, 0.0], "kd": [0.0, 0.0, 0.0],
                     "limit": [40.0, 40.0, 3.0], "integrator_limit": 1.0},
        },
        "max_tilt": 0.35,
        # steps the controller follows the tracker's prediction after the marker is lost
        "coast_steps": 100,
    },
    "mission_thresholds": {
        "cruise_altitude": 5.0,
        "altitude_tolerance": 0.3,
        "landing_threshold": 1.2,
        "landing_xy_tolerance": 0.25,
        "approach_altitude": 1.0,
        "descent_rate": 0.5,
        "touchdown_altitude": 0.05,
    },
    "ground_vehicle": {
        "side": 20.0,
        "speed": 1.0,
        "corner": [0.0, 0.0],
        "phase": 0.0,
    },
    "attack": {
        "enabled": False,
        "mode": "consistent",
        # roll-only deviation
        "s0": [0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.01, 0.0, 0.0, 0.0, 0.0, 0.0],
        "alpha": 3.0,
        "stop_rule": "marker_out_of_view",
        "max_steps": 100000,
        "start_step": None,
        "max_blind_steps": 25,
        "ramp_steps": 50,
        "image_only_direction": [0.0, 1.0, 0.0],
    },
    "detectors": {
        "enabled": ["chi2", "cusum", "recurrent"],
        "p_fa": 0.01,
        "cusum_drift": 3.0,
        "cusum_threshold": 60.0,
        "recurrent": {
            "hidden": 32,
            "window": 20,
            "epochs": 20,
            "learning_rate": 0.005,
            "batch_size": 64,
            "max_windows": 4000,
            "held_out_fraction": 0.3,
            "min_traces": 2,
            "seed": 0,
        },
    },
    "evaluation": {
        "window_steps": 500,
        "epsilon": 0.05,
    },
    "harness": {
        "terminate_on_attack_stop": True,
        "divergence_limit": 1e6,
        "workers": 1,
    },
}

# Logging configuration
LOGGING_CONFIG = {
    "version": 1,
    "disable_existing_loggers": False,
    "formatters": {
        "standard": {
            "format": "%(asctime)s [%(levelname)s] %(name)s: %(message)s"
        },
    },
    "handlers": {
        "file": {
            "level": "INFO",
            "class": "logging.FileHandler",
            "filename": LOGS_DIR / "drone_fdi.log",
            "formatter": "standard"
        },
        "console": {
            "level": "WARNING",
            "class": "logging.StreamHandler",
            "formatter": "standard"
        }
    },
    "loggers": {
        "": {
            "handlers": ["file", "console"],
            "level": "INFO",
            "propagate": True
        }
    }
}
