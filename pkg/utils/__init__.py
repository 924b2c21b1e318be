"""
Utilities package for Drone FDI Lab
"""

from .file_utils import load_json_file, save_json_file, merge_json_data, ensure_dir_exists, save_pgm, load_pgm
from .frames import (
    CameraMount,
    hat,
    euler_to_rotation,
    rotation_to_euler,
    euler_rate_matrix,
    earth_to_camera,
    marker_in_camera,
    camera_to_earth,
    level_rotation,
)
