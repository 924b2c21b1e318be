"""
Perception package: pinhole camera model, rendering and marker detection
"""

from .camera import (
    CameraModel,
    Frame,
    MarkerGeometry,
    MarkerObservation,
    VisionNoiseParams,
    blank_frame,
    camera_observation,
    detect_marker,
    estimate_relative_position,
    estimation_error_bound,
    fully_in_view,
    marker_in_camera,
    observation_from_point,
    project,
    projected_side,
    relative_position_covariance,
    render_marker,
)
