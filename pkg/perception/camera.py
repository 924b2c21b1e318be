"""
Camera channel for Drone FDI Lab

Marker geometry -> pinhole projection -> synthetic 8-bit frame ->
threshold/connected-component detection -> relative-position estimate.

Pixel coordinates use the image centre as origin: column offset s_cx,
row offset s_cy. Pixel (row i, col j) has its centre at
(j + 0.5 - W/2, i + 0.5 - H/2).
"""

from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Union

import numpy as np
from scipy import ndimage

from config import get_logger
from utils.errors import BehindCameraError, MarkerNotVisibleError
from utils.file_utils import save_pgm
from utils.frames import CameraMount, marker_in_camera as _marker_in_camera

logger = get_logger("drone_fdi.perception")


@dataclass(frozen=True)
class CameraModel:
    """Pinhole camera with a fixed mount and the rendering/detection settings"""

    focal_px: float = 800.0
    width: int = 1280
    height: int = 720
    mount: CameraMount = field(default_factory=CameraMount)
    marker_intensity: int = 255
    background_intensity: int = 0
    detection_threshold: int = 128
    min_area_px: int = 25

    def __post_init__(self):
        if not np.isfinite(self.focal_px) or self.focal_px <= 0:
            raise ValueError(f"camera.focal_px must be positive, got {self.focal_px}")
        if self.width <= 0 or self.height <= 0:
            raise ValueError(f"camera resolution must be positive, got {self.width}x{self.height}")
        for name in ("marker_intensity", "background_intensity", "detection_threshold"):
            value = getattr(self, name)
            if not 0 <= value <= 255:
                raise ValueError(f"camera.{name} must be an 8-bit intensity, got {value}")
        if self.background_intensity >= self.detection_threshold:
            raise ValueError("camera.background_intensity must be below detection_threshold")
        if self.marker_intensity < self.detection_threshold:
            raise ValueError("camera.marker_intensity must reach detection_threshold")
        if self.min_area_px < 1:
            raise ValueError(f"camera.min_area_px must be at least 1, got {self.min_area_px}")

    @property
    def half_width(self) -> float:
        return self.width / 2.0

    @property
    def half_height(self) -> float:
        return self.height / 2.0


@dataclass(frozen=True)
class VisionNoiseParams:
    """Pixel-level uncertainty of the detector output"""

    sigma_px: float = 0.3
    sigma_side_px: float = 0.6

    def __post_init__(self):
        if self.sigma_px <= 0 or self.sigma_side_px <= 0:
            raise ValueError("vision noise deviations must be strictly positive")


@dataclass(frozen=True)
class MarkerGeometry:
    """Square marker of known side length lying at an earth-frame point"""

    side_length: float
    center_earth: np.ndarray

    def __post_init__(self):
        if self.side_length <= 0:
            raise ValueError(f"marker side length must be positive, got {self.side_length}")
        object.__setattr__(self, "center_earth", np.asarray(self.center_earth, dtype=float))


@dataclass(frozen=True)
class MarkerObservation:
    """Detected marker centre and side in pixels"""

    center: np.ndarray
    side: float
    visible: bool
    step: int = 0

    def __post_init__(self):
        object.__setattr__(self, "center", np.asarray(self.center, dtype=float))

    @classmethod
    def invisible(cls, step: int = 0) -> "MarkerObservation":
        return cls(np.zeros(2), 0.0, False, step)

    def with_step(self, step: int) -> "MarkerObservation":
        return MarkerObservation(self.center, self.side, self.visible, step)


@dataclass
class Frame:
    """8-bit grayscale image tagged with the step it was captured at"""

    pixels: np.ndarray
    step: int = 0

    @property
    def width(self) -> int:
        return self.pixels.shape[1]

    @property
    def height(self) -> int:
        return self.pixels.shape[0]

    def to_pgm(self, file_path: Union[str, Path]) -> None:
        save_pgm(file_path, self.pixels)


def project(point_camera: np.ndarray, camera: CameraModel) -> np.ndarray:
    """
    Pinhole projection s_c = (f / Z) (X, Y)

    Raises:
        BehindCameraError: Z <= 0
    """
    point_camera = np.asarray(point_camera, dtype=float)
    depth = point_camera[2]
    if not depth > 0:
        raise BehindCameraError(f"point {point_camera} is not in front of the camera")
    return (camera.focal_px / depth) * point_camera[:2]


def marker_in_camera(state: np.ndarray, marker_earth: np.ndarray, camera: CameraModel) -> np.ndarray:
    """P^C = R_E^C(x) (P^E - p) for the camera's mount"""
    return _marker_in_camera(state, marker_earth, camera.mount)


def projected_side(depth: float, camera: CameraModel, side_length: float) -> float:
    """Marker side in pixels at a given depth"""
    return camera.focal_px * side_length / depth


def observation_from_point(point_camera: np.ndarray, camera: CameraModel, side_length: float,
                           step: int = 0) -> MarkerObservation:
    """
    Exact (non-rasterised) observation of a marker at a camera-frame point

    Not visible when the point is behind the camera or the square is not
    fully inside the frame.
    """
    point_camera = np.asarray(point_camera, dtype=float)
    if not point_camera[2] > 0:
        return MarkerObservation.invisible(step)
    center = project(point_camera, camera)
    side = projected_side(point_camera[2], camera, side_length)
    if not fully_in_view(center, side, camera):
        return MarkerObservation.invisible(step)
    return MarkerObservation(center, side, True, step)


def fully_in_view(center: np.ndarray, side: float, camera: CameraModel) -> bool:
    """True when the whole square stays at least one pixel away from the border"""
    half = side / 2.0
    return bool(
        side * side >= camera.min_area_px
        and abs(center[0]) + half < camera.half_width - 1.0
        and abs(center[1]) + half < camera.half_height - 1.0
    )


def _lit_range(center: float, side: float, half_extent: float, size: int) -> slice:
    # pixel k is lit iff center - side/2 <= k + 0.5 - half_extent < center + side/2
    lo = int(np.ceil(center - side / 2.0 + half_extent - 0.5))
    hi = int(np.ceil(center + side / 2.0 + half_extent - 0.5))
    return slice(min(max(lo, 0), size), min(max(hi, 0), size))


def blank_frame(camera: CameraModel, step: int = 0) -> Frame:
    return Frame(np.full((camera.height, camera.width), camera.background_intensity, dtype=np.uint8), step)


def render_marker(obs: MarkerObservation, camera: CameraModel) -> Frame:
    """
    Axis-aligned bright square centred at obs.center on a dark background

    A pixel is lit when its centre falls inside the square; the square is
    clipped at the image borders.
    """
    frame = blank_frame(camera, obs.step)
    if not obs.visible or not obs.side > 0 or not np.all(np.isfinite(obs.center)):
        return frame
    cols = _lit_range(obs.center[0], obs.side, camera.half_width, camera.width)
    rows = _lit_range(obs.center[1], obs.side, camera.half_height, camera.height)
    frame.pixels[rows, cols] = camera.marker_intensity
    return frame


def detect_marker(frame: Frame, camera: CameraModel) -> MarkerObservation:
    """
    Threshold, keep the largest connected bright component, report its
    centroid and bounding-box side

    Ties on area go to the component lowest in the image, then leftmost.
    A component smaller than min_area_px or touching the border is
    reported as not visible.
    """
    mask = frame.pixels >= camera.detection_threshold
    rows = np.flatnonzero(mask.any(axis=1))
    if rows.size == 0:
        return MarkerObservation.invisible(frame.step)
    cols = np.flatnonzero(mask.any(axis=0))
    row0, col0 = rows[0], cols[0]
    window = mask[row0:rows[-1] + 1, col0:cols[-1] + 1]

    labels, count = ndimage.label(window)
    areas = np.bincount(labels.ravel())[1:]
    boxes = ndimage.find_objects(labels)

    def rank(index: int):
        box = boxes[index]
        return areas[index], box[0].stop, -box[1].start

    best = max(range(count), key=rank)
    if areas[best] < camera.min_area_px:
        return MarkerObservation.invisible(frame.step)

    box_rows, box_cols = boxes[best]
    top, bottom = row0 + box_rows.start, row0 + box_rows.stop
    left, right = col0 + box_cols.start, col0 + box_cols.stop
    if top == 0 or left == 0 or bottom == camera.height or right == camera.width:
        return MarkerObservation.invisible(frame.step)

    comp_rows, comp_cols = np.nonzero(labels == best + 1)
    center = np.array([
        comp_cols.mean() + col0 + 0.5 - camera.half_width,
        comp_rows.mean() + row0 + 0.5 - camera.half_height,
    ])
    side = 0.5 * ((right - left) + (bottom - top))
    return MarkerObservation(center, float(side), True, frame.step)


def estimate_relative_position(obs: MarkerObservation, camera: CameraModel, side_length: float) -> np.ndarray:
    """
    Relative marker position from a detection

    Z = f l / side, X = s_cx Z / f, Y = s_cy Z / f

    Raises:
        MarkerNotVisibleError: obs is not visible
    """
    if not obs.visible or not obs.side > 0:
        raise MarkerNotVisibleError(f"no visible marker at step {obs.step}")
    depth = camera.focal_px * side_length / obs.side
    return np.array([obs.center[0] * depth / camera.focal_px, obs.center[1] * depth / camera.focal_px, depth])


def estimation_error_bound(depth: float, camera: CameraModel, side_length: float) -> float:
    """Bound on the rasterised localisation error at a given depth"""
    return 2.0 * depth ** 2 / (camera.focal_px * side_length) + 0.01


def relative_position_covariance(point_camera: np.ndarray, camera: CameraModel, side_length: float,
                                 noise: VisionNoiseParams) -> np.ndarray:
    """Camera-frame covariance of estimate_relative_position from pixel-level noise"""
    depth = float(point_camera[2])
    lateral = (noise.sigma_px * depth / camera.focal_px) ** 2
    axial = (noise.sigma_side_px * depth ** 2 / (camera.focal_px * side_length)) ** 2
    return np.diag([lateral, lateral, axial])


def camera_observation(state: np.ndarray, marker_earth: np.ndarray, camera: CameraModel,
                       side_length: float, step: int = 0) -> Frame:
    """Frame the camera captures of a marker from a given vehicle state"""
    point = marker_in_camera(state, marker_earth, camera)
    if not point[2] > 0:
        return blank_frame(camera, step)
    obs = MarkerObservation(project(point, camera), projected_side(point[2], camera, side_length), True, step)
    return render_marker(obs, camera)
