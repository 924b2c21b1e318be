"""
Learned residual detector

A single gated recurrent unit reads a window of whitened residuals and
predicts each next residual. The alarm score is the prediction error at
the last step of the window; the threshold is the (1 - p_fa) quantile of
that error on held-out nominal windows.
"""

import struct
from collections import deque
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, Optional, Sequence, Tuple, Union

import numpy as np
from scipy import linalg
from sklearn.model_selection import GroupShuffleSplit

from config import get_logger
from detectors.chi_square import DetectorVerdict
from utils.errors import NotPositiveDefiniteError, ShortWindowError, TrainingDivergenceError
from utils.file_utils import ensure_dir_exists

logger = get_logger("drone_fdi.detectors.recurrent")

# Sensor residual (12) plus vision residual (3)
RESIDUAL_WIDTH = 15

MODEL_MAGIC = b"FDIR"
MODEL_VERSION = 1
MODEL_HEADER = struct.Struct("<4sHIIIdd")

PARAM_NAMES = ("Wz", "Uz", "bz", "Wr", "Ur", "br", "Wh", "Uh", "bh", "Wy", "by")


@dataclass(frozen=True)
class RecurrentHyperparams:
    hidden: int = 32
    window: int = 20
    epochs: int = 20
    learning_rate: float = 0.005
    batch_size: int = 64
    max_windows: int = 4000
    held_out_fraction: float = 0.3
    min_traces: int = 2
    seed: int = 0

    def __post_init__(self):
        if self.hidden < 1 or self.window < 2 or self.epochs < 0 or self.batch_size < 1 or self.max_windows < 2:
            raise ValueError(f"invalid recurrent hyperparameters: {self}")
        if self.learning_rate <= 0:
            raise ValueError("recurrent learning_rate must be positive")
        if not 0.0 < self.held_out_fraction < 1.0:
            raise ValueError("recurrent held_out_fraction must lie in (0, 1)")


def _param_shapes(input_dim: int, hidden: int) -> Dict[str, Tuple[int, ...]]:
    gate = {"W": (hidden, input_dim), "U": (hidden, hidden), "b": (hidden,)}
    shapes = {}
    for suffix in ("z", "r", "h"):
        for kind in ("W", "U", "b"):
            shapes[f"{kind}{suffix}"] = gate[kind]
    shapes["Wy"] = (input_dim, hidden)
    shapes["by"] = (input_dim,)
    return {name: shapes[name] for name in PARAM_NAMES}


def _sigmoid(a: np.ndarray) -> np.ndarray:
    return 0.5 * (1.0 + np.tanh(0.5 * a))


class GruPredictor:
    """One-step-ahead residual predictor with hand-written BPTT"""

    def __init__(self, input_dim: int, hidden: int, rng: Optional[np.random.Generator] = None):
        self.input_dim = input_dim
        self.hidden = hidden
        self.shapes = _param_shapes(input_dim, hidden)
        rng = rng if rng is not None else np.random.default_rng(0)
        self.params: Dict[str, np.ndarray] = {}
        for name, shape in self.shapes.items():
            if name.startswith("b"):
                self.params[name] = np.zeros(shape)
            else:
                limit = np.sqrt(6.0 / (shape[0] + shape[1]))
                self.params[name] = rng.uniform(-limit, limit, size=shape)

    @property
    def size(self) -> int:
        return sum(int(np.prod(shape)) for shape in self.shapes.values())

    def get_flat_params(self) -> np.ndarray:
        return np.concatenate([self.params[name].ravel() for name in PARAM_NAMES])

    def set_flat_params(self, flat: np.ndarray) -> None:
        flat = np.asarray(flat, dtype=float)
        if flat.shape != (self.size,):
            raise ValueError(f"expected {self.size} parameters, got {flat.shape}")
        offset = 0
        for name in PARAM_NAMES:
            count = int(np.prod(self.shapes[name]))
            self.params[name] = flat[offset:offset + count].reshape(self.shapes[name]).copy()
            offset += count

    def forward(self, windows: np.ndarray):
        """
        Run the cell over (B, T, D) windows

        Returns:
            predictions of steps 1..T-1 as (B, T-1, D), and the cache for backward()
        """
        p = self.params
        batch, length, _ = windows.shape
        h = np.zeros((batch, self.hidden))
        predictions = np.empty((batch, length - 1, self.input_dim))
        cache = []
        for t in range(length - 1):
            x = windows[:, t, :]
            z = _sigmoid(x @ p["Wz"].T + h @ p["Uz"].T + p["bz"])
            r = _sigmoid(x @ p["Wr"].T + h @ p["Ur"].T + p["br"])
            n = np.tanh(x @ p["Wh"].T + (r * h) @ p["Uh"].T + p["bh"])
            h_next = (1.0 - z) * n + z * h
            predictions[:, t, :] = h_next @ p["Wy"].T + p["by"]
            cache.append((x, h, z, r, n, h_next))
            h = h_next
        return predictions, cache

    def loss(self, windows: np.ndarray) -> float:
        predictions, _ = self.forward(windows)
        diff = predictions - windows[:, 1:, :]
        return float(0.5 * np.sum(diff ** 2) / (diff.shape[0] * diff.shape[1]))

    def loss_and_grads(self, windows: np.ndarray) -> Tuple[float, Dict[str, np.ndarray]]:
        """Mean squared one-step prediction loss and its exact gradient"""
        p = self.params
        predictions, cache = self.forward(windows)
        diff = predictions - windows[:, 1:, :]
        scale = 1.0 / (diff.shape[0] * diff.shape[1])
        loss = float(0.5 * np.sum(diff ** 2) * scale)

        grads = {name: np.zeros_like(value) for name, value in p.items()}
        dh_next = np.zeros((windows.shape[0], self.hidden))
        for t in reversed(range(len(cache))):
            x, h_prev, z, r, n, h = cache[t]
            dy = diff[:, t, :] * scale
            grads["Wy"] += dy.T @ h
            grads["by"] += dy.sum(axis=0)
            dh = dy @ p["Wy"] + dh_next

            dn = dh * (1.0 - z)
            dz = dh * (h_prev - n)
            dh_prev = dh * z

            da_n = dn * (1.0 - n ** 2)
            grads["Wh"] += da_n.T @ x
            grads["Uh"] += da_n.T @ (r * h_prev)
            grads["bh"] += da_n.sum(axis=0)
            d_rh = da_n @ p["Uh"]
            dr = d_rh * h_prev
            dh_prev += d_rh * r

            da_z = dz * z * (1.0 - z)
            grads["Wz"] += da_z.T @ x
            grads["Uz"] += da_z.T @ h_prev
            grads["bz"] += da_z.sum(axis=0)
            dh_prev += da_z @ p["Uz"]

            da_r = dr * r * (1.0 - r)
            grads["Wr"] += da_r.T @ x
            grads["Ur"] += da_r.T @ h_prev
            grads["br"] += da_r.sum(axis=0)
            dh_prev += da_r @ p["Ur"]

            dh_next = dh_prev
        return loss, grads

    def flat_grads(self, grads: Dict[str, np.ndarray]) -> np.ndarray:
        return np.concatenate([grads[name].ravel() for name in PARAM_NAMES])

    def last_step_errors(self, windows: np.ndarray) -> np.ndarray:
        """Prediction error norm at the last step of each window"""
        predictions, _ = self.forward(windows)
        return np.linalg.norm(predictions[:, -1, :] - windows[:, -1, :], axis=1)


class AdamOptimizer:
    def __init__(self, learning_rate: float, beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.learning_rate = learning_rate
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self.m: Dict[str, np.ndarray] = {}
        self.v: Dict[str, np.ndarray] = {}

    def apply(self, params: Dict[str, np.ndarray], grads: Dict[str, np.ndarray]) -> None:
        self.t += 1
        for name, grad in grads.items():
            m = self.m.get(name, np.zeros_like(grad))
            v = self.v.get(name, np.zeros_like(grad))
            m = self.beta1 * m + (1.0 - self.beta1) * grad
            v = self.beta2 * v + (1.0 - self.beta2) * grad ** 2
            self.m[name], self.v[name] = m, v
            m_hat = m / (1.0 - self.beta1 ** self.t)
            v_hat = v / (1.0 - self.beta2 ** self.t)
            params[name] = params[name] - self.learning_rate * m_hat / (np.sqrt(v_hat) + self.eps)


@dataclass
class RecurrentDetectorModel:
    predictor: GruPredictor
    window: int
    threshold: float
    p_fa: float

    @property
    def input_dim(self) -> int:
        return self.predictor.input_dim

    @property
    def hidden(self) -> int:
        return self.predictor.hidden


def whiten(residual: np.ndarray, covariance: np.ndarray, width: int = RESIDUAL_WIDTH) -> np.ndarray:
    """L^-1 r with S = L L^T, zero-padded to a fixed width"""
    residual = np.asarray(residual, dtype=float)
    try:
        lower = linalg.cholesky(np.asarray(covariance, dtype=float), lower=True)
    except linalg.LinAlgError as e:
        raise NotPositiveDefiniteError(f"residual covariance is not positive definite: {e}") from e
    white = linalg.solve_triangular(lower, residual, lower=True)
    if white.shape[0] > width:
        raise ValueError(f"residual of dimension {white.shape[0]} exceeds detector width {width}")
    return np.concatenate([white, np.zeros(width - white.shape[0])])


def _sliding_windows(traces: Sequence[np.ndarray], window: int) -> Tuple[np.ndarray, np.ndarray]:
    """Stride-1 windows of every trace long enough, with the index of the trace each came from"""
    blocks = []
    groups = []
    for index, trace in enumerate(traces):
        trace = np.asarray(trace, dtype=float)
        if trace.shape[0] >= window:
            block = np.lib.stride_tricks.sliding_window_view(trace, window, axis=0).transpose(0, 2, 1)
            blocks.append(block)
            groups.append(np.full(block.shape[0], index))
    if not blocks:
        return np.empty((0, window, RESIDUAL_WIDTH)), np.empty(0, dtype=int)
    return np.concatenate(blocks), np.concatenate(groups)


def split_windows(traces: Sequence[np.ndarray], hyper: RecurrentHyperparams,
                  rng: Optional[np.random.Generator] = None):
    """
    Window the traces and split them into training and held-out sets by trace

    Returns:
        (train windows, held-out windows, train trace indices, held-out trace indices)
    """
    rng = rng if rng is not None else np.random.default_rng(hyper.seed)
    windows, groups = _sliding_windows(traces, hyper.window)
    if windows.shape[0] < 2:
        raise ValueError(f"traces yield {windows.shape[0]} windows of length {hyper.window}; need at least 2")
    if windows.shape[0] > hyper.max_windows:
        keep = np.sort(rng.choice(windows.shape[0], size=hyper.max_windows, replace=False))
        windows, groups = windows[keep], groups[keep]
    if np.unique(groups).size < 2:
        raise ValueError(f"need windows of length {hyper.window} from at least two traces")
    windows = np.ascontiguousarray(windows)

    splitter = GroupShuffleSplit(n_splits=1, test_size=hyper.held_out_fraction, random_state=hyper.seed)
    train_idx, held_idx = next(splitter.split(windows, groups=groups))
    return windows[train_idx], windows[held_idx], groups[train_idx], groups[held_idx]


def train_recurrent(traces: Sequence[np.ndarray], hyper: RecurrentHyperparams, p_fa: float = 0.01) -> RecurrentDetectorModel:
    """
    Fit the predictor on nominal whitened-residual traces and calibrate its threshold

    Args:
        traces: per-run (T, D) arrays of whitened residuals
        hyper: training hyperparameters
        p_fa: target false-alarm rate on held-out windows

    Held-out windows come from whole traces that training never sees, so
    overlapping windows cannot leak into the threshold.

    Returns:
        RecurrentDetectorModel

    Raises:
        TrainingDivergenceError: the loss became non-finite
    """
    if not 0.0 < p_fa < 1.0:
        raise ValueError(f"p_fa must lie in (0, 1), got {p_fa}")
    if len(traces) < hyper.min_traces:
        raise ValueError(f"recurrent training needs at least {hyper.min_traces} traces, got {len(traces)}")

    rng = np.random.default_rng(hyper.seed)
    train, held_out, _, _ = split_windows(traces, hyper, rng)
    predictor = GruPredictor(train.shape[2], hyper.hidden, rng)
    optimizer = AdamOptimizer(hyper.learning_rate)
    logger.info(f"Training recurrent detector on {len(train)} windows ({len(held_out)} held out)")

    for epoch in range(hyper.epochs):
        order = rng.permutation(len(train))
        epoch_loss = 0.0
        for start in range(0, len(train), hyper.batch_size):
            batch = train[order[start:start + hyper.batch_size]]
            loss, grads = predictor.loss_and_grads(batch)
            if not np.isfinite(loss):
                raise TrainingDivergenceError(f"loss became {loss} in epoch {epoch}")
            norm = np.sqrt(sum(float(np.sum(g ** 2)) for g in grads.values()))
            if norm > 5.0:
                grads = {name: g * (5.0 / norm) for name, g in grads.items()}
            optimizer.apply(predictor.params, grads)
            epoch_loss += loss * len(batch)
        logger.debug(f"epoch {epoch}: mean loss {epoch_loss / len(train):.6f}")

    errors = predictor.last_step_errors(held_out)
    if not np.all(np.isfinite(errors)):
        raise TrainingDivergenceError("held-out prediction errors are not finite")
    threshold = float(np.quantile(errors, 1.0 - p_fa))
    logger.info(f"Recurrent detector threshold {threshold:.6f} at p_fa={p_fa}")
    return RecurrentDetectorModel(predictor, hyper.window, threshold, p_fa)


def recurrent_score(model: RecurrentDetectorModel, window: np.ndarray, step: int = 0) -> DetectorVerdict:
    """
    Prediction error at the last step of a residual window

    Raises:
        ShortWindowError: fewer than two residuals
    """
    window = np.asarray(window, dtype=float)
    if window.ndim != 2 or window.shape[0] < 2:
        raise ShortWindowError(f"recurrent scoring needs at least 2 residuals, got {window.shape[0] if window.ndim else 0}")
    score = float(model.predictor.last_step_errors(window[None, -model.window:, :])[0])
    return DetectorVerdict(step, score > model.threshold, score)


class RecurrentDetector:
    """Online wrapper keeping the most recent whitened residuals"""

    name = "recurrent"

    def __init__(self, model: RecurrentDetectorModel):
        self.model = model
        self.history: deque = deque(maxlen=model.window)

    def reset(self) -> None:
        self.history.clear()

    def score(self, residual: np.ndarray, covariance: np.ndarray, step: int = 0) -> Optional[DetectorVerdict]:
        self.history.append(whiten(residual, covariance, self.model.input_dim))
        if len(self.history) < 2:
            return None
        return recurrent_score(self.model, np.stack(self.history), step)


def save_model(model: RecurrentDetectorModel, file_path: Union[str, Path]) -> None:
    """Write header + flat little-endian float64 parameters"""
    ensure_dir_exists(Path(file_path).parent)
    header = MODEL_HEADER.pack(MODEL_MAGIC, MODEL_VERSION, model.input_dim, model.hidden, model.window,
                               model.threshold, model.p_fa)
    with open(file_path, "wb") as f:
        f.write(header)
        f.write(model.predictor.get_flat_params().astype("<f8").tobytes())
    logger.info(f"Saved recurrent detector to {file_path}")


def load_model(file_path: Union[str, Path]) -> RecurrentDetectorModel:
    with open(file_path, "rb") as f:
        raw = f.read()
    if len(raw) < MODEL_HEADER.size:
        raise ValueError(f"{file_path} is too short to hold a recurrent detector")
    magic, version, input_dim, hidden, window, threshold, p_fa = MODEL_HEADER.unpack_from(raw)
    if magic != MODEL_MAGIC:
        raise ValueError(f"{file_path} is not a recurrent detector file")
    if version != MODEL_VERSION:
        raise ValueError(f"unsupported recurrent detector version {version}")
    predictor = GruPredictor(input_dim, hidden)
    flat = np.frombuffer(raw[MODEL_HEADER.size:], dtype="<f8")
    if flat.shape[0] != predictor.size:
        raise ValueError(f"{file_path} holds {flat.shape[0]} parameters, expected {predictor.size}")
    predictor.set_flat_params(flat.astype(float))
    return RecurrentDetectorModel(predictor, window, threshold, p_fa)

