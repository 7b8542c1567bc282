"""Sequence autoencoder assembled from the layer kernels.

Architecture: a stack of LSTM encoder layers (widths outer to inner), a
bridge that repeats the final inner hidden state once per timestep, a
mirrored LSTM decoder stack, and a per-timestep affine map with logistic
output. All parameters live in one flat float64 vector; layer matrices are
views into it, which keeps the optimizer and the persistence format trivial.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import DataError
from .backend import KERNELS


def _lstm_shapes(input_dim: int, hidden_widths: tuple[int, ...]) -> list[tuple[int, int]]:
    """(rows, cols) of each LSTM weight matrix, encoder then decoder."""
    shapes = []
    d = input_dim
    for h in hidden_widths:
        shapes.append((1 + d + h, 4 * h))
        d = h
    for h in reversed(hidden_widths):
        shapes.append((1 + d + h, 4 * h))
        d = h
    return shapes


def _all_shapes(input_dim: int, hidden_widths: tuple[int, ...]) -> list[tuple[int, int]]:
    return _lstm_shapes(input_dim, hidden_widths) + [
        (1 + hidden_widths[0], input_dim)
    ]


def parameter_count(input_dim: int, hidden_widths: tuple[int, ...]) -> int:
    return sum(r * c for r, c in _all_shapes(input_dim, hidden_widths))


@dataclass(frozen=True)
class AutoencoderParams:
    """Weights of one autoencoder; theta is the flat parameter vector."""

    input_dim: int
    hidden_widths: tuple[int, ...]
    theta: np.ndarray

    def __post_init__(self):
        expected = parameter_count(self.input_dim, self.hidden_widths)
        if self.theta.shape != (expected,):
            raise DataError(
                f"parameter vector has {self.theta.shape}, expected ({expected},)"
            )

    def matrices(self, base: np.ndarray | None = None) -> list[np.ndarray]:
        """Matrix views into `base` (default: own theta)."""
        flat = self.theta if base is None else base
        views = []
        offset = 0
        for rows, cols in _all_shapes(self.input_dim, self.hidden_widths):
            size = rows * cols
            views.append(flat[offset : offset + size].reshape(rows, cols))
            offset += size
        return views

    def copy(self) -> "AutoencoderParams":
        return AutoencoderParams(self.input_dim, self.hidden_widths,
                                 self.theta.copy())


def init_model(
    input_dim: int,
    hidden_widths: tuple[int, ...],
    rng: np.random.Generator,
) -> AutoencoderParams:
    """Fan-scaled uniform init; bias rows start at zero."""
    if input_dim < 1 or len(hidden_widths) < 1 or min(hidden_widths) < 1:
        raise DataError("init_model: bad dimensions")
    theta = np.zeros(parameter_count(input_dim, tuple(hidden_widths)))
    params = AutoencoderParams(input_dim, tuple(hidden_widths), theta)
    for mat in params.matrices():
        rows, cols = mat.shape
        limit = np.sqrt(6.0 / ((rows - 1) + cols))
        mat[1:] = rng.uniform(-limit, limit, size=(rows - 1, cols))
    return params


def _forward(params: AutoencoderParams, X: np.ndarray):
    """Full forward over a (T, B, D) batch; returns (Y, Haug, caches)."""
    k = KERNELS
    mats = params.matrices()
    n_enc = len(params.hidden_widths)
    T = X.shape[0]

    caches = []
    H = X
    for i in range(n_enc):
        cache = k.lstm_layer_forward(H, mats[i])
        caches.append(cache)
        H = cache[0]

    # bridge: repeat the final inner state across all timesteps
    bridge = np.ascontiguousarray(np.broadcast_to(H[T - 1], (T,) + H.shape[1:]))
    H = bridge
    for i in range(n_enc, 2 * n_enc):
        cache = k.lstm_layer_forward(H, mats[i])
        caches.append(cache)
        H = cache[0]

    Y, Haug = k.dense_sigmoid_forward(H, mats[-1])
    return Y, Haug, caches


def _check_batch(params: AutoencoderParams, X: np.ndarray) -> np.ndarray:
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 3 or X.shape[2] != params.input_dim:
        raise DataError(
            f"batch shape {X.shape} does not match input width {params.input_dim}"
        )
    if not np.all(np.isfinite(X)):
        raise DataError("autoencoder input must be finite")
    return np.ascontiguousarray(X)


def batch_loss(params: AutoencoderParams, X: np.ndarray) -> float:
    """Mean squared reconstruction error over a (T, B, D) batch."""
    X = _check_batch(params, X)
    Y, _, _ = _forward(params, X)
    diff = Y - X
    return float(np.mean(diff * diff))


def loss_and_grads(params: AutoencoderParams, X: np.ndarray):
    """Loss plus gradient of every parameter (flat, same layout as theta)."""
    k = KERNELS
    X = _check_batch(params, X)
    Y, Haug, caches = _forward(params, X)
    diff = Y - X
    loss = float(np.mean(diff * diff))
    dY = diff * (2.0 / diff.size)

    mats = params.matrices()
    grad = np.zeros_like(params.theta)
    gmats = params.matrices(base=grad)
    n_enc = len(params.hidden_widths)
    T = X.shape[0]

    dH, dWo = k.dense_sigmoid_backward(dY, Y, Haug, mats[-1])
    gmats[-1][:] = dWo

    for i in range(2 * n_enc - 1, n_enc - 1, -1):
        dH, dW = k.lstm_layer_backward(dH, mats[i], *caches[i])
        gmats[i][:] = dW

    # bridge: gradients from every timestep sum into the final encoder state
    dz = dH.sum(axis=0)
    dH = np.zeros_like(caches[n_enc - 1][0])
    dH[T - 1] = dz
    for i in range(n_enc - 1, -1, -1):
        dH, dW = k.lstm_layer_backward(dH, mats[i], *caches[i])
        gmats[i][:] = dW

    return loss, grad


def reconstruct(params: AutoencoderParams, window: np.ndarray) -> np.ndarray:
    """Reconstruct one (T, D) window; output lies in (0, 1)."""
    window = np.asarray(window, dtype=np.float64)
    if window.ndim != 2 or window.shape[0] < 1:
        raise DataError("reconstruct expects a (T, D) window")
    X = _check_batch(params, window[:, None, :])
    Y, _, _ = _forward(params, X)
    return Y[:, 0, :]


def reconstruction_error(params: AutoencoderParams, window: np.ndarray) -> float:
    """Mean squared error between a window and its reconstruction."""
    window = np.asarray(window, dtype=np.float64)
    rec = reconstruct(params, window)
    diff = rec - window
    return float(np.mean(diff * diff))


def reconstruction_errors(
    params: AutoencoderParams, windows: np.ndarray, batch_size: int = 256
) -> np.ndarray:
    """Per-window errors for a (N, T, D) stack, computed in batches."""
    windows = np.asarray(windows, dtype=np.float64)
    if windows.ndim != 3:
        raise DataError("reconstruction_errors expects (N, T, D)")
    out = np.empty(windows.shape[0])
    for s in range(0, windows.shape[0], batch_size):
        chunk = windows[s : s + batch_size]
        X = _check_batch(params, chunk.transpose(1, 0, 2))
        Y, _, _ = _forward(params, X)
        diff = Y - X
        out[s : s + chunk.shape[0]] = np.mean(diff * diff, axis=(0, 2))
    return out
