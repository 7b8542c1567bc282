"""Mini-batch training with Adam, plus incremental fine-tuning."""

from __future__ import annotations

import logging
from dataclasses import dataclass, replace

import numpy as np

from ..errors import ConfigError, DataError, FaasGuardError
from .network import AutoencoderParams, init_model, loss_and_grads, reconstruction_errors

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 15
    batch_size: int = 32
    learning_rate: float = 1e-4
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    seed: int = 0

    def __post_init__(self):
        if self.epochs < 1 or self.batch_size < 1:
            raise ConfigError("epochs and batch_size must be >= 1")
        if self.learning_rate < 0:
            raise ConfigError("learning_rate must be >= 0")


class Adam:
    """Adam on a flat parameter vector (bias-corrected moments)."""

    def __init__(self, size: int, config: TrainConfig):
        self.config = config
        self.m = np.zeros(size)
        self.v = np.zeros(size)
        self.t = 0

    def step(self, theta: np.ndarray, grad: np.ndarray) -> None:
        c = self.config
        self.t += 1
        self.m = c.beta1 * self.m + (1.0 - c.beta1) * grad
        self.v = c.beta2 * self.v + (1.0 - c.beta2) * (grad * grad)
        m_hat = self.m / (1.0 - c.beta1**self.t)
        v_hat = self.v / (1.0 - c.beta2**self.t)
        theta -= c.learning_rate * m_hat / (np.sqrt(v_hat) + c.eps)


def train(
    windows: np.ndarray,
    *,
    input_dim: int,
    hidden_widths: tuple[int, ...] = (128, 64, 32),
    config: TrainConfig,
    init_params: AutoencoderParams | None = None,
) -> AutoencoderParams:
    """Train one autoencoder on (N, T, D) windows.

    Deterministic under config.seed: both the weight init and the per-epoch
    shuffle derive from it. init_params (when given) is copied, not mutated.
    """
    windows = np.ascontiguousarray(np.asarray(windows, dtype=np.float64))
    if windows.ndim != 3 or windows.shape[0] == 0:
        raise FaasGuardError("training set is empty or not (N, T, D)")
    if windows.shape[2] != input_dim:
        raise DataError(
            f"window width {windows.shape[2]} does not match input_dim {input_dim}"
        )

    if init_params is None:
        params = init_model(input_dim, tuple(hidden_widths),
                            np.random.default_rng([config.seed, 0]))
    else:
        if init_params.input_dim != input_dim:
            raise DataError("init_params width mismatch")
        params = init_params.copy()

    shuffle_rng = np.random.default_rng([config.seed, 1])
    adam = Adam(params.theta.size, config)
    n = windows.shape[0]
    for epoch in range(config.epochs):
        perm = shuffle_rng.permutation(n)
        epoch_loss = 0.0
        batches = 0
        for s in range(0, n, config.batch_size):
            idx = perm[s : s + config.batch_size]
            X = np.ascontiguousarray(windows[idx].transpose(1, 0, 2))
            loss, grad = loss_and_grads(params, X)
            if not np.isfinite(loss):
                raise FaasGuardError(
                    f"training diverged: non-finite loss at epoch {epoch + 1}"
                )
            adam.step(params.theta, grad)
            epoch_loss += loss
            batches += 1
        log.debug("epoch %d/%d mean batch loss %.6g",
                  epoch + 1, config.epochs, epoch_loss / batches)
    return params


def fine_tune(
    ensemble,
    new_windows: dict[int, np.ndarray],
    old_pool: dict[int, np.ndarray],
    *,
    validation: dict[int, np.ndarray],
    selection: dict[int, np.ndarray] | None = None,
    old_fraction: float = 0.1,
    config: TrainConfig | None = None,
):
    """Continue training an ensemble on new data plus replayed old data.

    Per window size the update set is all new windows plus a sample of the
    old training pool sized so old data makes up `old_fraction` of the set
    (round(n_new * f / (1 - f)) windows; a 1000-window budget at f=0.1 means
    900 new + 100 old). `selection` overrides the seeded uniform sample with
    caller-chosen old-pool indices. Feature statistics and the embedder are
    retained from the original ensemble; thresholds are recomputed over the
    supplied validation windows (retained originals plus the new split).
    Returns a new ensemble; the input one is left untouched.
    """
    from ..detect import compute_threshold  # deferred: detect imports us
    from .persist import TrainedEnsemble

    if not 0.0 <= old_fraction < 1.0:
        raise ConfigError("old_fraction must be in [0, 1)")
    config = config or TrainConfig()

    params = {}
    thresholds = {}
    for w in sorted(ensemble.params):
        new = np.asarray(new_windows[w], dtype=np.float64)
        if new.shape[0] == 0:
            raise DataError(f"no new windows for window size {w}")
        old = np.asarray(old_pool.get(w, np.zeros((0,) + new.shape[1:])),
                         dtype=np.float64)
        if selection is not None:
            sample = old[np.asarray(selection[w], dtype=np.intp)]
        elif old_fraction > 0.0 and old.shape[0] > 0:
            want = round(new.shape[0] * old_fraction / (1.0 - old_fraction))
            take = min(want, old.shape[0])
            rng = np.random.default_rng([config.seed, 97, w])
            sample = old[rng.choice(old.shape[0], size=take, replace=False)]
        else:
            sample = old[:0]
        mix = np.concatenate([new, sample]) if sample.shape[0] else new
        params[w] = train(
            mix,
            input_dim=ensemble.input_dim,
            hidden_widths=ensemble.hidden_widths,
            config=replace(config, seed=config.seed + w),
            init_params=ensemble.params[w],
        )
        errors = reconstruction_errors(params[w], validation[w])
        thresholds[w] = compute_threshold(errors).threshold

    metadata = dict(ensemble.metadata)
    metadata["fine_tuned"] = True
    return TrainedEnsemble(
        input_dim=ensemble.input_dim,
        hidden_widths=ensemble.hidden_widths,
        params=params,
        thresholds=thresholds,
        stats=ensemble.stats,
        embedder=ensemble.embedder,
        metadata=metadata,
    )
