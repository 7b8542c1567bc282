"""End-to-end orchestration: events in, trained ensemble and reports out.

train_ensemble fits the feature pipeline and the three-autoencoder ensemble
from benign events: the flows are split 80/20 into train/validation (seeded,
flow-granular), the embedder and min-max statistics fit on the train side
only, one autoencoder trains per window size (its seed offset by the window
size), and each member's threshold comes from its validation reconstruction
errors. The split provenance is recorded in the model metadata so that
update_ensemble can later re-derive the original pools from the same event
file.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from .autoencoder.network import reconstruction_errors
from .autoencoder.persist import TrainedEnsemble
from .autoencoder.training import TrainConfig, fine_tune, train
from .detect import FlowReport, MetricsReport, compute_threshold, evaluate_metrics, score_flows
from .errors import ConfigError, DataError
from .features import (
    DEFAULT_EMBED_SEED,
    VECTOR_WIDTH,
    WINDOW_SIZES,
    CharEmbedder,
    apply_normalization,
    fit_normalization,
    make_windows,
    vectorize_flow,
)
from .model import BENIGN_LABEL, FunctionEvent, FunctionFlow, assemble_function_flows
from .sim.generate import split_flow_ids

__all__ = [
    "TrainSettings",
    "train_ensemble",
    "detect_flows",
    "update_ensemble",
]


@dataclass(frozen=True)
class TrainSettings:
    """Hyperparameters of a training or update run."""

    seed: int = 7
    split_ratio: float = 0.8
    hidden_widths: tuple[int, ...] = (128, 64, 32)
    epochs: int = 15
    batch_size: int = 32
    learning_rate: float = 1e-4
    embed_seed: int = DEFAULT_EMBED_SEED

    def __post_init__(self) -> None:
        if not 0.0 < self.split_ratio < 1.0:
            raise ConfigError("split_ratio must lie strictly between 0 and 1")
        if not self.hidden_widths or any(h < 1 for h in self.hidden_widths):
            raise ConfigError("hidden_widths must be positive")
        # delegate epoch/batch/learning-rate validation
        self.train_config()

    def train_config(self) -> TrainConfig:
        return TrainConfig(
            epochs=self.epochs,
            batch_size=self.batch_size,
            learning_rate=self.learning_rate,
            seed=self.seed,
        )


def _refuse_anomalies(flows: Sequence[FunctionFlow],
                      labels: Mapping[str, str] | None, what: str) -> None:
    if labels is None:
        return
    bad = sorted(
        f.function_flow_id for f in flows
        if labels.get(f.function_flow_id, BENIGN_LABEL) != BENIGN_LABEL
    )
    if bad:
        raise DataError(
            f"{what} contains anomalously labeled flows (e.g. {bad[0]!r}); "
            "it must be benign"
        )


def _split_flows(flows, split_ratio, seed):
    train_ids, val_ids = split_flow_ids(
        [f.function_flow_id for f in flows], split_ratio, seed
    )
    train_set = set(train_ids)
    train_flows = [f for f in flows if f.function_flow_id in train_set]
    val_flows = [f for f in flows if f.function_flow_id not in train_set]
    return train_flows, val_flows


def _windows_by_size(
    flows: Sequence[FunctionFlow], embedder, stats
) -> dict[int, np.ndarray]:
    """Scaled windows of many flows, stacked per window size."""
    scaled = [
        apply_normalization(vectorize_flow(f, embedder), stats) for f in flows
    ]
    out = {}
    for w in WINDOW_SIZES:
        if scaled:
            out[w] = np.concatenate([make_windows(s, w) for s in scaled])
        else:
            out[w] = np.zeros((0, w, VECTOR_WIDTH))
    return out


def train_ensemble(
    events: Sequence[FunctionEvent],
    labels: Mapping[str, str] | None = None,
    settings: TrainSettings | None = None,
) -> TrainedEnsemble:
    """Fit features and train the full ensemble from benign events."""
    settings = settings or TrainSettings()
    flows = assemble_function_flows(events)
    if not flows:
        raise DataError("no flows to train on")
    _refuse_anomalies(flows, labels, "training corpus")

    train_flows, val_flows = _split_flows(
        flows, settings.split_ratio, settings.seed
    )
    embedder = CharEmbedder(seed=settings.embed_seed)
    stats = fit_normalization(
        np.concatenate([vectorize_flow(f, embedder) for f in train_flows])
    )
    train_w = _windows_by_size(train_flows, embedder, stats)
    val_w = _windows_by_size(val_flows, embedder, stats)

    params = {}
    thresholds = {}
    validation_summary = {}
    for w in WINDOW_SIZES:
        config = TrainConfig(
            epochs=settings.epochs,
            batch_size=settings.batch_size,
            learning_rate=settings.learning_rate,
            seed=settings.seed + w,
        )
        params[w] = train(
            train_w[w],
            input_dim=VECTOR_WIDTH,
            hidden_widths=settings.hidden_widths,
            config=config,
        )
        errors = reconstruction_errors(params[w], val_w[w])
        result = compute_threshold(errors)
        thresholds[w] = result.threshold
        validation_summary[str(w)] = {
            "trainWindows": int(train_w[w].shape[0]),
            "valWindows": int(errors.size),
            "meanValError": float(errors.mean()),
            "maxValError": float(errors.max()),
            "eps": float(result.eps),
            "fallbackUsed": bool(result.fallback_used),
            "threshold": float(result.threshold),
        }

    metadata = {
        "seed": settings.seed,
        "splitSeed": settings.seed,
        "splitRatio": settings.split_ratio,
        "embedSeed": settings.embed_seed,
        "trainFlows": len(train_flows),
        "valFlows": len(val_flows),
        "epochs": settings.epochs,
        "batchSize": settings.batch_size,
        "learningRate": settings.learning_rate,
        "hiddenWidths": list(settings.hidden_widths),
        "validation": validation_summary,
    }
    return TrainedEnsemble(
        input_dim=VECTOR_WIDTH,
        hidden_widths=tuple(settings.hidden_widths),
        params=params,
        thresholds=thresholds,
        stats=stats,
        embedder=embedder,
        metadata=metadata,
    )


def detect_flows(
    ensemble: TrainedEnsemble,
    events: Sequence[FunctionEvent],
    labels: Mapping[str, str] | None = None,
) -> tuple[list[FlowReport], dict[str, MetricsReport] | None]:
    """Score events; with labels, also compute flow and window metrics."""
    if ensemble.input_dim != VECTOR_WIDTH:
        raise DataError(
            f"model expects {ensemble.input_dim}-wide vectors but this "
            f"feature pipeline produces {VECTOR_WIDTH}"
        )
    flows = assemble_function_flows(events)
    if not flows:
        return [], None
    reports = score_flows(ensemble, flows, labels=labels)
    metrics = None
    if labels is not None:
        metrics = {
            "flow": evaluate_metrics(reports, labels, granularity="flow"),
            "window": evaluate_metrics(reports, labels, granularity="window"),
        }
    return reports, metrics


def update_ensemble(
    ensemble: TrainedEnsemble,
    old_events: Sequence[FunctionEvent],
    new_events: Sequence[FunctionEvent],
    *,
    settings: TrainSettings | None = None,
    old_fraction: float = 0.1,
    new_labels: Mapping[str, str] | None = None,
) -> TrainedEnsemble:
    """Fine-tune an ensemble on new benign events.

    old_events must be the original training event file; the original
    train/validation pools are re-derived from the split provenance stored
    in the model metadata. New flows are themselves split so that
    thresholds can be recomputed over both the retained original
    validation errors and the fresh ones. The input ensemble is untouched.
    """
    meta = ensemble.metadata
    for key in ("splitSeed", "splitRatio", "trainFlows", "valFlows"):
        if key not in meta:
            raise DataError(
                f"model metadata lacks {key!r}; this model cannot be updated"
            )

    old_flows = assemble_function_flows(old_events)
    if not old_flows:
        raise DataError("original training pool is empty")
    new_flows = assemble_function_flows(new_events)
    if not new_flows:
        raise DataError("no new events to update with")
    _refuse_anomalies(new_flows, new_labels, "update corpus")

    old_train, old_val = _split_flows(
        old_flows, meta["splitRatio"], meta["splitSeed"]
    )
    if (len(old_train), len(old_val)) != (meta["trainFlows"],
                                          meta["valFlows"]):
        raise DataError(
            "supplied events do not reproduce the training pool recorded "
            f"in the model ({meta['trainFlows']}/{meta['valFlows']} flows "
            f"expected, {len(old_train)}/{len(old_val)} derived)"
        )

    if settings is None:
        settings = TrainSettings(seed=int(meta.get("seed", 0)) + 1)
    new_train, new_val = _split_flows(
        new_flows, settings.split_ratio, settings.seed
    )

    embedder, stats = ensemble.embedder, ensemble.stats
    old_train_w = _windows_by_size(old_train, embedder, stats)
    old_val_w = _windows_by_size(old_val, embedder, stats)
    new_train_w = _windows_by_size(new_train, embedder, stats)
    new_val_w = _windows_by_size(new_val, embedder, stats)
    validation = {
        w: np.concatenate([old_val_w[w], new_val_w[w]]) for w in WINDOW_SIZES
    }

    updated = fine_tune(
        ensemble,
        new_train_w,
        old_train_w,
        validation=validation,
        old_fraction=old_fraction,
        config=settings.train_config(),
    )
    updated.metadata.update({
        "updateSeed": settings.seed,
        "newTrainFlows": len(new_train),
        "newValFlows": len(new_val),
        "oldFraction": old_fraction,
    })
    return updated
