"""Event vectorization: token embeddings, derived features, scaling, windows.

Each event becomes a 23-wide float vector: four embedding dims for each of
applicationName, eventName, eventType, eventParentName, eventTargetResource,
then eventDuration (ms), relativeStartTime (ms from the flow's first event),
and call depth. Vectors are min-max scaled with statistics fitted on training
data only, then cut into stride-1 windows per window size.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from .errors import DataError
from .model import FunctionEvent, FunctionFlow

EMBED_DIM = 4
# five embedded string fields + duration + relative start + depth
VECTOR_WIDTH = 5 * EMBED_DIM + 3

# each flow is scored by one autoencoder per window size
WINDOW_SIZES = (3, 5, 10)

# Fixed default so corpora and models built with different training seeds
# still share token geometry.
DEFAULT_EMBED_SEED = 0x5EEDFACE

# Averaging trigram hashes concentrates token vectors near 0.5 (the mean of
# k uniforms has std ~ 1/sqrt(12k)), leaving distinct tokens almost
# indistinguishable per dimension. Embeddings are therefore spread by the
# increasing bijection x -> 0.5 + 0.5*sign(2x-1)*|2x-1|**SPREAD_GAMMA, which
# pushes values toward the interval poles while preserving [0, 1], order,
# and pairwise distinctness.
SPREAD_GAMMA = 0.25


class CharEmbedder:
    """Deterministic token embedder.

    Tokens are padded to "^token$", split into character trigrams, and each
    trigram is keyed-hashed (blake2b, key = seed) into `dimension` uniform
    values in [0, 1); the token vector is the mean over its trigrams, spread
    toward the interval poles (see SPREAD_GAMMA). The empty token maps to
    the zero vector. An explicit table (token -> vector) may override the
    hash for listed tokens, verbatim; unlisted tokens fall back to hashing.
    """

    def __init__(
        self,
        seed: int = DEFAULT_EMBED_SEED,
        dimension: int = EMBED_DIM,
        table: Mapping[str, Sequence[float]] | None = None,
    ):
        if dimension < 1:
            raise DataError("embedding dimension must be >= 1")
        self.seed = int(seed)
        self.dimension = int(dimension)
        self._key = self.seed.to_bytes(8, "little", signed=False)
        self._cache: dict[str, np.ndarray] = {}
        self.table: dict[str, np.ndarray] = {}
        if table:
            for token, values in table.items():
                vec = np.asarray(values, dtype=np.float64)
                if vec.shape != (self.dimension,):
                    raise DataError(
                        f"embedding table entry {token!r} has shape {vec.shape}, "
                        f"expected ({self.dimension},)"
                    )
                if not np.all(np.isfinite(vec)) or vec.min() < 0.0 or vec.max() > 1.0:
                    raise DataError(
                        f"embedding table entry {token!r} must lie in [0, 1]"
                    )
                self.table[token] = vec

    def _hash_trigram(self, trigram: str) -> np.ndarray:
        digest = hashlib.blake2b(
            trigram.encode("utf-8"), digest_size=8 * self.dimension, key=self._key
        ).digest()
        words = np.frombuffer(digest, dtype="<u8").astype(np.float64)
        return words / 2.0**64

    def embed(self, token: str) -> np.ndarray:
        """Return the token's vector in [0, 1]^dimension (copy-safe view)."""
        cached = self._cache.get(token)
        if cached is None:
            if token == "":
                cached = np.zeros(self.dimension)
            elif token in self.table:
                cached = self.table[token]
            else:
                padded = "^" + token + "$"
                grams = [padded[i : i + 3] for i in range(len(padded) - 2)]
                mean = np.mean([self._hash_trigram(g) for g in grams], axis=0)
                centered = 2.0 * mean - 1.0
                cached = 0.5 + 0.5 * np.sign(centered) * (
                    np.abs(centered) ** SPREAD_GAMMA
                )
            self._cache[token] = cached
        return cached

    def state(self) -> dict:
        """Serializable constructor arguments."""
        return {
            "seed": self.seed,
            "dimension": self.dimension,
            "table": {t: v.tolist() for t, v in self.table.items()} or None,
        }

    @classmethod
    def from_state(cls, state: Mapping) -> "CharEmbedder":
        return cls(
            seed=state["seed"],
            dimension=state["dimension"],
            table=state.get("table") or None,
        )

    @classmethod
    def from_table_file(cls, path: str | Path, seed: int = DEFAULT_EMBED_SEED) -> "CharEmbedder":
        with open(path, "r", encoding="utf-8") as fh:
            table = json.load(fh)
        if not isinstance(table, dict):
            raise DataError("embedding table file must hold a JSON object")
        return cls(seed=seed, table=table)


def compute_derived_features(flow: FunctionFlow) -> list[tuple[float, float, int]]:
    """Per-event (duration_ms, relative_start_ms, depth) for a flow.

    duration = endTime - startTime; relative start is measured from the
    flow's first event. Depth is 1 for events without a resolvable parent,
    else parent depth + 1; the parent is the nearest earlier-or-equal-start
    event whose eventName matches eventParentName.
    """
    events = flow.events
    if not events:
        raise DataError(f"flow {flow.function_flow_id!r} has no events")

    base = events[0].start_time
    parent_idx = _resolve_parents(events)

    depths: list[int | None] = [None] * len(events)

    def depth_of(i: int, trail: set[int]) -> int:
        if depths[i] is not None:
            return depths[i]
        j = parent_idx[i]
        if j is None or j in trail:
            depths[i] = 1
        else:
            trail.add(i)
            depths[i] = depth_of(j, trail) + 1
        return depths[i]

    out = []
    for i, ev in enumerate(events):
        out.append(
            (
                float(ev.end_time - ev.start_time),
                float(ev.start_time - base),
                depth_of(i, set()),
            )
        )
    return out


def _resolve_parents(events: Sequence[FunctionEvent]) -> list[int | None]:
    """Index of each event's parent, or None when dangling/absent.

    Prefers the nearest preceding event (in sort order) with the matching
    name; failing that, an equal-start event later in sort order.
    """
    resolved: list[int | None] = []
    for i, ev in enumerate(events):
        name = ev.event_parent_name
        if name == "":
            resolved.append(None)
            continue
        found = None
        for j in range(i - 1, -1, -1):
            if events[j].event_name == name:
                found = j
                break
        if found is None:
            for j in range(i + 1, len(events)):
                if events[j].start_time > ev.start_time:
                    break
                if events[j].event_name == name:
                    found = j
                    break
        resolved.append(found)
    return resolved


def vectorize_flow(flow: FunctionFlow, embedder: CharEmbedder) -> np.ndarray:
    """Raw (unscaled) vectors for a flow, shape (n_events, VECTOR_WIDTH)."""
    derived = compute_derived_features(flow)
    out = np.empty((len(flow.events), VECTOR_WIDTH))
    d = embedder.dimension
    for i, ev in enumerate(flow.events):
        out[i, 0:d] = embedder.embed(ev.application_name)
        out[i, d : 2 * d] = embedder.embed(ev.event_name)
        out[i, 2 * d : 3 * d] = embedder.embed(ev.event_type)
        out[i, 3 * d : 4 * d] = embedder.embed(ev.event_parent_name)
        out[i, 4 * d : 5 * d] = embedder.embed(ev.event_target_resource)
        out[i, 5 * d : 5 * d + 3] = derived[i]
    return out


@dataclass(frozen=True)
class FeatureStats:
    """Per-dimension min/max observed on the training set."""

    mins: np.ndarray
    maxs: np.ndarray

    def __post_init__(self):
        if self.mins.shape != self.maxs.shape or self.mins.ndim != 1:
            raise DataError("feature stats mins/maxs must be matching 1-D arrays")
        if np.any(self.maxs < self.mins):
            raise DataError("feature stats max < min")


def fit_normalization(vectors: np.ndarray) -> FeatureStats:
    """Fit per-dimension min/max on raw training vectors (n >= 1 rows)."""
    vectors = np.asarray(vectors, dtype=np.float64)
    if vectors.ndim != 2 or vectors.shape[0] == 0:
        raise DataError("fit_normalization needs a non-empty (n, width) array")
    if not np.all(np.isfinite(vectors)):
        raise DataError("fit_normalization: non-finite input")
    return FeatureStats(mins=vectors.min(axis=0), maxs=vectors.max(axis=0))


def apply_normalization(vectors: np.ndarray, stats: FeatureStats) -> np.ndarray:
    """Scale by (x - min) / (max - min) per dimension.

    Dimensions with max == min map to 0. Values outside the fitted range are
    NOT clamped: out-of-range output is meaningful downstream signal.
    """
    vectors = np.asarray(vectors, dtype=np.float64)
    if vectors.ndim != 2 or vectors.shape[1] != stats.mins.shape[0]:
        raise DataError(
            f"apply_normalization: width {vectors.shape} does not match stats "
            f"({stats.mins.shape[0]} dims)"
        )
    span = stats.maxs - stats.mins
    out = np.zeros_like(vectors)
    nonzero = span > 0
    out[:, nonzero] = (vectors[:, nonzero] - stats.mins[nonzero]) / span[nonzero]
    return out


def make_windows(vectors: np.ndarray, window_size: int) -> np.ndarray:
    """Cut (n, width) vectors into stride-1 windows (count, window_size, width).

    count = max(1, n - window_size + 1). When n < window_size the single
    window is padded with trailing all-zero rows; padded rows participate in
    reconstruction downstream (no masking).
    """
    vectors = np.asarray(vectors, dtype=np.float64)
    if vectors.ndim != 2 or vectors.shape[0] == 0:
        raise DataError("make_windows needs a non-empty (n, width) array")
    if window_size < 1:
        raise DataError("window_size must be >= 1")
    n, width = vectors.shape
    if n < window_size:
        window = np.zeros((1, window_size, width))
        window[0, :n] = vectors
        return window
    count = n - window_size + 1
    out = np.empty((count, window_size, width))
    for i in range(count):
        out[i] = vectors[i : i + window_size]
    return out


@dataclass(frozen=True)
class WindowedSequence:
    """Windows of one flow for one window size, plus bookkeeping."""

    function_flow_id: str
    window_size: int
    windows: np.ndarray  # (count, window_size, VECTOR_WIDTH)
    offsets: tuple[int, ...]  # start row of each window in the flow
    padded_rows: int  # trailing zero rows in the last window (n < W case)


def windows_for_flow(
    flow: FunctionFlow,
    embedder: CharEmbedder,
    stats: FeatureStats,
    window_size: int,
) -> WindowedSequence:
    """Vectorize, scale, and window one flow."""
    raw = vectorize_flow(flow, embedder)
    scaled = apply_normalization(raw, stats)
    windows = make_windows(scaled, window_size)
    n = raw.shape[0]
    return WindowedSequence(
        function_flow_id=flow.function_flow_id,
        window_size=window_size,
        windows=windows,
        offsets=tuple(range(windows.shape[0])),
        padded_rows=max(0, window_size - n),
    )
