"""Trained ensemble container and its on-disk binary format.

Layout (all integers little-endian; exact byte layout is the contract,
see docs/model-format.md):

    offset  size  field
    0       8     magic "FGAE-ENS"
    8       4     uint32 format version (currently 1)
    12      32    sha256 of the metadata JSON bytes
    44      8     uint64 payload length N
    52      N     payload
    52+N    32    sha256 of the payload bytes

    payload:
    0       4     uint32 metadata JSON length M
    4       M     metadata JSON (utf-8, sorted keys, compact separators)
    4+M     ...   raw float64 C-order array data, concatenated in the order
                  listed under meta["arrays"]

Files must end exactly after the payload digest; trailing bytes are an
error. Arrays round-trip bit for bit.
"""

from __future__ import annotations

import hashlib
import json
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from ..errors import (
    DataError,
    ModelDigestError,
    ModelFormatError,
    ModelTruncatedError,
    ModelVersionError,
)
from ..features import WINDOW_SIZES, CharEmbedder, FeatureStats
from .network import AutoencoderParams, parameter_count

MAGIC = b"FGAE-ENS"
FORMAT_VERSION = 1
_HEADER = struct.Struct("<8sI32sQ")


@dataclass(frozen=True)
class TrainedEnsemble:
    """Three trained autoencoders plus everything needed to score flows."""

    input_dim: int
    hidden_widths: tuple[int, ...]
    params: dict[int, AutoencoderParams]
    thresholds: dict[int, float]
    stats: FeatureStats
    embedder: CharEmbedder
    metadata: dict

    def __post_init__(self):
        sizes = tuple(sorted(self.params))
        if sizes != WINDOW_SIZES or tuple(sorted(self.thresholds)) != WINDOW_SIZES:
            raise DataError(
                f"ensemble must carry exactly window sizes {WINDOW_SIZES}, got {sizes}"
            )
        for w, threshold in self.thresholds.items():
            if not (threshold > 0.0 and np.isfinite(threshold)):
                raise DataError(f"threshold for window size {w} must be > 0")
        if self.stats.mins.shape != (self.input_dim,):
            raise DataError("feature stats width does not match input_dim")
        for w, p in self.params.items():
            if p.input_dim != self.input_dim or p.hidden_widths != tuple(self.hidden_widths):
                raise DataError(f"autoencoder for window size {w} has mismatched shape")


def serialize_model(ensemble: TrainedEnsemble) -> bytes:
    arrays: list[tuple[str, np.ndarray]] = [
        ("stats_mins", ensemble.stats.mins),
        ("stats_maxs", ensemble.stats.maxs),
        ("thresholds", np.array([ensemble.thresholds[w] for w in WINDOW_SIZES])),
    ]
    for w in WINDOW_SIZES:
        arrays.append((f"theta_{w}", ensemble.params[w].theta))

    emb_state = ensemble.embedder.state()
    table_tokens = sorted(emb_state["table"]) if emb_state["table"] else None
    if table_tokens:
        table = np.stack([ensemble.embedder.table[t] for t in table_tokens])
        arrays.append(("embedder_table", table))

    meta = {
        "arrays": [{"name": n, "shape": list(a.shape)} for n, a in arrays],
        "embedder": {
            "seed": emb_state["seed"],
            "dimension": emb_state["dimension"],
            "table_tokens": table_tokens,
        },
        "hidden_widths": list(ensemble.hidden_widths),
        "input_dim": ensemble.input_dim,
        "metadata": ensemble.metadata,
        "window_sizes": list(WINDOW_SIZES),
    }
    meta_bytes = json.dumps(meta, sort_keys=True, separators=(",", ":")).encode("utf-8")

    payload = bytearray()
    payload += struct.pack("<I", len(meta_bytes))
    payload += meta_bytes
    for _, arr in arrays:
        payload += np.ascontiguousarray(arr, dtype="<f8").tobytes()
    payload = bytes(payload)

    header = _HEADER.pack(
        MAGIC, FORMAT_VERSION, hashlib.sha256(meta_bytes).digest(), len(payload)
    )
    return header + payload + hashlib.sha256(payload).digest()


def parse_model(data: bytes) -> TrainedEnsemble:
    if len(data) < _HEADER.size:
        raise ModelTruncatedError(
            f"file is {len(data)} bytes, shorter than the {_HEADER.size}-byte header"
        )
    magic, version, meta_digest, payload_len = _HEADER.unpack_from(data, 0)
    if magic != MAGIC:
        raise ModelFormatError(f"bad magic {magic!r}")
    if version != FORMAT_VERSION:
        raise ModelVersionError(
            f"format version {version} unsupported (expected {FORMAT_VERSION})"
        )
    end = _HEADER.size + payload_len + 32
    if len(data) < end:
        raise ModelTruncatedError(
            f"file is {len(data)} bytes but declares {end}"
        )
    if len(data) > end:
        raise ModelFormatError(f"{len(data) - end} trailing bytes after digest")

    payload = data[_HEADER.size : _HEADER.size + payload_len]
    if hashlib.sha256(payload).digest() != data[end - 32 : end]:
        raise ModelDigestError("payload digest mismatch")

    if payload_len < 4:
        raise ModelTruncatedError("payload shorter than metadata length field")
    (meta_len,) = struct.unpack_from("<I", payload, 0)
    if payload_len < 4 + meta_len:
        raise ModelTruncatedError("payload shorter than declared metadata")
    meta_bytes = payload[4 : 4 + meta_len]
    if hashlib.sha256(meta_bytes).digest() != meta_digest:
        raise ModelDigestError("metadata digest mismatch")
    try:
        meta = json.loads(meta_bytes.decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise ModelFormatError(f"metadata is not valid JSON: {exc}") from exc

    arrays = {}
    offset = 4 + meta_len
    for entry in meta["arrays"]:
        shape = tuple(entry["shape"])
        size = int(np.prod(shape, dtype=np.int64)) * 8
        if offset + size > payload_len:
            raise ModelTruncatedError(f"array {entry['name']!r} exceeds payload")
        arrays[entry["name"]] = np.frombuffer(
            payload, dtype="<f8", count=size // 8, offset=offset
        ).reshape(shape).copy()
        offset += size
    if offset != payload_len:
        raise ModelFormatError("payload length does not match array table")

    input_dim = meta["input_dim"]
    hidden_widths = tuple(meta["hidden_widths"])
    window_sizes = tuple(meta["window_sizes"])
    expected = parameter_count(input_dim, hidden_widths)
    params = {}
    for w in window_sizes:
        theta = arrays[f"theta_{w}"]
        if theta.shape != (expected,):
            raise ModelFormatError(f"theta_{w} has wrong length")
        params[w] = AutoencoderParams(input_dim, hidden_widths, theta)

    emb_meta = meta["embedder"]
    table = None
    if emb_meta["table_tokens"]:
        rows = arrays["embedder_table"]
        table = {t: rows[i] for i, t in enumerate(emb_meta["table_tokens"])}
    embedder = CharEmbedder(
        seed=emb_meta["seed"], dimension=emb_meta["dimension"], table=table
    )

    thresholds = dict(zip(window_sizes, arrays["thresholds"].tolist()))
    return TrainedEnsemble(
        input_dim=input_dim,
        hidden_widths=hidden_widths,
        params=params,
        thresholds=thresholds,
        stats=FeatureStats(mins=arrays["stats_mins"], maxs=arrays["stats_maxs"]),
        embedder=embedder,
        metadata=meta["metadata"],
    )


def save_model(path: str | Path, ensemble: TrainedEnsemble) -> None:
    Path(path).write_bytes(serialize_model(ensemble))


def load_model(path: str | Path) -> TrainedEnsemble:
    return parse_model(Path(path).read_bytes())
