"""Deterministic, seeded workload simulator.

Generates labeled trace corpora for the two reference applications (an
airline booking service and a video-on-demand pipeline), including the six
attack mutations, cold-start invocations, and benign behavioral variation.
"""

from .attacks import applicable_labels, inject_attack
from .config import (
    AIRLINE_ATTACK_WEIGHTS,
    VOD_ATTACK_WEIGHTS,
    SimConfig,
)
from .generate import (
    DatasetPaths,
    LabeledCorpus,
    emit_dataset,
    merge_corpora,
    partition_by_function,
    simulate,
    simulate_airline,
    simulate_vod,
)

__all__ = [
    "SimConfig",
    "AIRLINE_ATTACK_WEIGHTS",
    "VOD_ATTACK_WEIGHTS",
    "LabeledCorpus",
    "DatasetPaths",
    "simulate",
    "simulate_airline",
    "simulate_vod",
    "merge_corpora",
    "partition_by_function",
    "emit_dataset",
    "inject_attack",
    "applicable_labels",
]
