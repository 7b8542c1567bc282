"""Corpus generation, corpus surgery, and dataset emission."""

from __future__ import annotations

import json
import math
from collections import Counter
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from ..errors import ConfigError, DataError
from ..ingest import save_events, save_labels
from ..model import (
    BENIGN_LABEL,
    VALID_LABELS,
    FunctionEvent,
    assemble_function_flows,
)
from .attacks import applicable_labels, inject_attack
from .config import SimConfig
from .templates import (
    AIRLINE_APP,
    AIRLINE_TEMPLATES,
    VOD_APP,
    VOD_TEMPLATES,
    FunctionTemplate,
    build_flow_events,
)

BASE_EPOCH_MS = 1_760_000_000_000
DAY_MS = 86_400_000
SCHEDULED_INGEST_PERIOD = 10  # airline: loyalty ingest every N-th iteration


@dataclass
class LabeledCorpus:
    """Events plus ground-truth labels and a bookkeeping manifest."""

    events: list[FunctionEvent]
    labels: dict[str, str]
    manifest: dict

    def __post_init__(self) -> None:
        flow_ids = {e.function_flow_id for e in self.events}
        if flow_ids != set(self.labels):
            raise DataError(
                "corpus labels must cover exactly the flows present in the "
                "events"
            )
        bad = set(self.labels.values()) - VALID_LABELS
        if bad:
            raise DataError(f"corpus contains unknown labels: {sorted(bad)}")
        counts = self.manifest.get("counts", {})
        expected = _count_block(self.events, self.labels)
        for key in ("events", "flows", "labels", "functions"):
            if counts.get(key) != expected[key]:
                raise DataError(
                    f"manifest count {key!r} disagrees with corpus contents"
                )

    @property
    def flow_ids(self) -> set[str]:
        return set(self.labels)


def _count_block(events: Sequence[FunctionEvent], labels: dict) -> dict:
    per_function = Counter()
    seen = set()
    for e in events:
        if e.function_flow_id not in seen:
            seen.add(e.function_flow_id)
            per_function[e.function_name] += 1
    return {
        "events": len(events),
        "flows": len(seen),
        "labels": dict(sorted(Counter(labels.values()).items())),
        "functions": dict(sorted(per_function.items())),
    }


def _make_corpus(events, labels, manifest_base: dict) -> LabeledCorpus:
    manifest = dict(manifest_base)
    manifest["counts"] = _count_block(events, labels)
    return LabeledCorpus(events=events, labels=labels, manifest=manifest)


class _Generation:
    """Mutable state shared by the per-application generators."""

    def __init__(self, config: SimConfig, app_name: str, templates):
        self.config = config
        self.app_name = app_name
        self.templates = templates
        self.rng = np.random.default_rng([config.seed])
        self.weights = config.weights()
        self.events: list[FunctionEvent] = []
        self.labels: dict[str, str] = {}
        self.cold_flow_ids: list[str] = []
        self.behavior = Counter()
        self.targeted_invocations = 0
        self.flow_seq = 0
        self.arrival_ms = BASE_EPOCH_MS

    def next_arrival(self) -> int:
        spacing = self.config.arrival_spacing_ms
        if self.config.arrival_process == "diurnal":
            phase = (self.arrival_ms % DAY_MS) / DAY_MS
            spacing = spacing * (1.45 - 0.9 * math.cos(2 * math.pi * phase))
        gap = max(1, int(round(spacing * self.rng.uniform(0.5, 1.5))))
        self.arrival_ms += gap
        return self.arrival_ms

    def step_gap(self) -> int:
        """Latency between chained function invocations."""
        return max(1, int(round(self.rng.lognormal(math.log(8.0), 0.4))))

    def choose_attack(self, flow) -> str | None:
        usable = applicable_labels(flow)
        candidates = [
            (label, self.weights[label])
            for label in sorted(self.weights)
            if self.weights[label] > 0 and label in usable
        ]
        if not candidates:
            return None
        names = [c[0] for c in candidates]
        w = np.array([c[1] for c in candidates], dtype=np.float64)
        return names[int(self.rng.choice(len(names), p=w / w.sum()))]

    def emit_flow(
        self,
        template: FunctionTemplate,
        application_flow_id: str,
        start_ms: int,
        *,
        error_path: bool = False,
    ) -> int:
        """Generate one function invocation; returns its wall-clock end."""
        flow_id = f"ff-{self.config.application}-{self.flow_seq:06d}"
        self.flow_seq += 1
        cold = self.rng.random() < self.config.cold_start_rate
        events = build_flow_events(
            template,
            application_name=self.app_name,
            application_flow_id=application_flow_id,
            function_flow_id=flow_id,
            start_ms=start_ms,
            rng=self.rng,
            cold_start=cold,
            error_path=error_path,
        )
        label = BENIGN_LABEL
        if template.targeted and not error_path:
            self.targeted_invocations += 1
            if (self.config.anomaly_rate > 0
                    and self.rng.random() < self.config.anomaly_rate):
                flow = assemble_function_flows(events)[0]
                chosen = self.choose_attack(flow)
                if chosen is not None:
                    flow = inject_attack(flow, chosen, self.rng)
                    events = list(flow.events)
                    label = chosen
        if cold:
            self.cold_flow_ids.append(flow_id)
        self.events.extend(events)
        self.labels[flow_id] = label
        return max(e.end_time for e in events)

    def corpus(self) -> LabeledCorpus:
        base = {
            "application": self.config.application,
            "config": self.config.to_dict(),
            "behavior": dict(sorted(self.behavior.items())),
            "targetedInvocations": self.targeted_invocations,
            "anomalies": sum(
                1 for v in self.labels.values() if v != BENIGN_LABEL
            ),
            "coldStartFlowIds": sorted(self.cold_flow_ids),
        }
        return _make_corpus(self.events, self.labels, base)


def simulate_airline(config: SimConfig) -> LabeledCorpus:
    """Airline booking sessions.

    Per iteration: a flight search, then with probability 0.8 a two-way
    booking (two booking chains), otherwise a 50/50 split between a one-way
    booking and browsing only. Booking sessions visit the loyalty profile
    with probability 0.7 and re-open the booking with probability 0.5. A
    booking chain invokes ReserveBooking, CollectPayment, ConfirmBooking,
    and NotifyBooking in sequence. Every SCHEDULED_INGEST_PERIOD-th
    iteration additionally fires the time-based IngestLoyalty function.
    """
    if config.application != "airline":
        raise ConfigError("simulate_airline needs application='airline'")
    g = _Generation(config, AIRLINE_APP, AIRLINE_TEMPLATES)
    t = AIRLINE_TEMPLATES

    for k in range(config.iterations):
        start = g.next_arrival()
        af_id = f"af-airline-{k:06d}"
        cursor = g.emit_flow(t["SearchFlights"], af_id, start) + g.step_gap()

        if g.rng.random() < 0.8:
            bookings = 2
            g.behavior["twoWayIterations"] += 1
        elif g.rng.random() < 0.5:
            bookings = 1
            g.behavior["oneWayIterations"] += 1
        else:
            bookings = 0
            g.behavior["browseIterations"] += 1

        if bookings and g.rng.random() < 0.7:
            g.behavior["loyaltyVisits"] += 1
            cursor = g.emit_flow(t["GetLoyalty"], af_id, cursor) + g.step_gap()

        for _ in range(bookings):
            g.behavior["bookingChains"] += 1
            for fn in ("ReserveBooking", "CollectPayment",
                       "ConfirmBooking", "NotifyBooking"):
                cursor = g.emit_flow(t[fn], af_id, cursor) + g.step_gap()

        if bookings and g.rng.random() < 0.5:
            g.behavior["bookingViews"] += 1
            g.emit_flow(t["GetBooking"], af_id, cursor)

        if k % SCHEDULED_INGEST_PERIOD == 0:
            g.behavior["scheduledIngests"] += 1
            g.emit_flow(t["IngestLoyalty"], f"af-airline-sched-{k:06d}",
                        start + 30_000)

    return g.corpus()


def simulate_vod(config: SimConfig) -> LabeledCorpus:
    """Video-on-demand upload pipeline.

    Per upload: the file arrives via mail with probability 0.2 (capped at
    mail_cap mails, then always direct) and is otherwise uploaded directly.
    Ingestion succeeds with probability 0.9; failures take IngestValidate's
    error path and stop. Successful uploads run MediaProcess,
    PublishNotify, and DynamoUpdate in sequence.
    """
    if config.application != "vod":
        raise ConfigError("simulate_vod needs application='vod'")
    g = _Generation(config, VOD_APP, VOD_TEMPLATES)
    t = VOD_TEMPLATES

    for k in range(config.files_uploaded):
        start = g.next_arrival()
        af_id = f"af-vod-{k:06d}"
        cap = config.mail_cap
        wants_mail = g.rng.random() < 0.2
        mail = wants_mail and (cap is None or g.behavior["mailUploads"] < cap)
        success = g.rng.random() < 0.9

        cursor = start
        if mail:
            g.behavior["mailUploads"] += 1
            cursor = g.emit_flow(t["MailIngest"], af_id, cursor) + g.step_gap()
        else:
            g.behavior["directUploads"] += 1

        cursor = g.emit_flow(
            t["IngestValidate"], af_id, cursor, error_path=not success
        ) + g.step_gap()
        if success:
            g.behavior["successfulUploads"] += 1
            for fn in ("MediaProcess", "PublishNotify", "DynamoUpdate"):
                cursor = g.emit_flow(t[fn], af_id, cursor) + g.step_gap()
        else:
            g.behavior["failedUploads"] += 1

    return g.corpus()


def simulate(config: SimConfig) -> LabeledCorpus:
    if config.application == "airline":
        return simulate_airline(config)
    return simulate_vod(config)


def merge_corpora(*corpora: LabeledCorpus) -> LabeledCorpus:
    """Concatenate corpora with disjoint flow id spaces."""
    if not corpora:
        raise DataError("merge_corpora needs at least one corpus")
    events: list[FunctionEvent] = []
    labels: dict[str, str] = {}
    cold: list[str] = []
    for c in corpora:
        overlap = c.flow_ids & set(labels)
        if overlap:
            raise DataError(
                f"corpora share flow ids (e.g. {sorted(overlap)[0]!r})"
            )
        events.extend(c.events)
        labels.update(c.labels)
        cold.extend(c.manifest.get("coldStartFlowIds", []))
    base = {
        "application": "+".join(c.manifest["application"] for c in corpora),
        "config": [c.manifest.get("config") for c in corpora],
        "behavior": {},
        "targetedInvocations": sum(
            c.manifest.get("targetedInvocations", 0) for c in corpora
        ),
        "anomalies": sum(
            1 for v in labels.values() if v != BENIGN_LABEL
        ),
        "coldStartFlowIds": sorted(cold),
    }
    return _make_corpus(events, labels, base)


def partition_by_function(
    corpus: LabeledCorpus, function_name: str
) -> tuple[LabeledCorpus, LabeledCorpus]:
    """Split a corpus into (flows of other functions, flows of one function)."""
    target_ids = {
        e.function_flow_id for e in corpus.events
        if e.function_name == function_name
    }
    if not target_ids:
        raise DataError(
            f"corpus contains no flows of function {function_name!r}"
        )

    def subset(keep: set[str]) -> LabeledCorpus:
        events = [e for e in corpus.events if e.function_flow_id in keep]
        labels = {f: corpus.labels[f] for f in keep}
        base = {
            "application": corpus.manifest["application"],
            "config": corpus.manifest.get("config"),
            "behavior": {},
            "targetedInvocations": corpus.manifest.get(
                "targetedInvocations", 0
            ),
            "anomalies": sum(1 for v in labels.values() if v != BENIGN_LABEL),
            "coldStartFlowIds": sorted(
                set(corpus.manifest.get("coldStartFlowIds", [])) & keep
            ),
        }
        return _make_corpus(events, labels, base)

    return subset(corpus.flow_ids - target_ids), subset(target_ids)


@dataclass(frozen=True)
class DatasetPaths:
    """Files written by emit_dataset."""

    train_events: Path
    val_events: Path
    test_events: Path
    train_labels: Path
    val_labels: Path
    test_labels: Path
    manifest: Path


def sorted_events(events: Iterable[FunctionEvent]) -> list[FunctionEvent]:
    """Merged-stream order used for emitted event files."""
    return sorted(
        events, key=lambda e: (e.start_time, e.function_flow_id, e.event_id)
    )


def split_flow_ids(
    flow_ids: Sequence[str], split_ratio: float, seed: int
) -> tuple[list[str], list[str]]:
    """Deterministic train/validation split at flow granularity.

    The validation side receives floor((1 - split_ratio) * n) flows; both
    sides must end up non-empty.
    """
    if not 0.0 < split_ratio < 1.0:
        raise ConfigError("split_ratio must lie strictly between 0 and 1")
    ids = sorted(flow_ids)
    n = len(ids)
    n_val = int(n * (1.0 - split_ratio))
    if n_val < 1:
        raise DataError("validation split is empty; lower split_ratio")
    if n - n_val < 1:
        raise DataError("training split is empty; raise split_ratio")
    perm = np.random.default_rng([seed, 2]).permutation(n)
    val = sorted(ids[i] for i in perm[:n_val])
    train = sorted(ids[i] for i in perm[n_val:])
    return train, val


def emit_dataset(
    benign: LabeledCorpus,
    test: LabeledCorpus,
    split_ratio: float,
    out_dir: str | Path,
    seed: int | None = None,
) -> DatasetPaths:
    """Write train/validation/test event files, label files, and a manifest.

    The benign corpus is split 80/20 (by default) at function-flow
    granularity into train and validation; it must not contain anomalous
    labels. The test corpus passes through unchanged with its labels.
    """
    anomalous = sorted(
        f for f, l in benign.labels.items() if l != BENIGN_LABEL
    )
    if anomalous:
        raise DataError(
            "benign corpus contains anomalously labeled flows "
            f"(e.g. {anomalous[0]!r}); train/validation data must be benign"
        )
    if seed is None:
        config = benign.manifest.get("config") or {}
        seed = config.get("seed", 0) if isinstance(config, dict) else 0

    train_ids, val_ids = split_flow_ids(
        sorted(benign.flow_ids), split_ratio, seed
    )
    train_set, val_set = set(train_ids), set(val_ids)

    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = DatasetPaths(
        train_events=out / "train_events.ndjson",
        val_events=out / "val_events.ndjson",
        test_events=out / "test_events.ndjson",
        train_labels=out / "train_labels.ndjson",
        val_labels=out / "val_labels.ndjson",
        test_labels=out / "test_labels.ndjson",
        manifest=out / "manifest.json",
    )

    save_events(paths.train_events, sorted_events(
        e for e in benign.events if e.function_flow_id in train_set))
    save_events(paths.val_events, sorted_events(
        e for e in benign.events if e.function_flow_id in val_set))
    save_events(paths.test_events, sorted_events(test.events))
    save_labels(paths.train_labels, {f: BENIGN_LABEL for f in train_ids})
    save_labels(paths.val_labels, {f: BENIGN_LABEL for f in val_ids})
    save_labels(paths.test_labels,
                {f: test.labels[f] for f in sorted(test.labels)})

    manifest = {
        "split": {
            "ratio": split_ratio,
            "seed": seed,
            "trainFlows": len(train_ids),
            "valFlows": len(val_ids),
            "testFlows": len(test.labels),
        },
        "benign": benign.manifest,
        "test": test.manifest,
        "files": {k: str(getattr(paths, k)) for k in (
            "train_events", "val_events", "test_events",
            "train_labels", "val_labels", "test_labels",
        )},
    }
    paths.manifest.write_text(
        json.dumps(manifest, indent=2, sort_keys=True) + "\n",
        encoding="utf-8",
    )
    return paths
