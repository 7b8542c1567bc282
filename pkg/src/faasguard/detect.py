"""Threshold calibration and anomaly verdicts.

Thresholds are derived from validation reconstruction errors by a 1-D
density clustering pass: eps is the 99th percentile of the errors
(linear-interpolated), minPts is 5 with inclusive neighborhoods that count
the point itself. Clusters holding more than 5% of the validation set are
retained and the threshold is twice the largest retained error; if nothing
passes the size cut, the largest cluster (ties to the lowest cluster id)
is used instead.

A flow is anomalous iff any window of any ensemble member strictly exceeds
that member's threshold. Window-granularity metrics inherit each window's
label from its flow.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

from .autoencoder.network import reconstruction_errors
from .autoencoder.persist import TrainedEnsemble
from .errors import DataError
from .features import WINDOW_SIZES, windows_for_flow
from .model import ATTACK_LABELS, BENIGN_LABEL, VALID_LABELS, FunctionFlow

__all__ = [
    "DbscanParams",
    "ThresholdResult",
    "dbscan_1d",
    "compute_threshold",
    "FlowReport",
    "flow_verdict",
    "score_flow",
    "score_flows",
    "report_lines",
    "parse_report_lines",
    "save_reports",
    "load_reports",
    "MetricsReport",
    "evaluate_metrics",
]


@dataclass(frozen=True)
class DbscanParams:
    """Density clustering parameters for 1-D error values."""

    eps: float
    min_pts: int = 5

    def __post_init__(self) -> None:
        if not np.isfinite(self.eps) or self.eps < 0:
            raise DataError("eps must be a finite non-negative number")
        if self.min_pts < 1:
            raise DataError("min_pts must be >= 1")


def dbscan_1d(values: np.ndarray, params: DbscanParams) -> np.ndarray:
    """Density clustering specialised to one dimension.

    Returns an integer label per value: -1 for noise, otherwise a cluster
    id. Neighborhoods are inclusive (|a - b| <= eps) and count the point
    itself; core points have at least min_pts neighbors. Cluster ids ascend
    with each cluster's minimum value. Border points join the cluster of
    their nearest core point, distance ties going to the lower cluster id.

    Runs in O(n log n) via a sorted sweep (the test suite checks it against
    a quadratic brute-force reference).
    """
    values = np.asarray(values, dtype=np.float64).ravel()
    n = values.size
    if n == 0:
        raise DataError("dbscan_1d needs a non-empty value array")
    if not np.isfinite(values).all():
        raise DataError("dbscan_1d values must be finite")
    eps = params.eps

    order = np.argsort(values, kind="stable")
    sv = values[order]

    # inclusive neighborhood extents via two-pointer sweeps; the comparison
    # is written exactly like the pairwise form so boundaries agree with a
    # distance-matrix implementation bit for bit
    lo = np.empty(n, dtype=np.int64)
    j = 0
    for i in range(n):
        while sv[i] - sv[j] > eps:
            j += 1
        lo[i] = j
    hi = np.empty(n, dtype=np.int64)
    k = n - 1
    for i in range(n - 1, -1, -1):
        while sv[k] - sv[i] > eps:
            k -= 1
        hi[i] = k + 1
    core = (hi - lo) >= params.min_pts

    # cores form clusters as maximal runs of consecutive core points whose
    # value gap is <= eps; assigning ids in sorted order makes them ascend
    # by cluster minimum
    labels_sorted = np.full(n, -1, dtype=np.int64)
    core_pos = np.nonzero(core)[0]
    cluster = -1
    prev_val = None
    for p in core_pos:
        if prev_val is None or sv[p] - prev_val > eps:
            cluster += 1
        labels_sorted[p] = cluster
        prev_val = sv[p]

    if core_pos.size:
        # border points: nearest core by value; ties prefer the earlier
        # (lower-valued) core, whose cluster id is never larger
        prev_core = np.full(n, -1, dtype=np.int64)
        last = -1
        for i in range(n):
            if core[i]:
                last = i
            prev_core[i] = last
        next_core = np.full(n, -1, dtype=np.int64)
        nxt = -1
        for i in range(n - 1, -1, -1):
            if core[i]:
                nxt = i
            next_core[i] = nxt
        for i in range(n):
            if core[i]:
                continue
            best_pos = -1
            best_dist = np.inf
            if next_core[i] != -1:
                best_pos = next_core[i]
                best_dist = sv[best_pos] - sv[i]
            if prev_core[i] != -1:
                d = sv[i] - sv[prev_core[i]]
                if d <= best_dist:
                    best_pos = prev_core[i]
                    best_dist = d
            if best_pos != -1 and not best_dist > eps:
                labels_sorted[i] = labels_sorted[best_pos]

    labels = np.empty(n, dtype=np.int64)
    labels[order] = labels_sorted
    return labels


@dataclass(frozen=True)
class ThresholdResult:
    """Calibrated threshold plus clustering diagnostics."""

    threshold: float
    eps: float
    min_pts: int
    labels: np.ndarray
    cluster_sizes: tuple[int, ...]
    retained_clusters: tuple[int, ...]
    fallback_used: bool


def compute_threshold(
    validation_errors: np.ndarray, params: DbscanParams | None = None
) -> ThresholdResult:
    """Derive a detection threshold from validation reconstruction errors."""
    errors = np.asarray(validation_errors, dtype=np.float64).ravel()
    if errors.size == 0:
        raise DataError("validation error set is empty")
    if not np.isfinite(errors).all():
        raise DataError("validation errors must be finite")
    if params is None:
        params = DbscanParams(eps=float(np.percentile(errors, 99.0)), min_pts=5)

    labels = dbscan_1d(errors, params)
    n_clusters = int(labels.max()) + 1
    if n_clusters == 0:
        raise DataError(
            "threshold calibration found no clusters; the validation set is "
            "too small or too sparse"
        )
    sizes = np.bincount(labels[labels >= 0], minlength=n_clusters)
    cutoff = 0.05 * errors.size
    retained = [c for c in range(n_clusters) if sizes[c] > cutoff]
    fallback = False
    if not retained:
        fallback = True
        retained = [int(np.argmax(sizes))]  # first max -> lowest cluster id

    mask = np.isin(labels, retained)
    threshold = 2.0 * float(errors[mask].max())
    return ThresholdResult(
        threshold=threshold,
        eps=params.eps,
        min_pts=params.min_pts,
        labels=labels,
        cluster_sizes=tuple(int(s) for s in sizes),
        retained_clusters=tuple(retained),
        fallback_used=fallback,
    )


@dataclass(frozen=True)
class FlowReport:
    """Per-flow detection outcome across all ensemble members."""

    function_flow_id: str
    function_name: str
    anomalous: bool
    triggering_window_sizes: tuple[int, ...]
    max_error: dict[int, float]
    window_errors: dict[int, tuple[float, ...]]
    window_flags: dict[int, tuple[bool, ...]]
    label: str | None = None

    def to_record(self) -> dict:
        record = {
            "functionFlowId": self.function_flow_id,
            "functionName": self.function_name,
            "verdict": "anomalous" if self.anomalous else "benign",
            "triggeringWindowSizes": list(self.triggering_window_sizes),
            "maxError": {str(w): v for w, v in sorted(self.max_error.items())},
            "windowErrors": {
                str(w): list(v) for w, v in sorted(self.window_errors.items())
            },
            "windowFlags": {
                str(w): list(v) for w, v in sorted(self.window_flags.items())
            },
        }
        if self.label is not None:
            record["label"] = self.label
        return record

    @classmethod
    def from_record(cls, record: Mapping) -> "FlowReport":
        try:
            return cls(
                function_flow_id=record["functionFlowId"],
                function_name=record["functionName"],
                anomalous=record["verdict"] == "anomalous",
                triggering_window_sizes=tuple(record["triggeringWindowSizes"]),
                max_error={int(w): float(v) for w, v in record["maxError"].items()},
                window_errors={
                    int(w): tuple(float(x) for x in v)
                    for w, v in record["windowErrors"].items()
                },
                window_flags={
                    int(w): tuple(bool(x) for x in v)
                    for w, v in record["windowFlags"].items()
                },
                label=record.get("label"),
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise DataError(f"malformed flow report record: {exc}") from exc


def flow_verdict(
    window_errors: Mapping[int, Sequence[float]],
    thresholds: Mapping[int, float],
) -> tuple[bool, tuple[int, ...]]:
    """Any window strictly above its member's threshold flags the flow."""
    triggering = []
    for w in sorted(window_errors):
        if any(e > thresholds[w] for e in window_errors[w]):
            triggering.append(w)
    return bool(triggering), tuple(triggering)


def score_flows(
    ensemble: TrainedEnsemble,
    flows: Sequence[FunctionFlow],
    labels: Mapping[str, str] | None = None,
) -> list[FlowReport]:
    """Score flows against every ensemble member, batching per window size."""
    for flow in flows:
        if not flow.events:
            raise DataError(f"flow {flow.function_flow_id!r} has no events")

    errors_by_size: dict[int, list[np.ndarray]] = {}
    for w in WINDOW_SIZES:
        seqs = [
            windows_for_flow(flow, ensemble.embedder, ensemble.stats, w)
            for flow in flows
        ]
        counts = [s.windows.shape[0] for s in seqs]
        if not seqs:
            errors_by_size[w] = []
            continue
        stacked = np.concatenate([s.windows for s in seqs], axis=0)
        flat = reconstruction_errors(ensemble.params[w], stacked)
        splits = np.split(flat, np.cumsum(counts)[:-1])
        errors_by_size[w] = splits

    reports = []
    for i, flow in enumerate(flows):
        per_size = {w: tuple(float(e) for e in errors_by_size[w][i]) for w in WINDOW_SIZES}
        anomalous, triggering = flow_verdict(per_size, ensemble.thresholds)
        flags = {
            w: tuple(e > ensemble.thresholds[w] for e in per_size[w])
            for w in WINDOW_SIZES
        }
        label = None
        if labels is not None:
            label = labels.get(flow.function_flow_id)
            if label is None:
                raise DataError(
                    f"no label for flow {flow.function_flow_id!r}"
                )
        reports.append(
            FlowReport(
                function_flow_id=flow.function_flow_id,
                function_name=flow.function_name,
                anomalous=anomalous,
                triggering_window_sizes=triggering,
                max_error={w: max(per_size[w]) for w in WINDOW_SIZES},
                window_errors=per_size,
                window_flags=flags,
                label=label,
            )
        )
    return reports


def score_flow(ensemble: TrainedEnsemble, flow: FunctionFlow) -> FlowReport:
    """Score a single flow (convenience wrapper over score_flows)."""
    return score_flows(ensemble, [flow])[0]


def report_lines(reports: Iterable[FlowReport]) -> list[str]:
    return [
        json.dumps(r.to_record(), separators=(",", ":")) for r in reports
    ]


def parse_report_lines(lines: Iterable[str]) -> list[FlowReport]:
    reports = []
    for number, line in enumerate(lines, start=1):
        text = line.strip()
        if not text:
            continue
        try:
            record = json.loads(text)
        except json.JSONDecodeError as exc:
            raise DataError(f"line {number}: invalid JSON: {exc}") from exc
        reports.append(FlowReport.from_record(record))
    return reports


def save_reports(path: str | Path, reports: Iterable[FlowReport]) -> None:
    Path(path).write_text("".join(line + "\n" for line in report_lines(reports)))


def load_reports(path: str | Path) -> list[FlowReport]:
    return parse_report_lines(Path(path).read_text().splitlines())


@dataclass(frozen=True)
class MetricsReport:
    """Confusion counts and derived rates at one granularity."""

    granularity: str
    tp: int
    fp: int
    tn: int
    fn: int
    precision: float
    recall: float
    f1: float
    fpr: float
    fnr: float
    flags: tuple[str, ...]
    per_attack: dict[str, "MetricsReport"] = field(default_factory=dict)

    def to_dict(self) -> dict:
        out = {
            "granularity": self.granularity,
            "counts": {"tp": self.tp, "fp": self.fp, "tn": self.tn, "fn": self.fn},
            "precision": self.precision,
            "recall": self.recall,
            "f1": self.f1,
            "fpr": self.fpr,
            "fnr": self.fnr,
            "flags": list(self.flags),
        }
        out["perAttack"] = {
            name: sub.to_dict() for name, sub in self.per_attack.items()
        }
        return out

    @classmethod
    def from_dict(cls, data: Mapping) -> "MetricsReport":
        try:
            counts = data["counts"]
            return cls(
                granularity=data["granularity"],
                tp=int(counts["tp"]),
                fp=int(counts["fp"]),
                tn=int(counts["tn"]),
                fn=int(counts["fn"]),
                precision=float(data["precision"]),
                recall=float(data["recall"]),
                f1=float(data["f1"]),
                fpr=float(data["fpr"]),
                fnr=float(data["fnr"]),
                flags=tuple(data["flags"]),
                per_attack={
                    name: cls.from_dict(sub)
                    for name, sub in data.get("perAttack", {}).items()
                },
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise DataError(f"malformed metrics record: {exc}") from exc


def _rate(num: int, den: int, name: str, flags: list[str]) -> float:
    if den == 0:
        flags.append(f"{name}_undefined")
        return 0.0
    return num / den


def _metrics_from_counts(
    tp: int, fp: int, tn: int, fn: int, granularity: str,
    per_attack: dict[str, "MetricsReport"] | None = None,
) -> MetricsReport:
    flags: list[str] = []
    precision = _rate(tp, tp + fp, "precision", flags)
    recall = _rate(tp, tp + fn, "recall", flags)
    fpr = _rate(fp, fp + tn, "fpr", flags)
    fnr = _rate(fn, fn + tp, "fnr", flags)
    if precision + recall == 0.0:
        flags.append("f1_undefined")
        f1 = 0.0
    else:
        f1 = 2.0 * precision * recall / (precision + recall)
    return MetricsReport(
        granularity=granularity,
        tp=tp, fp=fp, tn=tn, fn=fn,
        precision=precision, recall=recall, f1=f1, fpr=fpr, fnr=fnr,
        flags=tuple(flags),
        per_attack=per_attack or {},
    )


def _confusion(
    reports: Sequence[FlowReport],
    labels: Mapping[str, str],
    granularity: str,
) -> tuple[int, int, int, int]:
    tp = fp = tn = fn = 0
    for r in reports:
        actual = labels[r.function_flow_id] != BENIGN_LABEL
        if granularity == "flow":
            samples = [r.anomalous]
        else:
            samples = [
                flag for w in sorted(r.window_flags) for flag in r.window_flags[w]
            ]
        for predicted in samples:
            if actual and predicted:
                tp += 1
            elif actual:
                fn += 1
            elif predicted:
                fp += 1
            else:
                tn += 1
    return tp, fp, tn, fn


def evaluate_metrics(
    reports: Sequence[FlowReport],
    labels: Mapping[str, str],
    granularity: str = "flow",
) -> MetricsReport:
    """Confusion metrics over scored flows.

    granularity "flow" treats each flow as one sample; "window" pools every
    window of every ensemble member, each inheriting its flow's label.
    Zero-denominator rates come back 0.0 with a "<name>_undefined" flag.
    The per-attack breakdown scores each attack against the benign flows
    only (flows carrying other attack labels are excluded from that row).
    """
    if granularity not in ("flow", "window"):
        raise DataError(f"unknown granularity {granularity!r}")
    for r in reports:
        if r.function_flow_id not in labels:
            raise DataError(f"no label for flow {r.function_flow_id!r}")
        token = labels[r.function_flow_id]
        if token not in VALID_LABELS:
            raise DataError(f"unknown label {token!r}")

    per_attack: dict[str, MetricsReport] = {}
    present = {labels[r.function_flow_id] for r in reports}
    for attack in ATTACK_LABELS:
        if attack not in present:
            continue
        subset = [
            r for r in reports
            if labels[r.function_flow_id] in (BENIGN_LABEL, attack)
        ]
        per_attack[attack] = _metrics_from_counts(
            *_confusion(subset, labels, granularity), granularity
        )

    return _metrics_from_counts(
        *_confusion(reports, labels, granularity), granularity,
        per_attack=per_attack,
    )
