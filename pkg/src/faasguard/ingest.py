"""Readers and writers for the on-disk trace formats.

Three formats:

* flat events: NDJSON, one event object per line, camelCase keys matching
  FunctionEvent.to_record().
* segment documents: one JSON object per function execution with nested
  subsegments; flattened depth-first into events.
* label files: NDJSON of {"functionFlowId": ..., "label": ...}; flows absent
  from the file are benign by contract.
"""

from __future__ import annotations

import json
from pathlib import Path
from typing import Iterable, Mapping

from .errors import DataError
from .model import BENIGN_LABEL, FunctionEvent, VALID_LABELS, validate_event


def parse_event_lines(lines: Iterable[str]) -> list[FunctionEvent]:
    """Parse flat NDJSON event lines.

    Blank lines are skipped. Malformed JSON or invalid events raise DataError
    carrying the 1-based line number. Unknown keys are ignored.
    """
    events = []
    for lineno, line in enumerate(lines, start=1):
        stripped = line.strip()
        if not stripped:
            continue
        try:
            record = json.loads(stripped)
        except json.JSONDecodeError as exc:
            raise DataError(f"line {lineno}: malformed JSON ({exc.msg})") from exc
        if not isinstance(record, dict):
            raise DataError(f"line {lineno}: event line must be a JSON object")
        try:
            events.append(validate_event(record))
        except DataError as exc:
            raise DataError(f"line {lineno}: {exc}") from exc
    return events


def load_events(path: str | Path) -> list[FunctionEvent]:
    with open(path, "r", encoding="utf-8") as fh:
        return parse_event_lines(fh)


def event_lines(events: Iterable[FunctionEvent]) -> str:
    """Serialize events to NDJSON text in canonical key order."""
    out = []
    for ev in events:
        out.append(json.dumps(ev.to_record(), separators=(",", ":")))
    return "\n".join(out) + ("\n" if out else "")


def save_events(path: str | Path, events: Iterable[FunctionEvent]) -> None:
    Path(path).write_text(event_lines(events), encoding="utf-8")


_CONTEXT_KEYS = ("applicationName", "applicationFlowId", "functionName", "functionFlowId")


def parse_segment_document(
    doc: Mapping, flow_context: Mapping | None = None
) -> list[FunctionEvent]:
    """Flatten one nested segment document into events.

    The document has keys name, id, start, end, optional type/targetResource,
    and optional subsegments (a list of documents of the same shape). Flow
    identifiers (applicationName, applicationFlowId, functionName,
    functionFlowId) are read from the root document; flow_context supplies any
    the document omits. Children get eventParentName = parent's name. The
    result is sorted by (startTime, eventId).
    """
    context = dict(flow_context or {})
    ids = {}
    for key in _CONTEXT_KEYS:
        value = doc.get(key, context.get(key))
        if not isinstance(value, str) or not value:
            raise DataError(f"segment document missing flow identifier {key!r}")
        ids[key] = value

    events: list[FunctionEvent] = []

    def walk(node: Mapping, parent_name: str) -> None:
        if not isinstance(node, Mapping):
            raise DataError("segment node must be a JSON object")
        for key in ("name", "id", "start", "end"):
            if key not in node:
                raise DataError(f"segment node missing key {key!r}")
        record = {
            "applicationName": ids["applicationName"],
            "applicationFlowId": ids["applicationFlowId"],
            "functionName": ids["functionName"],
            "functionFlowId": ids["functionFlowId"],
            "eventId": node["id"],
            "startTime": node["start"],
            "endTime": node["end"],
            "eventName": node["name"],
            "eventType": node.get("type", ""),
            "eventParentName": parent_name,
            "eventTargetResource": node.get("targetResource", ""),
        }
        events.append(validate_event(record))
        children = node.get("subsegments", [])
        if not isinstance(children, list):
            raise DataError("segment subsegments must be a list")
        for child in children:
            walk(child, node["name"])

    walk(doc, "")
    events.sort(key=lambda e: (e.start_time, e.event_id))
    return events


def parse_label_lines(lines: Iterable[str]) -> dict[str, str]:
    """Parse a label file into {functionFlowId: label}.

    Unknown label tokens and conflicting duplicates raise DataError; repeated
    identical entries are tolerated.
    """
    labels: dict[str, str] = {}
    for lineno, line in enumerate(lines, start=1):
        stripped = line.strip()
        if not stripped:
            continue
        try:
            record = json.loads(stripped)
        except json.JSONDecodeError as exc:
            raise DataError(f"line {lineno}: malformed JSON ({exc.msg})") from exc
        if not isinstance(record, dict):
            raise DataError(f"line {lineno}: label line must be a JSON object")
        flow_id = record.get("functionFlowId")
        label = record.get("label")
        if not isinstance(flow_id, str) or not flow_id:
            raise DataError(f"line {lineno}: missing functionFlowId")
        if label not in VALID_LABELS:
            raise DataError(f"line {lineno}: unknown label {label!r}")
        if flow_id in labels and labels[flow_id] != label:
            raise DataError(
                f"line {lineno}: conflicting labels for flow {flow_id!r}: "
                f"{labels[flow_id]!r} vs {label!r}"
            )
        labels[flow_id] = label
    return labels


def load_labels(path: str | Path) -> dict[str, str]:
    with open(path, "r", encoding="utf-8") as fh:
        return parse_label_lines(fh)


def resolve_labels(
    labels: Mapping[str, str], flow_ids: Iterable[str]
) -> dict[str, str]:
    """Total label map over flow_ids: flows absent from the file are benign.

    Label files only need to name the anomalous flows; this completes the
    map for a concrete set of flows. Entries for ids outside flow_ids are
    dropped — whether those indicate a mispaired file is the caller's call.
    """
    return {fid: labels.get(fid, BENIGN_LABEL) for fid in flow_ids}


def label_lines(labels: Mapping[str, str]) -> str:
    out = []
    for flow_id, label in labels.items():
        out.append(json.dumps({"functionFlowId": flow_id, "label": label},
                              separators=(",", ":")))
    return "\n".join(out) + ("\n" if out else "")


def save_labels(path: str | Path, labels: Mapping[str, str]) -> None:
    Path(path).write_text(label_lines(labels), encoding="utf-8")
