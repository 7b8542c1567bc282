"""Core trace data model: events, function flows, application flows, labels.

An event is one step observed inside a single function execution. A function
flow is the ordered list of events belonging to one execution; an application
flow groups the function flows triggered by one external action. Optional
string fields use "" for "absent" so downstream vectorization can treat every
field uniformly.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Mapping

from .errors import DataError

BENIGN_LABEL = "benign"

ATTACK_LABELS = (
    "permission-misuse-reorder",
    "permission-misuse-different-op",
    "permission-misuse-additional-op",
    "data-leakage",
    "dow-repeated-op",
    "dow-increased-duration",
)

VALID_LABELS = frozenset((BENIGN_LABEL,) + ATTACK_LABELS)

# camelCase keys of the NDJSON event format, in canonical write order.
EVENT_KEYS = (
    "applicationName",
    "applicationFlowId",
    "functionName",
    "functionFlowId",
    "eventId",
    "startTime",
    "endTime",
    "eventName",
    "eventType",
    "eventParentName",
    "eventTargetResource",
)

_REQUIRED_NONEMPTY = (
    "applicationName",
    "applicationFlowId",
    "functionName",
    "functionFlowId",
    "eventId",
)

_OPTIONAL_KEYS = ("eventParentName", "eventTargetResource")


@dataclass(frozen=True)
class FunctionEvent:
    """One observed step of one function execution.

    Times are integer epoch milliseconds. event_parent_name and
    event_target_resource are "" when absent.
    """

    application_name: str
    application_flow_id: str
    function_name: str
    function_flow_id: str
    event_id: str
    start_time: int
    end_time: int
    event_name: str
    event_type: str
    event_parent_name: str = ""
    event_target_resource: str = ""

    def to_record(self) -> dict:
        """Return the camelCase dict used by the NDJSON event format."""
        return {
            "applicationName": self.application_name,
            "applicationFlowId": self.application_flow_id,
            "functionName": self.function_name,
            "functionFlowId": self.function_flow_id,
            "eventId": self.event_id,
            "startTime": self.start_time,
            "endTime": self.end_time,
            "eventName": self.event_name,
            "eventType": self.event_type,
            "eventParentName": self.event_parent_name,
            "eventTargetResource": self.event_target_resource,
        }


@dataclass(frozen=True)
class FunctionFlow:
    """Events of one function execution, sorted by (start_time, event_id)."""

    function_flow_id: str
    function_name: str
    application_name: str
    application_flow_id: str
    events: tuple[FunctionEvent, ...]
    dangling_parents: frozenset[str] = frozenset()

    @property
    def first_start(self) -> int:
        return self.events[0].start_time


@dataclass(frozen=True)
class ApplicationFlow:
    """Function flows sharing one application_flow_id, in start order."""

    application_flow_id: str
    application_name: str
    flows: tuple[FunctionFlow, ...]

    @property
    def first_start(self) -> int:
        return self.flows[0].first_start


def validate_event(record: Mapping) -> FunctionEvent:
    """Check a raw event record and build a FunctionEvent.

    Required keys must be present; id/name fields must be non-empty strings;
    times must be integers with endTime >= startTime. Unknown keys are
    ignored. Raises DataError naming the offending key.
    """
    for key in EVENT_KEYS:
        if key in _OPTIONAL_KEYS:
            continue
        if key not in record:
            raise DataError(f"event record missing required key {key!r}")

    for key in _REQUIRED_NONEMPTY:
        value = record[key]
        if not isinstance(value, str) or value == "":
            raise DataError(f"event field {key!r} must be a non-empty string")

    for key in ("eventName", "eventType"):
        if not isinstance(record[key], str):
            raise DataError(f"event field {key!r} must be a string")

    for key in ("startTime", "endTime"):
        value = record[key]
        # bool is an int subclass; reject it explicitly
        if isinstance(value, bool) or not isinstance(value, int):
            raise DataError(f"event field {key!r} must be an integer (ms)")

    start = record["startTime"]
    end = record["endTime"]
    if end < start:
        raise DataError(
            f"event {record['eventId']!r} has endTime {end} < startTime {start}"
        )

    def _opt(key: str) -> str:
        value = record.get(key, "")
        if value is None:
            return ""
        if not isinstance(value, str):
            raise DataError(f"event field {key!r} must be a string when present")
        return value

    return FunctionEvent(
        application_name=record["applicationName"],
        application_flow_id=record["applicationFlowId"],
        function_name=record["functionName"],
        function_flow_id=record["functionFlowId"],
        event_id=record["eventId"],
        start_time=start,
        end_time=end,
        event_name=record["eventName"],
        event_type=record["eventType"],
        event_parent_name=_opt("eventParentName"),
        event_target_resource=_opt("eventTargetResource"),
    )


def _dangling_parents(events: tuple[FunctionEvent, ...]) -> frozenset[str]:
    """Event ids whose parent name matches no earlier-or-equal-start event."""
    dangling = set()
    for i, ev in enumerate(events):
        if ev.event_parent_name == "":
            continue
        found = False
        for j, other in enumerate(events):
            if j == i:
                continue
            if other.start_time > ev.start_time:
                break  # events are sorted by start time
            if other.event_name == ev.event_parent_name:
                found = True
                break
        if not found:
            dangling.add(ev.event_id)
    return frozenset(dangling)


def assemble_function_flows(events: Iterable[FunctionEvent]) -> list[FunctionFlow]:
    """Group events into function flows.

    Events are grouped by function_flow_id and sorted by (start_time,
    event_id) within each flow. Flows are ordered by (first event start_time,
    function_flow_id). Dangling parent references are flagged on the flow,
    never rejected. The result is invariant under permutations of the input.
    """
    groups: dict[str, list[FunctionEvent]] = {}
    for ev in events:
        groups.setdefault(ev.function_flow_id, []).append(ev)

    flows = []
    for flow_id, group in groups.items():
        group.sort(key=lambda e: (e.start_time, e.event_id))
        ordered = tuple(group)
        head = ordered[0]
        flows.append(
            FunctionFlow(
                function_flow_id=flow_id,
                function_name=head.function_name,
                application_name=head.application_name,
                application_flow_id=head.application_flow_id,
                events=ordered,
                dangling_parents=_dangling_parents(ordered),
            )
        )
    flows.sort(key=lambda f: (f.first_start, f.function_flow_id))
    return flows


def assemble_application_flows(flows: Iterable[FunctionFlow]) -> list[ApplicationFlow]:
    """Group function flows into application flows.

    Flows are grouped by application_flow_id, ordered inside each group by
    (first event start, function_flow_id); groups are ordered by (first event
    start, application_flow_id).
    """
    groups: dict[str, list[FunctionFlow]] = {}
    for flow in flows:
        groups.setdefault(flow.application_flow_id, []).append(flow)

    app_flows = []
    for app_id, group in groups.items():
        group.sort(key=lambda f: (f.first_start, f.function_flow_id))
        app_flows.append(
            ApplicationFlow(
                application_flow_id=app_id,
                application_name=group[0].application_name,
                flows=tuple(group),
            )
        )
    app_flows.sort(key=lambda a: (a.first_start, a.application_flow_id))
    return app_flows
