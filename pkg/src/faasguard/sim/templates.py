"""Function templates and event builders for the two applications.

Each function template lists the resource operations a benign execution
performs, in order. A built flow is [Lambda Handler, children..., Overhead],
with an Initialization event prepended strictly before the handler interval
on cold starts so that every other event is byte-identical to the warm
variant. Durations are drawn from log-normal distributions per operation;
all times are integer epoch milliseconds.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ..model import FunctionEvent

HANDLER_NAME = "Lambda Handler"
HANDLER_TYPE = "Function"
INIT_NAME = "Initialization"
OVERHEAD_NAME = "Overhead"
RUNTIME_TYPE = "Runtime"

# Event types that touch an external resource (used by attack applicability
# rules: reordering and call repetition act on these).
RESOURCE_TYPES = frozenset({"DynamoDB", "S3", "SNS", "SQS", "MediaConvert"})

# eventName substitutions for the operation-substitution attack: a point
# read widened to a query, a query narrowed to a point read, an update
# turned destructive, a single put turned into a bulk write. Substituted
# operations run at their own natural latency.
SUBSTITUTE_OPS = {
    "GetItem": "Query",
    "Query": "GetItem",
    "UpdateItem": "DeleteItem",
    "PutItem": "BatchWriteItem",
}
SUBSTITUTE_MEANS_MS = {
    "Query": 45.0,
    "GetItem": 35.0,
    "DeleteItem": 35.0,
    "BatchWriteItem": 160.0,
}

# Service calls from a warm function to in-region managed services are
# highly repeatable; the tight jitter models steady-state latency.
DURATION_SIGMA = 0.04
GAP_MEAN_MS = 2.0
GAP_SIGMA = 0.1
OVERHEAD_MEAN_MS = 2.5
HANDLER_TAIL_MEAN_MS = 2.0
RUNTIME_SIGMA = 0.1
INIT_MEAN_MS = 480.0
INIT_SIGMA = 0.0  # runtime initialization is effectively constant-time


@dataclass(frozen=True)
class OpSpec:
    """One benign child operation of a function."""

    name: str
    type: str
    target: str
    mean_ms: float


@dataclass(frozen=True)
class FunctionTemplate:
    """Benign shape of one serverless function."""

    function_name: str
    children: tuple[OpSpec, ...]
    targeted: bool = False
    error_children: tuple[OpSpec, ...] | None = None


def _op(name, type_, target, mean):
    return OpSpec(name=name, type=type_, target=target, mean_ms=mean)


AIRLINE_APP = "airline-booking"

# Every function performs exactly five downstream calls: a couple of
# reads, the distinctive work of the function, and bookkeeping writes,
# always closing with a usage record to the shared analytics table. The
# uniform call count keeps flows the same length, so the structural
# fields (parent, type, depth) line up across functions and the model's
# capacity goes to the identities of the operations themselves. Functions
# share the application's domain tables (flights, bookings, payments,
# loyalty).
AIRLINE_TEMPLATES = {
    t.function_name: t
    for t in (
        FunctionTemplate("SearchFlights", (
            _op("Query", "DynamoDB", "flights-table", 45.0),
            _op("GetItem", "DynamoDB", "flights-table", 35.0),
            _op("GetItem", "DynamoDB", "loyalty-table", 35.0),
            _op("Query", "DynamoDB", "bookings-table", 45.0),
            _op("PutItem", "DynamoDB", "analytics-table", 40.0),
        )),
        FunctionTemplate("GetLoyalty", (
            _op("GetItem", "DynamoDB", "loyalty-table", 35.0),
            _op("Query", "DynamoDB", "loyalty-table", 45.0),
            _op("Query", "DynamoDB", "bookings-table", 45.0),
            _op("GetItem", "DynamoDB", "flights-table", 35.0),
            _op("PutItem", "DynamoDB", "analytics-table", 40.0),
        )),
        FunctionTemplate("GetBooking", (
            _op("Query", "DynamoDB", "bookings-table", 45.0),
            _op("GetItem", "DynamoDB", "flights-table", 35.0),
            _op("GetItem", "DynamoDB", "payments-table", 35.0),
            _op("GetItem", "DynamoDB", "loyalty-table", 35.0),
            _op("PutItem", "DynamoDB", "analytics-table", 40.0),
        )),
        FunctionTemplate("ReserveBooking", (
            _op("GetItem", "DynamoDB", "flights-table", 35.0),
            _op("PutItem", "DynamoDB", "bookings-table", 40.0),
            _op("UpdateItem", "DynamoDB", "flights-table", 40.0),
            _op("SendMessage", "SQS", "payment-queue", 25.0),
            _op("PutItem", "DynamoDB", "analytics-table", 40.0),
        ), targeted=True),
        FunctionTemplate("CollectPayment", (
            _op("GetItem", "DynamoDB", "bookings-table", 35.0),
            _op("ChargeCard", "Internal", "payments-api", 120.0),
            _op("PutItem", "DynamoDB", "payments-table", 40.0),
            _op("UpdateItem", "DynamoDB", "bookings-table", 40.0),
            _op("PutItem", "DynamoDB", "analytics-table", 40.0),
        ), targeted=True),
        FunctionTemplate("ConfirmBooking", (
            _op("GetItem", "DynamoDB", "payments-table", 35.0),
            _op("GetItem", "DynamoDB", "bookings-table", 35.0),
            _op("UpdateItem", "DynamoDB", "bookings-table", 40.0),
            _op("Publish", "SNS", "booking-events", 45.0),
            _op("PutItem", "DynamoDB", "analytics-table", 40.0),
        )),
        FunctionTemplate("NotifyBooking", (
            _op("GetItem", "DynamoDB", "bookings-table", 35.0),
            _op("GetItem", "DynamoDB", "loyalty-table", 35.0),
            _op("Publish", "SNS", "booking-notifications", 45.0),
            _op("UpdateItem", "DynamoDB", "loyalty-table", 40.0),
            _op("PutItem", "DynamoDB", "analytics-table", 40.0),
        ), targeted=True),
        FunctionTemplate("IngestLoyalty", (
            _op("Query", "DynamoDB", "bookings-table", 45.0),
            _op("GetItem", "DynamoDB", "loyalty-table", 35.0),
            _op("UpdateItem", "DynamoDB", "loyalty-table", 40.0),
            _op("PutItem", "DynamoDB", "loyalty-table", 40.0),
            _op("PutItem", "DynamoDB", "analytics-table", 40.0),
        )),
    )
}

VOD_APP = "video-on-demand"

VOD_TEMPLATES = {
    t.function_name: t
    for t in (
        # The validator inspects the upload and writes its verdict to the
        # videos table whether the file passes or not; accept and reject
        # differ only in the item payload, which trace logs do not capture,
        # so the error path emits the same operations. Failure is visible
        # downstream: the rest of the pipeline never fires.
        FunctionTemplate("IngestValidate", (
            _op("GetItem", "DynamoDB", "videos-table", 35.0),
            _op("HeadObject", "S3", "uploads-bucket", 25.0),
            _op("GetObject", "S3", "uploads-bucket", 60.0),
            _op("PutItem", "DynamoDB", "videos-table", 40.0),
            _op("PutItem", "DynamoDB", "analytics-table", 40.0),
        ), error_children=(
            _op("GetItem", "DynamoDB", "videos-table", 35.0),
            _op("HeadObject", "S3", "uploads-bucket", 25.0),
            _op("GetObject", "S3", "uploads-bucket", 60.0),
            _op("PutItem", "DynamoDB", "videos-table", 40.0),
            _op("PutItem", "DynamoDB", "analytics-table", 40.0),
        )),
        FunctionTemplate("MediaProcess", (
            _op("GetItem", "DynamoDB", "videos-table", 35.0),
            _op("UpdateItem", "DynamoDB", "videos-table", 40.0),
            _op("GetObject", "S3", "uploads-bucket", 60.0),
            _op("CreateJob", "MediaConvert", "media-convert", 140.0),
            _op("PutItem", "DynamoDB", "analytics-table", 40.0),
        ), targeted=True),
        FunctionTemplate("PublishNotify", (
            _op("GetItem", "DynamoDB", "videos-table", 35.0),
            _op("Query", "DynamoDB", "catalog-table", 45.0),
            _op("Publish", "SNS", "video-notifications", 45.0),
            _op("UpdateItem", "DynamoDB", "videos-table", 40.0),
            _op("PutItem", "DynamoDB", "analytics-table", 40.0),
        ), targeted=True),
        FunctionTemplate("DynamoUpdate", (
            _op("Query", "DynamoDB", "catalog-table", 45.0),
            _op("GetItem", "DynamoDB", "videos-table", 35.0),
            _op("UpdateItem", "DynamoDB", "catalog-table", 40.0),
            _op("PutItem", "DynamoDB", "videos-table", 40.0),
            _op("PutItem", "DynamoDB", "analytics-table", 40.0),
        ), targeted=True),
        FunctionTemplate("MailIngest", (
            _op("GetObject", "S3", "mail-inbox", 60.0),
            _op("GetItem", "DynamoDB", "videos-table", 35.0),
            _op("PutItem", "DynamoDB", "videos-table", 40.0),
            _op("PutObject", "S3", "uploads-bucket", 80.0),
            _op("PutItem", "DynamoDB", "analytics-table", 40.0),
        )),
    )
}

# Tokens introduced only by attack mutations. The exfil write ships the
# harvested payload off-network, so it runs far longer than in-app S3 ops;
# the injected operation sweeps the whole config/credentials table rather
# than fetching one item, so it also runs far longer than a point read.
EXFIL_TARGET = "public-exfil-bucket"
EXFIL_OP = _op("PutObject", "S3", EXFIL_TARGET, 2400.0)
EXTRA_OP = _op("Scan", "DynamoDB", "app-config-table", 1500.0)

# Every string token the simulator can emit; the feature tests check that
# the hash embedder keeps them pairwise distinct.
VOCABULARY = sorted(
    {AIRLINE_APP, VOD_APP, HANDLER_NAME, HANDLER_TYPE, INIT_NAME,
     OVERHEAD_NAME, RUNTIME_TYPE, EXFIL_TARGET,
     EXTRA_OP.name, EXTRA_OP.type, EXTRA_OP.target,
     EXFIL_OP.name, EXFIL_OP.type}
    | {name for name in AIRLINE_TEMPLATES}
    | {name for name in VOD_TEMPLATES}
    | {
        token
        for templates in (AIRLINE_TEMPLATES, VOD_TEMPLATES)
        for t in templates.values()
        for op in t.children + (t.error_children or ())
        for token in (op.name, op.type, op.target)
    }
    | set(SUBSTITUTE_OPS.values())
)


def draw_duration(rng: np.random.Generator, mean_ms: float,
                  sigma: float = DURATION_SIGMA) -> int:
    """Log-normal duration in whole milliseconds, at least 1."""
    return max(1, int(round(rng.lognormal(math.log(mean_ms), sigma))))


def draw_gap(rng: np.random.Generator) -> int:
    return max(1, int(round(rng.lognormal(math.log(GAP_MEAN_MS), GAP_SIGMA))))


def build_flow_events(
    template: FunctionTemplate,
    *,
    application_name: str,
    application_flow_id: str,
    function_flow_id: str,
    start_ms: int,
    rng: np.random.Generator,
    cold_start: bool = False,
    error_path: bool = False,
) -> list[FunctionEvent]:
    """Emit the benign event list of one function execution.

    Cold starts prepend an Initialization event ending just before the
    handler starts. Its duration is drawn after every other draw, so the
    handler, children, and Overhead events of a cold flow are byte-identical
    to the warm flow built from the same generator state.
    """
    children_spec = template.children
    if error_path:
        if template.error_children is None:
            raise ValueError(
                f"{template.function_name} has no error path"
            )
        children_spec = template.error_children

    common = dict(
        application_name=application_name,
        application_flow_id=application_flow_id,
        function_name=template.function_name,
        function_flow_id=function_flow_id,
    )
    events: list[FunctionEvent] = []
    eid = 0

    def next_id() -> str:
        nonlocal eid
        eid += 1
        return f"e{eid}"

    handler_id = next_id()
    cursor = start_ms
    child_events = []
    for op in children_spec:
        cursor += draw_gap(rng)
        dur = draw_duration(rng, op.mean_ms)
        child_events.append(FunctionEvent(
            **common, event_id=next_id(),
            start_time=cursor, end_time=cursor + dur,
            event_name=op.name, event_type=op.type,
            event_parent_name=HANDLER_NAME,
            event_target_resource=op.target,
        ))
        cursor += dur
    handler_end = cursor + draw_duration(rng, HANDLER_TAIL_MEAN_MS, RUNTIME_SIGMA)
    events.append(FunctionEvent(
        **common, event_id=handler_id,
        start_time=start_ms, end_time=handler_end,
        event_name=HANDLER_NAME, event_type=HANDLER_TYPE,
    ))
    events.extend(child_events)
    overhead_dur = draw_duration(rng, OVERHEAD_MEAN_MS, RUNTIME_SIGMA)
    events.append(FunctionEvent(
        **common, event_id=next_id(),
        start_time=handler_end, end_time=handler_end + overhead_dur,
        event_name=OVERHEAD_NAME, event_type=RUNTIME_TYPE,
    ))
    if cold_start:
        init_dur = draw_duration(rng, INIT_MEAN_MS, INIT_SIGMA)
        events.insert(0, FunctionEvent(
            **common, event_id=next_id(),
            start_time=start_ms - init_dur - 1, end_time=start_ms - 1,
            event_name=INIT_NAME, event_type=RUNTIME_TYPE,
        ))
    return events
