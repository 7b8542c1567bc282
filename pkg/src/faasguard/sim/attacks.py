"""Attack mutators.

Each mutator takes a concrete benign FunctionFlow and returns a new flow in
which exactly one behavioral aspect changed:

* permission-misuse-reorder — the middle two adjacent resource operations
  swap places in the sequence (operation identities swap between the two
  time slots).
* permission-misuse-different-op — one operation is substituted for a
  different operation against the same resource (a point read widened to a
  query, an update turned destructive, ...) running at the substitute's
  own natural latency.
* permission-misuse-additional-op — an extra Scan against the application
  config table is inserted before the function's own first operation (the
  injected code runs at handler entry).
* data-leakage — a PutObject shipping the event payload to a public
  external bucket runs at handler entry, before the function proceeds
  with its normal work (exfiltrate-then-passthrough).
* dow-repeated-op — the function's first resource operation is repeated
  k in [6, 12] extra times back-to-back. Hammering one resource draws
  server-side throttling, so the repeats run slower than the original
  call and the handler interval stretches accordingly.
* dow-increased-duration — the handler stalls 4000-5000 ms before its
  first operation, stretching its duration by the same amount.

Timing edits keep the flow internally consistent: later operations and the
trailing Overhead event shift with insertions, and the handler interval
always covers its children. Cold-start Initialization events are never
touched.
"""

from __future__ import annotations

import math
from dataclasses import replace
from typing import Callable

import numpy as np

from ..errors import DataError
from ..model import ATTACK_LABELS, BENIGN_LABEL, FunctionEvent, FunctionFlow
from ..model import assemble_function_flows
from .templates import (
    EXFIL_OP,
    EXTRA_OP,
    HANDLER_NAME,
    RESOURCE_TYPES,
    SUBSTITUTE_MEANS_MS,
    SUBSTITUTE_OPS,
    draw_duration,
    draw_gap,
)

# Duration jitter of throttled repeats in the dow-repeated-op mutation.
THROTTLE_SIGMA = 0.25


def _parts(flow: FunctionFlow):
    """Split a flow into (leading, handler, children, trailing) events."""
    handlers = [e for e in flow.events if e.event_name == HANDLER_NAME]
    if len(handlers) != 1:
        raise DataError(
            f"flow {flow.function_flow_id!r} must contain exactly one "
            f"{HANDLER_NAME!r} event to be attacked"
        )
    handler = handlers[0]
    children = [
        e for e in flow.events if e.event_parent_name == HANDLER_NAME
    ]
    rest = [
        e for e in flow.events
        if e is not handler and e.event_parent_name != HANDLER_NAME
    ]
    leading = [e for e in rest if e.start_time < handler.start_time]
    trailing = [e for e in rest if e.start_time >= handler.start_time]
    return leading, handler, children, trailing


def _shift(events: list[FunctionEvent], delta: int) -> list[FunctionEvent]:
    if delta == 0:
        return list(events)
    return [
        replace(e, start_time=e.start_time + delta,
                end_time=e.end_time + delta)
        for e in events
    ]


def _rebuild(flow, leading, handler, children, trailing, delta):
    """Reassemble a mutated flow; the handler absorbs the length change."""
    handler = replace(handler, end_time=handler.end_time + delta)
    events = leading + [handler] + children + _shift(trailing, delta)
    flows = assemble_function_flows(events)
    if len(flows) != 1:
        raise DataError("attack mutation fractured the flow")
    return flows[0]


def _adjacent_resource_pairs(children):
    return [
        i for i in range(len(children) - 1)
        if children[i].event_type in RESOURCE_TYPES
        and children[i + 1].event_type in RESOURCE_TYPES
    ]


def _mutate_reorder(flow, rng) -> FunctionFlow:
    leading, handler, children, trailing = _parts(flow)
    pairs = _adjacent_resource_pairs(children)
    if not pairs:
        raise DataError(
            "permission-misuse-reorder needs two adjacent resource "
            f"operations; {flow.function_name!r} has none"
        )
    i = pairs[len(pairs) // 2]
    a, b = children[i], children[i + 1]
    children[i] = replace(
        a, event_name=b.event_name, event_type=b.event_type,
        event_target_resource=b.event_target_resource,
    )
    children[i + 1] = replace(
        b, event_name=a.event_name, event_type=a.event_type,
        event_target_resource=a.event_target_resource,
    )
    return _rebuild(flow, leading, handler, children, trailing, 0)


def _mutate_different_op(flow, rng) -> FunctionFlow:
    leading, handler, children, trailing = _parts(flow)
    candidates = [
        i for i, e in enumerate(children) if e.event_name in SUBSTITUTE_OPS
    ]
    if not candidates:
        raise DataError(
            "permission-misuse-different-op needs a substitutable "
            f"operation; {flow.function_name!r} has none"
        )
    i = candidates[len(candidates) // 2]
    victim = children[i]
    old_dur = victim.end_time - victim.start_time
    name = SUBSTITUTE_OPS[victim.event_name]
    # the replacing operation runs at its own natural latency, not the
    # victim's
    new_dur = draw_duration(rng, SUBSTITUTE_MEANS_MS[name])
    delta = new_dur - old_dur
    children[i] = replace(
        victim, event_name=name,
        end_time=victim.start_time + new_dur,
    )
    children[i + 1:] = _shift(children[i + 1:], delta)
    return _rebuild(flow, leading, handler, children, trailing, delta)


def _mutate_additional_op(flow, rng) -> FunctionFlow:
    # injected code executes at handler entry, ahead of the function's own
    # first operation
    leading, handler, children, trailing = _parts(flow)
    pos = 0
    gap = draw_gap(rng)
    dur = draw_duration(rng, EXTRA_OP.mean_ms)
    if children:
        start = children[0].start_time
    else:
        start = handler.start_time + gap
    extra = FunctionEvent(
        application_name=handler.application_name,
        application_flow_id=handler.application_flow_id,
        function_name=handler.function_name,
        function_flow_id=handler.function_flow_id,
        event_id=f"{handler.event_id}-add",
        start_time=start, end_time=start + dur,
        event_name=EXTRA_OP.name, event_type=EXTRA_OP.type,
        event_parent_name=HANDLER_NAME,
        event_target_resource=EXTRA_OP.target,
    )
    delta = dur + gap
    children[pos:] = _shift(children[pos:], delta)
    children.insert(pos, extra)
    return _rebuild(flow, leading, handler, children, trailing, delta)


def _mutate_data_leakage(flow, rng) -> FunctionFlow:
    # the compromised handler ships the event payload off-network first,
    # then lets the function proceed with its normal work
    leading, handler, children, trailing = _parts(flow)
    gap = draw_gap(rng)
    dur = draw_duration(rng, EXFIL_OP.mean_ms)
    if children:
        start = children[0].start_time
    else:
        start = handler.start_time + gap
    leak = FunctionEvent(
        application_name=handler.application_name,
        application_flow_id=handler.application_flow_id,
        function_name=handler.function_name,
        function_flow_id=handler.function_flow_id,
        event_id=f"{handler.event_id}-leak",
        start_time=start, end_time=start + dur,
        event_name=EXFIL_OP.name, event_type=EXFIL_OP.type,
        event_parent_name=HANDLER_NAME,
        event_target_resource=EXFIL_OP.target,
    )
    delta = dur + gap
    children[:] = _shift(children, delta)
    children.insert(0, leak)
    return _rebuild(flow, leading, handler, children, trailing, delta)


def _mutate_repeated_op(flow, rng) -> FunctionFlow:
    leading, handler, children, trailing = _parts(flow)
    resource_idx = [
        i for i, e in enumerate(children) if e.event_type in RESOURCE_TYPES
    ]
    if not resource_idx:
        raise DataError(
            "dow-repeated-op needs a resource operation; "
            f"{flow.function_name!r} has none"
        )
    # the injected loop hammers the first resource call the handler makes;
    # the hot resource throttles under the burst, so repeats run well
    # slower than the original call and with more jitter
    i = resource_idx[0]
    victim = children[i]
    orig_dur = victim.end_time - victim.start_time
    k = int(rng.integers(6, 13))
    copies = []
    cursor = victim.end_time
    for j in range(k):
        gap = draw_gap(rng)
        dur = max(1, int(round(
            rng.lognormal(math.log(2.5 * orig_dur), THROTTLE_SIGMA)
        )))
        copies.append(replace(
            victim, event_id=f"{victim.event_id}-rep{j + 1}",
            start_time=cursor + gap, end_time=cursor + gap + dur,
        ))
        cursor += gap + dur
    delta = cursor - victim.end_time
    children[i + 1:] = _shift(children[i + 1:], delta)
    children[i + 1:i + 1] = copies
    return _rebuild(flow, leading, handler, children, trailing, delta)


def _mutate_increased_duration(flow, rng) -> FunctionFlow:
    leading, handler, children, trailing = _parts(flow)
    stall = int(round(rng.uniform(4000.0, 5000.0)))
    children = _shift(children, stall)
    return _rebuild(flow, leading, handler, children, trailing, stall)


_MUTATORS: dict[str, Callable] = {
    "permission-misuse-reorder": _mutate_reorder,
    "permission-misuse-different-op": _mutate_different_op,
    "permission-misuse-additional-op": _mutate_additional_op,
    "data-leakage": _mutate_data_leakage,
    "dow-repeated-op": _mutate_repeated_op,
    "dow-increased-duration": _mutate_increased_duration,
}


def applicable_labels(flow: FunctionFlow) -> frozenset[str]:
    """Attack labels whose preconditions this flow satisfies."""
    _, _, children, _ = _parts(flow)
    out = {"permission-misuse-additional-op", "data-leakage",
           "dow-increased-duration"}
    if _adjacent_resource_pairs(children):
        out.add("permission-misuse-reorder")
    if any(e.event_name in SUBSTITUTE_OPS for e in children):
        out.add("permission-misuse-different-op")
    if any(e.event_type in RESOURCE_TYPES for e in children):
        out.add("dow-repeated-op")
    return frozenset(out)


def inject_attack(
    flow: FunctionFlow, label: str, rng: np.random.Generator
) -> FunctionFlow:
    """Return a mutated copy of a benign flow exhibiting one attack."""
    if label == BENIGN_LABEL:
        raise DataError("cannot inject the benign label")
    if label not in ATTACK_LABELS:
        raise DataError(f"unknown attack label {label!r}")
    return _MUTATORS[label](flow, rng)
