"""Round-end parameter-delta aggregation with dual-server routing: client
component deltas go to the auxiliary server, global component deltas to the
main server, so no single party ever sees the whole model."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .exceptions import ShapeError, UniconError
from .numerics import ParamSet

# component tag -> destination server
CLIENT_SIDE = {"vqa", "apn", "sl_head", "sl_tail"}
GLOBAL_SIDE = {"nha", "lta", "sl_global"}


@dataclass
class DeltaRecord:
    component: str
    client_id: int
    round_idx: int
    delta: ParamSet           # end-of-round params minus round-start params


def param_delta(end: ParamSet, start: ParamSet) -> ParamSet:
    if end.names() != start.names():
        raise ShapeError("delta between mismatched parameter sets")
    out = ParamSet()
    for name, p in end:
        out.add(name, p.value - start[name].value, trainable=p.trainable)
    return out


def aggregate_deltas(records: list[DeltaRecord], K: int) -> ParamSet:
    """Elementwise mean of per-client deltas; one record per client required.
    Records are averaged in client-id order so the result is independent of
    arrival order, bit for bit."""
    if len(records) != K:
        raise UniconError(f"expected {K} delta records, got {len(records)}")
    comps = {r.component for r in records}
    if len(comps) != 1:
        raise UniconError(f"mixed components in aggregation: {sorted(comps)}")
    if sorted(r.client_id for r in records) != list(range(K)):
        raise UniconError("missing or duplicated client in aggregation")
    records = sorted(records, key=lambda r: r.client_id)
    names = records[0].delta.names()
    out = ParamSet()
    for name in names:
        stack = []
        for r in records:
            if r.delta.names() != names:
                raise ShapeError("delta entry names disagree across clients")
            stack.append(r.delta[name].value)
        out.add(name, np.mean(stack, axis=0),
                trainable=records[0].delta[name].trainable)
    return out


def apply_aggregate(base: ParamSet, avg_delta: ParamSet) -> None:
    """In-place update: params <- params + averaged delta."""
    if base.names() != avg_delta.names():
        raise ShapeError("aggregate applied to mismatched parameter set")
    for name, p in base:
        if p.value.shape != avg_delta[name].value.shape:
            raise ShapeError(f"shape mismatch for {name}")
        p.value += avg_delta[name].value


def apply_aggregate_anchored(params: ParamSet, own_delta: ParamSet,
                             avg_delta: ParamSet) -> None:
    """In-place round-end refresh anchored at the party's current (end-of-
    round) parameters: params <- params + (avg_delta - own_delta).

    Algebraically identical to round-start params + avg_delta, but exact in
    floating point whenever the averaged delta equals the party's own delta
    (single client, or identical clients), where the base+delta form loses
    an ulp that optimizer epsilon-divisions can amplify.
    """
    if not (params.names() == own_delta.names() == avg_delta.names()):
        raise ShapeError("anchored aggregate applied to mismatched parameter sets")
    for name, p in params:
        p.value += avg_delta[name].value - own_delta[name].value


def route_deltas(records: list[DeltaRecord]):
    """Partition records by destination server."""
    to_aux, to_main = [], []
    for r in records:
        if r.component in CLIENT_SIDE:
            to_aux.append(r)
        elif r.component in GLOBAL_SIDE:
            to_main.append(r)
        else:
            raise UniconError(f"unknown component tag {r.component!r}")
    return to_aux, to_main
