"""Convergence and oracle checks over recorded delivery schedules."""

from __future__ import annotations

from collections.abc import Iterable, Mapping, Sequence
from dataclasses import dataclass
from typing import Any, Union

from purelog.clocks import NodeId, TaggedStamp, VersionVector
from purelog.datatypes import Datatype, ReferenceReplica, Replica, query_ops
from purelog.kernel import Delivery, Operation

# one node's schedule: deliveries and stability notifications in local order
ScheduleEvent = Union[Delivery, TaggedStamp]


class NotQuiescent(RuntimeError):
    """Convergence was asked of replicas that have not seen the same deliveries."""


@dataclass(frozen=True)
class Mismatch:
    node: NodeId
    index: int
    event: str
    query: str
    compact: Any
    reference: Any

    def __str__(self) -> str:
        return (f"node {self.node} after event #{self.index} ({self.event}): "
                f"{self.query} compact={canonical(self.compact)!r} "
                f"reference={canonical(self.reference)!r}")


def canonical(value: Any) -> Any:
    """JSON-friendly, order-independent form of a query result."""
    if isinstance(value, (set, frozenset)):
        return sorted((canonical(v) for v in value), key=repr)
    return value


def check_convergence(replicas: Mapping[NodeId, Replica], queries: Iterable[Operation],
                      delivered: Mapping[NodeId, VersionVector] | None = None) -> bool:
    """True iff every replica answers every query identically.

    ``delivered`` maps each node to its delivered frontier; if given and the
    frontiers differ, the precondition is violated and :class:`NotQuiescent`
    is raised.
    """
    if delivered is not None and len(set(delivered.values())) > 1:
        raise NotQuiescent("replicas have delivered different message sets")
    queries = list(queries)
    answers = [tuple(r.query(q) for q in queries) for r in replicas.values()]
    return all(a == answers[0] for a in answers)


def replay_schedule(dt: Datatype, node: NodeId, schedule: Sequence[ScheduleEvent],
                    every: bool = True) -> Mismatch | None:
    """Replay one node's schedule on a compact and a full-log replica.

    Returns the first point where their query answers differ, or ``None``.
    With ``every=False`` only the final state is compared.
    """
    compact, ref = Replica(dt), ReferenceReplica(dt)
    queries = query_ops(dt)
    index, label = -1, "initial"
    for index, ev in enumerate(schedule):
        if isinstance(ev, Delivery):
            if ev.op is None:
                continue
            compact.deliver(ev)
            ref.deliver(ev)
            label = f"deliver {ev.op!r} {ev.stamp!r}"
        else:
            compact.stable(ev)
            label = f"stable {ev!r}"
        if every:
            found = _compare(node, index, label, compact, ref, queries)
            if found:
                return found
    return _compare(node, index, label, compact, ref, queries)


def _compare(node, index, label, compact, ref, queries) -> Mismatch | None:
    for q in queries:
        a, b = compact.query(q), ref.query(q)
        if a != b:
            return Mismatch(node, index, label, q.name, a, b)
    return None
