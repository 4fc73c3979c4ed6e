"""Generic engine for pure op-based CRDTs over a partially ordered log.

Every non-commutative datatype shares ``prepare``, ``effect`` and
``stable_handler``; what differs is a :class:`DatatypeBehavior` bundle of
redundancy relations, a stabilization function and query evaluators.

The log is kept split in two parts: operations whose stamp has been
replaced by bottom (``stable``) and operations still carrying their stamp
(``tagged``).
"""

from __future__ import annotations

import json
from collections.abc import Callable, Iterable, Mapping
from dataclasses import dataclass, field
from typing import Any, NamedTuple, Optional

from purelog.clocks import BOTTOM, Stamp, TaggedStamp, stamp_to_json


class ProtocolViolation(RuntimeError):
    """The broadcast layer handed the kernel something it promised not to."""


class UnknownQuery(ValueError):
    pass


class UnsupportedOperation(ValueError):
    pass


class Operation(NamedTuple):
    """An operation name plus positional arguments.

    ``op[0]`` is the name and ``op[1]`` the first argument, mirroring the
    argv-style addressing used by the redundancy relations.
    """

    name: str
    args: tuple = ()

    def __getitem__(self, i):  # type: ignore[override]
        if isinstance(i, int) and i >= 0:
            return self.name if i == 0 else self.args[i - 1]
        return tuple.__getitem__(self, i)

    @classmethod
    def of(cls, name: str, *args: Any) -> Operation:
        return cls(name, tuple(args))

    def to_json(self) -> dict:
        return {"name": self.name, "args": list(self.args)}

    @classmethod
    def from_json(cls, obj: Mapping) -> Operation:
        return cls(obj["name"], tuple(obj.get("args", ())))

    def encode(self) -> str:
        return json.dumps(self.to_json(), separators=(",", ":"))

    def __repr__(self) -> str:
        if not self.args:
            return f"[{self.name}]"
        return "[" + ", ".join([self.name, *map(repr, self.args)]) + "]"


class Delivery(NamedTuple):
    """A causally delivered message together with its timestamp.

    ``op`` is ``None`` for middleware heartbeats, which carry no payload.
    """

    stamp: TaggedStamp
    op: Optional[Operation]

    @property
    def is_heartbeat(self) -> bool:
        return self.op is None


@dataclass(frozen=True)
class PoLog:
    stable: frozenset = frozenset()
    tagged: Mapping[TaggedStamp, Operation] = field(default_factory=dict)

    def pairs(self) -> Iterable[tuple[Stamp, Operation]]:
        """All entries as (stamp, op), bottom first."""
        for op in self.stable:
            yield BOTTOM, op
        yield from self.tagged.items()

    def ops(self) -> Iterable[Operation]:
        yield from self.stable
        yield from self.tagged.values()

    def __len__(self) -> int:
        return len(self.stable) + len(self.tagged)

    def to_json(self) -> dict:
        stable = sorted(self.stable, key=_op_sort_key)
        tagged = sorted(self.tagged.items(), key=lambda kv: (kv[0].src, kv[0].seq))
        return {
            "stable": [op.to_json() for op in stable],
            "tagged": [{**stamp_to_json(t), "op": op.to_json()} for t, op in tagged],
        }


def _op_sort_key(op: Operation) -> tuple[str, str]:
    return op.name, json.dumps(list(op.args), sort_keys=True)


# (t, o, log) -> arrival is redundant
ArrivalRelation = Callable[[TaggedStamp, Operation, PoLog], bool]
# (entry stamp, entry op, arrival stamp, arrival op) -> entry is redundant
EntryRelation = Callable[[Stamp, Operation, TaggedStamp, Operation], bool]


@dataclass(frozen=True)
class DatatypeBehavior:
    """Datatype-specific parts of a PO-Log based pure CRDT.

    The entry relations only ever compare a log entry with the arrival,
    never two log entries with each other; that is what makes replacing
    stable stamps by bottom safe.
    """

    name: str
    updates: Mapping[str, int]
    queries: tuple[str, ...]
    redundant: ArrivalRelation
    redundant_if_dropped: EntryRelation
    redundant_if_kept: EntryRelation
    stabilize: Callable[[TaggedStamp, PoLog], PoLog]
    eval_compact: Callable[[Operation, PoLog], Any]
    eval_reference: Callable[[Operation, PoLog], Any]


def prepare(op: Operation, state: Any = None) -> Operation:
    """Pure prepare: the message is the operation itself."""
    return op


def effect(dt: DatatypeBehavior, d: Delivery, log: PoLog) -> PoLog:
    t, o = d.stamp, d.op
    if o is None:
        return log
    if t in log.tagged:
        raise ProtocolViolation(f"stamp {t!r} delivered twice")
    dropped = dt.redundant(t, o, log)
    rel = dt.redundant_if_dropped if dropped else dt.redundant_if_kept
    stable = frozenset(x for x in log.stable if not rel(BOTTOM, x, t, o))
    tagged = {xt: xo for xt, xo in log.tagged.items() if not rel(xt, xo, t, o)}
    if not dropped:
        tagged[t] = o
    if len(stable) == len(log.stable):
        stable = log.stable
    return PoLog(stable, tagged)


def stable_handler(dt: DatatypeBehavior, t: TaggedStamp, log: PoLog) -> PoLog:
    log = dt.stabilize(t, log)
    op = log.tagged.get(t)
    if op is None:
        return log
    tagged = dict(log.tagged)
    del tagged[t]
    return PoLog(log.stable | {op}, tagged)


def eval_query(dt: DatatypeBehavior, query: Operation, log: PoLog) -> Any:
    if query.name not in dt.queries:
        raise UnknownQuery(f"{dt.name} has no query {query.name!r}")
    return dt.eval_compact(query, log)


def eval_reference(dt: DatatypeBehavior, query: Operation, full_log: PoLog) -> Any:
    if query.name not in dt.queries:
        raise UnknownQuery(f"{dt.name} has no query {query.name!r}")
    return dt.eval_reference(query, full_log)


def reference_effect(d: Delivery, full_log: PoLog) -> PoLog:
    """Union-only insertion; the uncompacted baseline never prunes."""
    if d.op is None:
        return full_log
    if d.stamp in full_log.tagged:
        raise ProtocolViolation(f"stamp {d.stamp!r} delivered twice")
    tagged = dict(full_log.tagged)
    tagged[d.stamp] = d.op
    return PoLog(full_log.stable, tagged)


def log_from_pairs(pairs: Iterable[tuple[Stamp, Operation]]) -> PoLog:
    """Build a log from (stamp-or-BOTTOM, op) pairs; handy in tests."""
    stable, tagged = set(), {}
    for t, op in pairs:
        if t is BOTTOM:
            stable.add(op)
        else:
            tagged[t] = op
    return PoLog(frozenset(stable), tagged)
