"""Tagged causal stable broadcast.

A :class:`TcsbNode` is the per-replica middleware: it stamps outgoing
operations with a version vector, buffers incoming messages until their
causal predecessors are delivered, drops duplicates, and tracks which
delivered stamps have become causally stable.

Stability uses the matrix of last-delivered vectors ``L``: a stamp ``tau``
from node ``j`` is stable once every row of ``L`` has seen ``tau``'s
position in ``j``'s sequence (see :func:`low`).  The node's own row is its
delivered frontier.
"""

from __future__ import annotations

import json
from collections import deque
from collections.abc import Iterable, Mapping
from dataclasses import dataclass
from typing import Optional

from purelog.clocks import (
    NodeId,
    TaggedStamp,
    UnknownNode,
    VersionVector,
)
from purelog.kernel import Delivery, Operation


@dataclass(frozen=True)
class WireMessage:
    origin: NodeId
    stamp: TaggedStamp
    op: Optional[Operation]  # None marks a heartbeat

    @property
    def seq(self) -> int:
        return self.stamp.vv[self.origin]

    @property
    def key(self) -> tuple[NodeId, int]:
        return self.origin, self.seq

    def to_json(self) -> dict:
        return {
            "origin": self.origin,
            "vv": self.stamp.vv.as_dict(),
            "op": None if self.op is None else self.op.to_json(),
        }

    def encode(self) -> str:
        return json.dumps(self.to_json(), separators=(",", ":"))

    @classmethod
    def from_json(cls, obj: Mapping, nodes: Iterable[NodeId] | None = None) -> WireMessage:
        vv = VersionVector.from_mapping(obj["vv"], nodes)
        op = None if obj.get("op") is None else Operation.from_json(obj["op"])
        return cls(obj["origin"], TaggedStamp(vv, obj["origin"]), op)

    @classmethod
    def decode(cls, text: str, nodes: Iterable[NodeId] | None = None) -> WireMessage:
        return cls.from_json(json.loads(text), nodes)


def low(L: Mapping[NodeId, VersionVector], j: NodeId) -> int:
    """Lowest count of ``j``'s messages known delivered across all rows."""
    return min(row[j] for row in L.values())


class TcsbNode:
    def __init__(self, self_id: NodeId, nodes: Iterable[NodeId]):
        zero = VersionVector.zero(nodes)
        if self_id not in zero.nodes:
            raise UnknownNode(f"{self_id!r} is not a member of {zero.nodes}")
        self.self_id = self_id
        self.nodes = zero.nodes
        self._idx = {n: i for i, n in enumerate(self.nodes)}
        self._me = self._idx[self_id]
        self._clock = [0] * len(self.nodes)
        self.last_delivered: dict[NodeId, VersionVector] = {n: zero for n in self.nodes}
        self.pending: dict[tuple[NodeId, int], WireMessage] = {}
        # operation stamps delivered but not yet reported stable, per origin
        self._unstable: dict[NodeId, deque] = {n: deque() for n in self.nodes}
        self._frontier = [0] * len(self.nodes)
        self._delivery_count = 0
        self.delivered_ops = 0
        self.reported_stable = 0

    @property
    def clock(self) -> VersionVector:
        return VersionVector(self.nodes, tuple(self._clock))

    @property
    def stability_frontier(self) -> VersionVector:
        return VersionVector(self.nodes, tuple(self._frontier))

    def tcbcast(self, op: Optional[Operation]) -> tuple[WireMessage, Delivery]:
        """Stamp ``op`` and deliver it locally in the same step."""
        self._clock[self._me] += 1
        vv = self.clock
        stamp = TaggedStamp(vv, self.self_id)
        msg = WireMessage(self.self_id, stamp, op)
        self.last_delivered[self.self_id] = vv
        self._record(stamp, op)
        return msg, Delivery(stamp, op)

    def heartbeat(self) -> tuple[WireMessage, Delivery]:
        return self.tcbcast(None)

    def _deliverable(self, msg: WireMessage) -> bool:
        counts = msg.stamp.vv.counts
        o = self._idx[msg.origin]
        clock = self._clock
        if counts[o] != clock[o] + 1:
            return False
        for k, c in enumerate(counts):
            if k != o and c > clock[k]:
                return False
        return True

    def _deliver(self, msg: WireMessage) -> Delivery:
        vv = msg.stamp.vv
        self._clock = list(map(max, self._clock, vv.counts))
        self.last_delivered[msg.origin] = vv
        self.last_delivered[self.self_id] = self.clock
        self._record(msg.stamp, msg.op)
        return Delivery(msg.stamp, msg.op)

    def _record(self, stamp: TaggedStamp, op: Optional[Operation]) -> None:
        self._delivery_count += 1
        if op is not None:
            self.delivered_ops += 1
            self._unstable[stamp.src].append((self._delivery_count, stamp))

    def on_receive(self, msg: WireMessage) -> list[Delivery]:
        """Accept a message from the network; returns what became deliverable."""
        if msg.origin not in self._idx:
            raise UnknownNode(f"unknown origin {msg.origin!r}")
        if msg.stamp.vv.nodes != self.nodes:
            raise UnknownNode(f"message stamped over {msg.stamp.vv.nodes}, expected {self.nodes}")
        key = msg.key
        if key[1] <= self._clock[self._idx[msg.origin]] or key in self.pending:
            return []
        if not self._deliverable(msg):
            self.pending[key] = msg
            return []
        out = [self._deliver(msg)]
        progress = bool(self.pending)
        while progress:
            progress = False
            for k in sorted(self.pending):
                m = self.pending[k]
                if self._deliverable(m):
                    del self.pending[k]
                    out.append(self._deliver(m))
                    progress = True
        return out

    def drain_stable(self) -> list[TaggedStamp]:
        """Report, once each, the delivered stamps that are now causally stable."""
        found = []
        rows = [row.counts for row in self.last_delivered.values()]
        for j, n in enumerate(self.nodes):
            q = self._unstable[n]
            if not q:
                continue
            bound = min(r[j] for r in rows)
            while q and q[0][1].vv.counts[j] <= bound:
                item = q.popleft()
                self._frontier[j] = item[1].vv.counts[j]
                found.append(item)
        if len(found) > 1:
            found.sort(key=lambda item: item[0])
        self.reported_stable += len(found)
        return [stamp for _, stamp in found]

    def unstable_count(self) -> int:
        return sum(len(q) for q in self._unstable.values())
