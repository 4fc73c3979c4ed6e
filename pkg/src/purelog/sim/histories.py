"""Exhaustive enumeration of small causal histories.

A history assigns operations to nodes and fixes, for every node, the order
in which it issues its own operations and delivers everybody else's.  Two
global interleavings with the same per-node orders are the same history,
since a node's state depends only on its own sequence.
"""

from __future__ import annotations

import itertools
from collections.abc import Iterator, Sequence
from dataclasses import dataclass
from functools import lru_cache

from purelog.clocks import TaggedStamp, VersionVector
from purelog.datatypes import Datatype, get_datatype
from purelog.kernel import Operation
from purelog.sim.checks import Mismatch, ScheduleEvent, replay_schedule
from purelog.tcsb import TcsbNode, WireMessage

MAX_OPS = 6
MAX_NODES = 3

# (issuing node index, position in that node's own sequence)
MsgId = tuple[int, int]
Shape = tuple[tuple[MsgId, ...], ...]


class BudgetExceeded(ValueError):
    pass


DEFAULT_ALPHABETS: dict[str, tuple[Operation, ...]] = {
    "gcounter": (Operation("inc"),),
    "pncounter": (Operation("inc"), Operation("dec")),
    "gset": (Operation("add", ("x",)), Operation("add", ("y",))),
    "twopset": (Operation("add", ("x",)), Operation("rmv", ("x",)), Operation("add", ("y",))),
    "awset": (Operation("add", ("x",)), Operation("rmv", ("x",)),
              Operation("add", ("y",)), Operation("clear")),
    "rwset": (Operation("add", ("x",)), Operation("rmv", ("x",)),
              Operation("add", ("y",)), Operation("clear")),
    "mvreg": (Operation("wr", ("a",)), Operation("wr", ("b",)), Operation("clear")),
    "ewflag": (Operation("enable"), Operation("disable"), Operation("clear")),
    "dwflag": (Operation("enable"), Operation("disable"), Operation("clear")),
}


@dataclass(frozen=True)
class History:
    nodes: tuple[str, ...]
    shape: Shape
    ops: dict  # MsgId -> Operation

    def describe(self) -> str:
        parts = []
        for i, seq in enumerate(self.shape):
            steps = []
            for m in seq:
                tag = f"{self.nodes[m[0]]}{m[1] + 1}"
                steps.append(f"{tag}={self.ops[m]!r}" if m[0] == i else f"recv {tag}")
            parts.append(f"{self.nodes[i]}: " + ", ".join(steps))
        return "; ".join(parts)


def compositions(total: int, parts: int) -> Iterator[tuple[int, ...]]:
    """Ordered ways to split ``total`` operations over ``parts`` nodes."""
    if parts == 1:
        yield (total,)
        return
    for first in range(total, -1, -1):
        for rest in compositions(total - first, parts - 1):
            yield (first, *rest)


@lru_cache(maxsize=None)
def shapes(counts: tuple[int, ...]) -> tuple[Shape, ...]:
    """Every consistent tuple of per-node sequences for the given op counts."""
    n = len(counts)
    total = sum(counts)
    seen: set[Shape] = set()
    done: list[Shape] = []
    stack: list[Shape] = [tuple(() for _ in range(n))]
    while stack:
        seqs = stack.pop()
        if seqs in seen:
            continue
        seen.add(seqs)
        if all(len(s) == total for s in seqs):
            done.append(seqs)
            continue
        deps = {}
        for i, s in enumerate(seqs):
            for pos, m in enumerate(s):
                if m[0] == i:
                    deps[m] = frozenset(s[:pos])
        for i, s in enumerate(seqs):
            own = sum(1 for m in s if m[0] == i)
            if own < counts[i]:
                stack.append(seqs[:i] + (s + ((i, own),),) + seqs[i + 1:])
            have = set(s)
            for m, d in deps.items():
                if m[0] != i and m not in have and d <= have:
                    stack.append(seqs[:i] + (s + (m,),) + seqs[i + 1:])
    return tuple(sorted(done))


def node_names(n_nodes: int) -> tuple[str, ...]:
    return tuple("ABCDEFGH"[:n_nodes])


def enumerate_histories(n_ops: int, n_nodes: int, datatype: str,
                        alphabet: Sequence[Operation] | None = None,
                        up_to: bool = False) -> Iterator[History]:
    """Yield every history with exactly ``n_ops`` operations (or 1..n_ops)."""
    if not 1 <= n_ops <= MAX_OPS or not 1 <= n_nodes <= MAX_NODES:
        raise BudgetExceeded(
            f"exhaustive search limited to 1..{MAX_OPS} ops and 1..{MAX_NODES} nodes"
            f" (got ops={n_ops}, nodes={n_nodes})")
    if alphabet is None:
        alphabet = DEFAULT_ALPHABETS[datatype]
    names = node_names(n_nodes)
    sizes = range(1, n_ops + 1) if up_to else (n_ops,)
    for size in sizes:
        for counts in compositions(size, n_nodes):
            ids = [(i, k) for i, c in enumerate(counts) for k in range(c)]
            for shape in shapes(counts):
                for choice in itertools.product(alphabet, repeat=size):
                    yield History(names, shape, dict(zip(ids, choice)))


def stamps_for(shape: Shape, nodes: Sequence[str]) -> dict[MsgId, TaggedStamp]:
    """The vector stamp each message gets when its issuer broadcasts it."""
    out = {}
    for i, seq in enumerate(shape):
        counts = [0] * len(nodes)
        for m in seq:
            counts[m[0]] += 1
            if m[0] == i:
                out[m] = TaggedStamp(VersionVector(tuple(nodes), tuple(counts)), nodes[i])
    return out


def schedules_for(history: History, flush: bool = True) -> dict[str, list[ScheduleEvent]]:
    """Drive real TCSB nodes through a history and record what each delivers.

    With ``flush`` every node then broadcasts one heartbeat and all
    heartbeats are delivered everywhere, which makes every stamp stable.
    """
    names = history.nodes
    stamps = stamps_for(history.shape, names)
    wires = {m: WireMessage(names[m[0]], t, history.ops[m]) for m, t in stamps.items()}
    tcsb = {n: TcsbNode(n, names) for n in names}
    sched: dict[str, list[ScheduleEvent]] = {n: [] for n in names}

    def drain(n):
        sched[n].extend(tcsb[n].drain_stable())

    for i, seq in enumerate(history.shape):
        n = names[i]
        for m in seq:
            if m[0] == i:
                msg, d = tcsb[n].tcbcast(history.ops[m])
                if msg.stamp != stamps[m]:
                    raise AssertionError(f"stamp drift at {n}: {msg.stamp} != {stamps[m]}")
                got = [d]
            else:
                got = tcsb[n].on_receive(wires[m])
                if len(got) != 1 or got[0].stamp != stamps[m]:
                    raise AssertionError(f"history not causally deliverable at {n}")
            sched[n].extend(got)
            drain(n)
    if flush:
        beats = [tcsb[n].heartbeat() for n in names]
        for n, (_, d) in zip(names, beats):
            sched[n].append(d)
            drain(n)
        for n in names:
            for msg, _ in beats:
                if msg.origin != n:
                    sched[n].extend(tcsb[n].on_receive(msg))
                    drain(n)
    return sched


def check_history(dt: Datatype, history: History, flush: bool = True) -> Mismatch | None:
    for node, schedule in schedules_for(history, flush).items():
        found = replay_schedule(dt, node, schedule, every=True)
        if found:
            return found
    return None


@dataclass
class ExhaustResult:
    datatype: str
    checked: int
    mismatches: int
    first: tuple[History, Mismatch] | None

    @property
    def ok(self) -> bool:
        return self.mismatches == 0


def exhaust(datatype: str, n_ops: int, n_nodes: int, mutate: bool = False,
            stop_at_first: bool = False) -> ExhaustResult:
    """Check compact against reference on every history of 1..n_ops operations."""
    dt = get_datatype(datatype, mutate=mutate)
    checked = bad = 0
    first = None
    for h in enumerate_histories(n_ops, n_nodes, datatype, up_to=True):
        checked += 1
        found = check_history(dt, h)
        if found:
            bad += 1
            if first is None:
                first = (h, found)
            if stop_at_first:
                break
    return ExhaustResult(datatype, checked, bad, first)
