"""Catalog of pure op-based datatypes.

Commutative types (``gcounter``, ``pncounter``, ``gset``, ``twopset``) apply
operations straight to a sequential state.  The others (``ewflag``,
``dwflag``, ``mvreg``, ``awset``, ``rwset``) are PO-Log types described by a
:class:`~purelog.kernel.DatatypeBehavior`.

Entry relations take a ``precedes`` comparator so that a deliberately
broken comparator can be injected to check that the oracle notices.
"""

from __future__ import annotations

import os
from collections.abc import Callable, Iterable, Mapping
from dataclasses import dataclass
from typing import Any, Union

from purelog.clocks import BOTTOM, Stamp, TaggedStamp, stamp_less
from purelog.kernel import (
    DatatypeBehavior,
    Delivery,
    Operation,
    PoLog,
    UnknownQuery,
    UnsupportedOperation,
    effect,
    eval_query,
    reference_effect,
    stable_handler,
)
from purelog.kernel import eval_reference as kernel_eval_reference

ADD, RMV, CLEAR = "add", "rmv", "clear"
INC, DEC = "inc", "dec"
WR, RD = "wr", "rd"
ENABLE, DISABLE = "enable", "disable"
ELEMS, SIZE, VALUE, READ = "elems", "size", "value", "read"

Precedes = Callable[[Stamp, TaggedStamp], bool]


def _arg(op: Operation) -> Any:
    return op.args[0] if op.args else None


def _same_element(o: Operation, xo: Operation) -> bool:
    return bool(o.args) and bool(xo.args) and o.args[0] == xo.args[0]


# -- commutative types --------------------------------------------------------


@dataclass(frozen=True)
class CounterState:
    value: int = 0


@dataclass(frozen=True)
class GSetState:
    elems: frozenset = frozenset()


@dataclass(frozen=True)
class TwoPSetState:
    present: frozenset = frozenset()
    removed: frozenset = frozenset()


def counter_apply(kind: str, op: Operation, st: CounterState) -> CounterState:
    if op.name == INC:
        return CounterState(st.value + 1)
    if op.name == DEC and kind == "PN":
        return CounterState(st.value - 1)
    raise UnsupportedOperation(f"{kind}-Counter does not support {op.name!r}")


def gset_apply(op: Operation, st: GSetState) -> GSetState:
    if op.name != ADD:
        raise UnsupportedOperation(f"G-Set does not support {op.name!r}")
    return GSetState(st.elems | {op[1]})


def twopset_apply(op: Operation, st: TwoPSetState) -> TwoPSetState:
    v = op[1]
    if op.name == ADD:
        if v in st.removed:
            return st
        return TwoPSetState(st.present | {v}, st.removed)
    if op.name == RMV:
        return TwoPSetState(st.present - {v}, st.removed | {v})
    raise UnsupportedOperation(f"2P-Set does not support {op.name!r}")


@dataclass(frozen=True)
class CommutativeType:
    name: str
    updates: Mapping[str, int]
    queries: tuple[str, ...]
    initial: Callable[[], Any]
    apply: Callable[[Operation, Any], Any]
    query: Callable[[Operation, Any], Any]
    # independent oracle: evaluate a query from the multiset of delivered ops
    reference: Callable[[Operation, list], Any]


def _counter_type(name: str, kind: str) -> CommutativeType:
    def query(q: Operation, st: CounterState) -> int:
        return st.value

    def reference(q: Operation, ops: list) -> int:
        return sum(1 if o.name == INC else -1 for o in ops)

    updates = {INC: 0} if kind == "G" else {INC: 0, DEC: 0}
    return CommutativeType(name, updates, (VALUE,), CounterState,
                           lambda op, st: counter_apply(kind, op, st), query, reference)


def _set_query(q: Operation, elems: frozenset) -> Any:
    return len(elems) if q.name == SIZE else elems


def gset_type() -> CommutativeType:
    def reference(q: Operation, ops: list) -> Any:
        return _set_query(q, frozenset(o[1] for o in ops))

    return CommutativeType("gset", {ADD: 1}, (ELEMS, SIZE), GSetState, gset_apply,
                           lambda q, st: _set_query(q, st.elems), reference)


def twopset_type() -> CommutativeType:
    def reference(q: Operation, ops: list) -> Any:
        added = {o[1] for o in ops if o.name == ADD}
        removed = {o[1] for o in ops if o.name == RMV}
        return _set_query(q, frozenset(added - removed))

    return CommutativeType("twopset", {ADD: 1, RMV: 1}, (ELEMS, SIZE), TwoPSetState,
                           twopset_apply, lambda q, st: _set_query(q, st.present), reference)


# -- PO-Log types -------------------------------------------------------------


def _identity_stabilize(t: TaggedStamp, log: PoLog) -> PoLog:
    return log


def awset_behavior(precedes: Precedes = stamp_less) -> DatatypeBehavior:
    def redundant(t, o, log):
        return o.name in (CLEAR, RMV)

    def entry(xt, xo, t, o):
        return precedes(xt, t) and (o.name == CLEAR or _same_element(o, xo))

    def eval_compact(q, log):
        elems = frozenset(_arg(op) for op in log.ops() if op.name == ADD)
        return _set_query(q, elems)

    def eval_ref(q, log):
        items = list(log.pairs())
        elems = frozenset(
            _arg(o) for t, o in items if o.name == ADD
            and not any(stamp_less(t, t2) for t2, o2 in items
                        if o2.name == CLEAR or (o2.name == RMV and _arg(o2) == _arg(o)))
        )
        return _set_query(q, elems)

    return DatatypeBehavior("awset", {ADD: 1, RMV: 1, CLEAR: 0}, (ELEMS, SIZE),
                            redundant, entry, entry, _identity_stabilize,
                            eval_compact, eval_ref)


def rwset_stabilize(t: TaggedStamp, s: PoLog) -> PoLog:
    """Drop operations made useless by ``t`` becoming causally stable."""
    items = list(s.pairs())
    doomed = set()
    for st, op in items:
        e = _arg(op)
        on_e = [(st2, op2) for st2, op2 in items if _arg(op2) == e]
        if st == t and op.name == ADD:
            if any(st2 != t for st2, _ in on_e):
                doomed.add((st, op))
        elif st == t and op.name == RMV:
            if {op2.name for st2, op2 in on_e if st2 != t} != {ADD}:
                doomed.add((st, op))
        elif st is BOTTOM and op.name == RMV:
            if all(st2 == t for st2, op2 in on_e if op2.name == ADD):
                doomed.add((st, op))
    if not doomed:
        return s
    stable = frozenset(op for op in s.stable if (BOTTOM, op) not in doomed)
    tagged = {st: op for st, op in s.tagged.items() if (st, op) not in doomed}
    return PoLog(stable, tagged)


def rwset_behavior(precedes: Precedes = stamp_less) -> DatatypeBehavior:
    """Remove-wins set.

    Pruning an earlier ``rmv`` (by a later ``add`` of the same element or by
    a ``clear``) forgets that the ``rmv`` may be concurrent with an ``add``
    still in flight, so on some histories the compact answer differs from
    the full-log one.  The design is kept as published.
    """

    def redundant(t, o, log):
        return o.name == CLEAR

    def entry(xt, xo, t, o):
        if not precedes(xt, t):
            return False
        return o.name == CLEAR or _same_element(o, xo)

    def eval_compact(q, log):
        ops = list(log.ops())
        removed = {_arg(op) for op in ops if op.name == RMV}
        elems = frozenset(_arg(op) for op in ops if op.name == ADD) - removed
        return _set_query(q, elems)

    def eval_ref(q, log):
        items = list(log.pairs())
        elems = set()
        for t, o in items:
            if o.name != ADD:
                continue
            v = _arg(o)
            if all(stamp_less(t2, t) for t2, o2 in items if o2.name == RMV and _arg(o2) == v) \
                    and not any(stamp_less(t, t2) for t2, o2 in items if o2.name == CLEAR):
                elems.add(v)
        return _set_query(q, frozenset(elems))

    return DatatypeBehavior("rwset", {ADD: 1, RMV: 1, CLEAR: 0}, (ELEMS, SIZE),
                            redundant, entry, entry, rwset_stabilize,
                            eval_compact, eval_ref)


def mvreg_behavior(precedes: Precedes = stamp_less) -> DatatypeBehavior:
    def redundant(t, o, log):
        return o.name == CLEAR

    def entry(xt, xo, t, o):
        return precedes(xt, t)

    def eval_compact(q, log):
        return frozenset(_arg(op) for op in log.ops() if op.name == WR)

    def eval_ref(q, log):
        items = list(log.pairs())
        return frozenset(_arg(o) for t, o in items if o.name == WR
                         and not any(stamp_less(t, t2) for t2, _ in items))

    return DatatypeBehavior("mvreg", {WR: 1, CLEAR: 0}, (RD,), redundant, entry, entry,
                            _identity_stabilize, eval_compact, eval_ref)


def ewflag_behavior(precedes: Precedes = stamp_less) -> DatatypeBehavior:
    def redundant(t, o, log):
        return o.name in (DISABLE, CLEAR)

    def entry(xt, xo, t, o):
        return precedes(xt, t)

    def eval_compact(q, log):
        return any(op.name == ENABLE for op in log.ops())

    def eval_ref(q, log):
        items = list(log.pairs())
        return any(
            o.name == ENABLE
            and not any(stamp_less(t, t2) for t2, o2 in items if o2.name in (DISABLE, CLEAR))
            for t, o in items
        )

    return DatatypeBehavior("ewflag", {ENABLE: 0, DISABLE: 0, CLEAR: 0}, (READ,),
                            redundant, entry, entry, _identity_stabilize,
                            eval_compact, eval_ref)


def dwflag_behavior(precedes: Precedes = stamp_less) -> DatatypeBehavior:
    """Disable-wins flag; shares the pruning caveat of :func:`rwset_behavior`."""

    def redundant(t, o, log):
        return o.name == CLEAR

    def entry(xt, xo, t, o):
        return precedes(xt, t)

    def eval_compact(q, log):
        names = {op.name for op in log.ops()}
        return ENABLE in names and DISABLE not in names

    def eval_ref(q, log):
        items = list(log.pairs())
        return any(
            o.name == ENABLE
            and all(stamp_less(t2, t) for t2, o2 in items if o2.name == DISABLE)
            and not any(stamp_less(t, t2) for t2, o2 in items if o2.name == CLEAR)
            for t, o in items
        )

    return DatatypeBehavior("dwflag", {ENABLE: 0, DISABLE: 0, CLEAR: 0}, (READ,),
                            redundant, entry, entry, _identity_stabilize,
                            eval_compact, eval_ref)


def awset_to_plain(log: PoLog) -> frozenset:
    """A fully stable AW-Set log is just a set of elements."""
    if log.tagged:
        raise ValueError("log still has tagged entries")
    return frozenset(_arg(op) for op in log.stable)


def awset_from_plain(elems: Iterable) -> PoLog:
    return PoLog(frozenset(Operation(ADD, (v,)) for v in elems), {})


# -- catalog ------------------------------------------------------------------

Datatype = Union[CommutativeType, DatatypeBehavior]


def sloppy_precedes(a: Stamp, b: TaggedStamp) -> bool:
    """Fault injection: treats concurrent stamps as ordered."""
    return not stamp_less(b, a) and a != b


def _constructors() -> dict[str, Callable[..., Datatype]]:
    return {
        "gcounter": lambda **_: _counter_type("gcounter", "G"),
        "pncounter": lambda **_: _counter_type("pncounter", "PN"),
        "gset": lambda **_: gset_type(),
        "twopset": lambda **_: twopset_type(),
        "ewflag": ewflag_behavior,
        "dwflag": dwflag_behavior,
        "mvreg": mvreg_behavior,
        "awset": awset_behavior,
        "rwset": rwset_behavior,
    }


DATATYPES = ("gcounter", "pncounter", "gset", "twopset",
             "ewflag", "dwflag", "mvreg", "awset", "rwset")
COMMUTATIVE = DATATYPES[:4]
POLOG_TYPES = DATATYPES[4:]


def mutation_enabled() -> bool:
    return os.environ.get("PURELOG_MUTATE", "") not in ("", "0")


def get_datatype(name: str, mutate: bool | None = None) -> Datatype:
    ctors = _constructors()
    if name not in ctors:
        raise KeyError(f"unknown datatype {name!r}; expected one of {', '.join(DATATYPES)}")
    if mutate is None:
        mutate = mutation_enabled()
    if mutate and name not in COMMUTATIVE:
        return ctors[name](precedes=sloppy_precedes)
    return ctors[name]()


def is_commutative(dt: Datatype) -> bool:
    return isinstance(dt, CommutativeType)


def query_ops(dt: Datatype) -> list[Operation]:
    return [Operation(q) for q in dt.queries]


class Replica:
    """Datatype state at one node, driven by deliveries and stability events."""

    def __init__(self, dt: Datatype):
        self.dt = dt
        self.state: Any = dt.initial() if is_commutative(dt) else PoLog()

    def deliver(self, d: Delivery) -> None:
        if d.op is None:
            return
        if d.op.name not in self.dt.updates:
            raise UnsupportedOperation(f"{self.dt.name} does not support {d.op.name!r}")
        if is_commutative(self.dt):
            self.state = self.dt.apply(d.op, self.state)
        else:
            self.state = effect(self.dt, d, self.state)

    def stable(self, t: TaggedStamp) -> None:
        if not is_commutative(self.dt):
            self.state = stable_handler(self.dt, t, self.state)

    def query(self, q: Operation) -> Any:
        if q.name not in self.dt.queries:
            raise UnknownQuery(f"{self.dt.name} has no query {q.name!r}")
        if is_commutative(self.dt):
            return self.dt.query(q, self.state)
        return eval_query(self.dt, q, self.state)

    def results(self) -> dict[str, Any]:
        return {q.name: self.query(q) for q in query_ops(self.dt)}

    def log_sizes(self) -> tuple[int, int]:
        """(tagged, stable) entry counts; zero for commutative types."""
        if is_commutative(self.dt):
            return 0, 0
        return len(self.state.tagged), len(self.state.stable)


class ReferenceReplica:
    """Keeps everything delivered and answers queries from the full history."""

    def __init__(self, dt: Datatype):
        self.dt = dt
        self.ops: list[Operation] = []
        self.log = PoLog()

    def deliver(self, d: Delivery) -> None:
        if d.op is None:
            return
        self.ops.append(d.op)
        if not is_commutative(self.dt):
            self.log = reference_effect(d, self.log)

    def query(self, q: Operation) -> Any:
        if is_commutative(self.dt):
            return self.dt.reference(q, self.ops)
        return kernel_eval_reference(self.dt, q, self.log)

    def results(self) -> dict[str, Any]:
        return {q.name: self.query(q) for q in query_ops(self.dt)}
