from __future__ import annotations

import pytest
from hypothesis import given, settings, strategies as st

from purelog.datatypes import POLOG_TYPES, Replica, get_datatype
from purelog.kernel import (
    Delivery,
    Operation,
    PoLog,
    ProtocolViolation,
    UnknownQuery,
    effect,
    eval_query,
    eval_reference,
    log_from_pairs,
    prepare,
    reference_effect,
    stable_handler,
)
from purelog.sim.histories import enumerate_histories, schedules_for

from support import BOTTOM, dv, op, ts

AWSET = get_datatype("awset", mutate=False)
MVREG = get_datatype("mvreg", mutate=False)
RWSET = get_datatype("rwset", mutate=False)
EWFLAG = get_datatype("ewflag", mutate=False)

t1 = ts("A", A=1)
t2 = ts("A", A=2)
tb = ts("B", B=1)


@pytest.mark.parametrize("o", [op("add", "x"), op("clear"), op("wr", 7)])
def test_prepare_returns_the_operation_verbatim(o):
    assert prepare(o, PoLog()) is o
    assert prepare(o).encode() == o.encode()


def test_operation_addressing_and_json():
    o = op("add", "x")
    assert o[0] == "add" and o[1] == "x"
    assert o.to_json() == {"name": "add", "args": ["x"]}
    assert Operation.from_json(o.to_json()) == o
    assert o.encode() == '{"name":"add","args":["x"]}'
    assert repr(op("clear")) == "[clear]"


def test_effect_examples():
    s = effect(AWSET, dv(t1, "add", "x"), PoLog())
    assert s == log_from_pairs([(t1, op("add", "x"))])
    assert effect(AWSET, dv(t2, "rmv", "x"), s) == PoLog()
    s = effect(MVREG, dv(t1, "wr", "a"), PoLog())
    s = effect(MVREG, dv(tb, "wr", "b"), s)
    assert set(s.tagged) == {t1, tb}


def test_effect_rejects_duplicate_stamps_and_ignores_heartbeats():
    s = effect(AWSET, dv(t1, "add", "x"), PoLog())
    with pytest.raises(ProtocolViolation):
        effect(AWSET, dv(t1, "add", "y"), s)
    assert effect(AWSET, Delivery(t2, None), s) is s


def test_bottom_entries_take_part_in_pruning():
    s = log_from_pairs([(BOTTOM, op("add", "x")), (BOTTOM, op("add", "y"))])
    assert effect(AWSET, dv(t1, "rmv", "x"), s) == log_from_pairs([(BOTTOM, op("add", "y"))])
    assert effect(AWSET, dv(t1, "clear"), s) == PoLog()


def test_stable_handler_examples():
    s = log_from_pairs([(t1, op("add", "x"))])
    assert stable_handler(AWSET, t1, s) == log_from_pairs([(BOTTOM, op("add", "x"))])
    assert stable_handler(AWSET, t2, s) == s
    assert stable_handler(RWSET, t1, log_from_pairs([(t1, op("rmv", "x"))])) == PoLog()


def test_eval_examples():
    s = log_from_pairs([(BOTTOM, op("add", "x")), (t1, op("add", "y"))])
    assert eval_query(AWSET, op("elems"), s) == {"x", "y"}
    assert eval_query(AWSET, op("size"), s) == 2
    assert eval_query(MVREG, op("rd"), PoLog()) == frozenset()
    assert eval_query(EWFLAG, op("read"), log_from_pairs([(t1, op("enable"))])) is True
    with pytest.raises(UnknownQuery):
        eval_query(AWSET, op("rd"), s)
    with pytest.raises(UnknownQuery):
        eval_reference(AWSET, op("value"), s)


def test_reference_effect_never_prunes():
    s = reference_effect(dv(t1, "add", "x"), PoLog())
    assert s == log_from_pairs([(t1, op("add", "x"))])
    s = reference_effect(dv(tb, "rmv", "x"), s)
    assert len(s) == 2
    with pytest.raises(ProtocolViolation):
        reference_effect(dv(tb, "rmv", "x"), s)
    seq = PoLog()
    for k in range(1, 6):
        seq = reference_effect(dv(ts("A", A=k), "add", "x"), seq)
    assert len(seq) == 5
    assert eval_reference(AWSET, op("elems"), seq) == {"x"}


def test_polog_json_is_deterministic():
    s = log_from_pairs([
        (BOTTOM, op("add", "y")), (BOTTOM, op("add", "x")),
        (tb, op("rmv", "x")), (t1, op("add", "z")),
    ])
    assert s.to_json() == {
        "stable": [{"name": "add", "args": ["x"]}, {"name": "add", "args": ["y"]}],
        "tagged": [
            {"vv": {"A": 1, "B": 0, "C": 0}, "src": "A", "op": {"name": "add", "args": ["z"]}},
            {"vv": {"A": 0, "B": 1, "C": 0}, "src": "B", "op": {"name": "rmv", "args": ["x"]}},
        ],
    }
    assert list(s.pairs())[:2] == [(BOTTOM, o) for o in s.stable]


ALPHABET = {
    "awset": [op("add", "x"), op("rmv", "x"), op("add", "y"), op("clear")],
    "rwset": [op("add", "x"), op("rmv", "x"), op("add", "y"), op("clear")],
    "mvreg": [op("wr", "a"), op("wr", "b"), op("clear")],
    "ewflag": [op("enable"), op("disable"), op("clear")],
    "dwflag": [op("enable"), op("disable"), op("clear")],
}


@settings(max_examples=150, deadline=None)
@given(st.sampled_from(POLOG_TYPES), st.data())
def test_effect_commutes_for_concurrent_deliveries(name, data):
    dt = get_datatype(name, mutate=False)
    ops = st.sampled_from(ALPHABET[name])
    base = data.draw(st.lists(ops, max_size=5))
    n_stable = data.draw(st.integers(0, len(base)))
    s = PoLog()
    for k, o in enumerate(base, 1):
        s = effect(dt, Delivery(ts("A", A=k), o), s)
    for k in range(1, n_stable + 1):
        s = stable_handler(dt, ts("A", A=k), s)
    i = data.draw(st.integers(0, len(base)))
    j = data.draw(st.integers(0, len(base)))
    d1 = Delivery(ts("B", A=i, B=1), data.draw(ops))
    d2 = Delivery(ts("C", A=j, C=1), data.draw(ops))
    assert effect(dt, d1, effect(dt, d2, s)) == effect(dt, d2, effect(dt, d1, s))


@pytest.mark.parametrize("name", POLOG_TYPES)
def test_stabilization_never_changes_answers(name):
    dt = get_datatype(name, mutate=False)
    for h in enumerate_histories(4, 2, name, up_to=True):
        for sched in schedules_for(h).values():
            with_stable, without = Replica(dt), Replica(dt)
            for ev in sched:
                if isinstance(ev, Delivery):
                    with_stable.deliver(ev)
                    without.deliver(ev)
                else:
                    with_stable.stable(ev)
                assert with_stable.results() == without.results(), h.describe()
