from __future__ import annotations

import copy
import pickle

import pytest
from hypothesis import given, strategies as st

from purelog.clocks import (
    BOTTOM,
    DomainMismatch,
    Ordering,
    TaggedStamp,
    UnknownNode,
    VersionVector,
    compare,
    increment,
    join,
    stamp_from_json,
    stamp_less,
    stamp_to_json,
)

AB = ("A", "B")


def v(**counts) -> VersionVector:
    return VersionVector.from_mapping(counts, AB)


@pytest.mark.parametrize("a, b, expected", [
    (v(A=1, B=0), v(A=1, B=0), Ordering.EQUAL),
    (v(A=1, B=0), v(A=1, B=1), Ordering.LESS),
    (v(A=1, B=1), v(A=1, B=0), Ordering.GREATER),
    (v(A=2, B=0), v(A=1, B=1), Ordering.CONCURRENT),
])
def test_compare_examples(a, b, expected):
    assert compare(a, b) is expected


def test_compare_rejects_mismatched_domains():
    with pytest.raises(DomainMismatch):
        compare(v(A=1), VersionVector.from_mapping({"A": 1}, ("A", "C")))


def test_increment_examples():
    assert increment(v(), "A") == v(A=1)
    assert increment(v(A=3, B=7), "B") == v(A=3, B=8)
    assert increment(increment(v(), "A"), "A") == v(A=2, B=0)
    with pytest.raises(UnknownNode):
        increment(v(), "Z")


def test_join_examples():
    x = v(A=1, B=0)
    assert join(x, v(A=0, B=2)) == v(A=1, B=2)
    assert join(x, VersionVector.zero(AB)) == x
    assert join(x, x) == x


def test_vectors_are_dense_and_keyed_by_node():
    x = VersionVector.from_mapping({"B": 4}, ("B", "A"))
    assert x.nodes == AB
    assert x["A"] == 0 and x["B"] == 4
    assert x.text() == "A:0,B:4"
    with pytest.raises(UnknownNode):
        x["C"]
    with pytest.raises(UnknownNode):
        VersionVector.from_mapping({"C": 1}, AB)
    with pytest.raises(ValueError):
        VersionVector.from_mapping({"A": -1}, AB)


def test_stamp_less_examples():
    assert stamp_less(BOTTOM, TaggedStamp(VersionVector.from_mapping({"A": 1}), "A"))
    assert not stamp_less(BOTTOM, BOTTOM)
    assert not stamp_less(TaggedStamp(v(A=2), "A"), TaggedStamp(v(A=1, B=1), "B"))
    assert not stamp_less(TaggedStamp(v(A=1), "A"), BOTTOM)
    assert stamp_less(TaggedStamp(v(A=1), "A"), TaggedStamp(v(A=1, B=1), "B"))


def test_bottom_is_a_singleton_that_survives_copying():
    assert copy.deepcopy(BOTTOM) is BOTTOM
    assert copy.copy(BOTTOM) is BOTTOM
    assert pickle.loads(pickle.dumps(BOTTOM)) is BOTTOM
    assert BOTTOM != VersionVector.zero(AB)


def test_stamp_json_round_trip():
    t = TaggedStamp(v(A=2, B=1), "A")
    assert stamp_to_json(t) == {"vv": {"A": 2, "B": 1}, "src": "A"}
    assert stamp_from_json(stamp_to_json(t)) == t
    assert t.seq == 2


vectors = st.lists(st.integers(0, 4), min_size=3, max_size=3).map(
    lambda cs: VersionVector(("A", "B", "C"), tuple(cs)))


@given(vectors, vectors, vectors)
def test_compare_is_a_partial_order(a, b, c):
    assert compare(a, a) is Ordering.EQUAL
    if compare(a, b) is Ordering.LESS:
        assert compare(b, a) is Ordering.GREATER
        if compare(b, c) in (Ordering.LESS, Ordering.EQUAL):
            assert compare(a, c) is Ordering.LESS
    if compare(a, b) is Ordering.EQUAL:
        assert a == b


@given(vectors, vectors)
def test_compare_duality(a, b):
    dual = {Ordering.LESS: Ordering.GREATER, Ordering.GREATER: Ordering.LESS,
            Ordering.EQUAL: Ordering.EQUAL, Ordering.CONCURRENT: Ordering.CONCURRENT}
    assert compare(b, a) is dual[compare(a, b)]


@given(vectors, vectors, vectors)
def test_join_laws(a, b, c):
    assert join(a, join(b, c)) == join(join(a, b), c)
    assert join(a, b) == join(b, a)
    assert join(a, a) == a
    assert compare(a, join(a, b)) in (Ordering.LESS, Ordering.EQUAL)


@given(vectors, st.sampled_from("ABC"))
def test_bottom_is_below_every_tagged_stamp(a, src):
    assert stamp_less(BOTTOM, TaggedStamp(a, src))
