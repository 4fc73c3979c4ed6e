"""Version vectors, tagged stamps and the bottom marker.

Vectors are dense over a fixed membership: every node id has an entry,
defaulting to zero.  A ``TaggedStamp`` is a vector plus the node that
produced it.  ``BOTTOM`` stands in for a stamp that has become causally
stable; it sorts below every tagged stamp.
"""

from __future__ import annotations

import enum
from collections.abc import Iterable, Mapping
from typing import NamedTuple, Union

NodeId = str


class ClockError(ValueError):
    pass


class DomainMismatch(ClockError):
    """Two vectors were built over different memberships."""


class UnknownNode(ClockError, KeyError):
    """A node id outside the fixed membership was used."""

    def __str__(self) -> str:
        return ValueError.__str__(self)


class Ordering(enum.Enum):
    EQUAL = "equal"
    LESS = "less"
    GREATER = "greater"
    CONCURRENT = "concurrent"


class VersionVector(NamedTuple):
    """Counters indexed by position in ``nodes`` (sorted node ids)."""

    nodes: tuple[NodeId, ...]
    counts: tuple[int, ...]

    @classmethod
    def zero(cls, nodes: Iterable[NodeId]) -> VersionVector:
        members = tuple(sorted(set(nodes)))
        if not members:
            raise ClockError("membership must contain at least one node")
        return cls(members, (0,) * len(members))

    @classmethod
    def from_mapping(cls, entries: Mapping[NodeId, int],
                     nodes: Iterable[NodeId] | None = None) -> VersionVector:
        members = tuple(sorted(set(nodes) if nodes is not None else entries))
        extra = set(entries) - set(members)
        if extra:
            raise UnknownNode(f"unknown node(s) {sorted(extra)}")
        counts = tuple(int(entries.get(n, 0)) for n in members)
        if any(c < 0 for c in counts):
            raise ClockError("counters must be non-negative")
        return cls(members, counts)

    def __getitem__(self, key):  # type: ignore[override]
        # integer access keeps NamedTuple unpacking working
        if isinstance(key, int):
            return tuple.__getitem__(self, key)
        try:
            return self.counts[self.nodes.index(key)]
        except ValueError:
            raise UnknownNode(f"unknown node {key!r}") from None

    def get(self, node: NodeId) -> int:
        return self[node]

    def as_dict(self) -> dict[NodeId, int]:
        return dict(zip(self.nodes, self.counts))

    def text(self) -> str:
        return ",".join(f"{n}:{c}" for n, c in zip(self.nodes, self.counts))

    def __repr__(self) -> str:
        return f"VV({self.text()})"


class TaggedStamp(NamedTuple):
    vv: VersionVector
    src: NodeId

    @property
    def seq(self) -> int:
        """The sender-local sequence number carried in the stamp."""
        return self.vv[self.src]

    def __repr__(self) -> str:
        return f"<{self.src}@{self.vv.text()}>"


class _Bottom:
    __slots__ = ()
    _instance: _Bottom | None = None

    def __new__(cls) -> _Bottom:
        if cls._instance is None:
            cls._instance = super().__new__(cls)
        return cls._instance

    def __repr__(self) -> str:
        return "BOTTOM"

    def __reduce__(self):
        return (_Bottom, ())

    def __deepcopy__(self, memo):
        return self

    def __copy__(self):
        return self


BOTTOM = _Bottom()

Stamp = Union[_Bottom, TaggedStamp]


def _check_domain(a: VersionVector, b: VersionVector) -> None:
    if a.nodes is not b.nodes and a.nodes != b.nodes:
        raise DomainMismatch(f"{a.nodes} vs {b.nodes}")


def compare(a: VersionVector, b: VersionVector) -> Ordering:
    _check_domain(a, b)
    le = ge = True
    for x, y in zip(a.counts, b.counts):
        if x < y:
            ge = False
        elif x > y:
            le = False
    if le and ge:
        return Ordering.EQUAL
    if le:
        return Ordering.LESS
    if ge:
        return Ordering.GREATER
    return Ordering.CONCURRENT


def vv_less(a: VersionVector, b: VersionVector) -> bool:
    """Strict happened-before on vectors (hot path, no Ordering allocation)."""
    _check_domain(a, b)
    ac, bc = a.counts, b.counts
    if ac == bc:
        return False
    for x, y in zip(ac, bc):
        if x > y:
            return False
    return True


def increment(vv: VersionVector, node: NodeId) -> VersionVector:
    try:
        i = vv.nodes.index(node)
    except ValueError:
        raise UnknownNode(f"unknown node {node!r}") from None
    counts = list(vv.counts)
    counts[i] += 1
    return VersionVector(vv.nodes, tuple(counts))


def join(a: VersionVector, b: VersionVector) -> VersionVector:
    _check_domain(a, b)
    return VersionVector(a.nodes, tuple(map(max, a.counts, b.counts)))


def stamp_less(a: Stamp, b: Stamp) -> bool:
    """``a < b`` where bottom is below every tagged stamp."""
    if a is BOTTOM:
        return b is not BOTTOM
    if b is BOTTOM:
        return False
    return vv_less(a.vv, b.vv)  # type: ignore[union-attr]


def stamp_to_json(stamp: TaggedStamp) -> dict:
    return {"vv": stamp.vv.as_dict(), "src": stamp.src}


def stamp_from_json(obj: Mapping, nodes: Iterable[NodeId] | None = None) -> TaggedStamp:
    return TaggedStamp(VersionVector.from_mapping(obj["vv"], nodes), obj["src"])
