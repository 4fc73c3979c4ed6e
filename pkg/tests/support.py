"""Small constructors shared by the test modules."""

from __future__ import annotations

from purelog.clocks import BOTTOM, TaggedStamp, VersionVector
from purelog.kernel import Delivery, Operation

NODES = ("A", "B", "C")


def vv(nodes=NODES, **counts) -> VersionVector:
    return VersionVector.from_mapping(counts, nodes)


def ts(src: str, nodes=NODES, **counts) -> TaggedStamp:
    return TaggedStamp(vv(nodes, **counts), src)


def op(name: str, *args) -> Operation:
    return Operation(name, tuple(args))


def dv(stamp: TaggedStamp, name: str, *args) -> Delivery:
    return Delivery(stamp, op(name, *args))


# criterion number -> list of (passed, detail); printed at the end of the run
ACCEPTANCE: dict[int, list[tuple[bool, str]]] = {}


def record(criterion: int, passed: bool, detail: str) -> None:
    ACCEPTANCE.setdefault(criterion, []).append((bool(passed), detail))


def acceptance_lines() -> list[str]:
    lines = []
    for n in sorted(ACCEPTANCE):
        checks = ACCEPTANCE[n]
        verdict = "PASS" if all(ok for ok, _ in checks) else "FAIL"
        lines.append(f"criterion {n}: {verdict} | " + "; ".join(d for _, d in checks))
    return lines


__all__ = ["ACCEPTANCE", "BOTTOM", "NODES", "acceptance_lines", "dv", "op", "record", "ts", "vv"]
