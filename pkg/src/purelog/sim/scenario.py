"""Scenario description and JSON loading."""

from __future__ import annotations

import json
from collections.abc import Mapping
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Optional, Union

from purelog.datatypes import DATATYPES
from purelog.kernel import Operation


class ScenarioError(ValueError):
    pass


@dataclass(frozen=True)
class ChannelConfig:
    dup_factor: int = 1
    reorder: bool = True
    loss_rate: float = 0.0
    heartbeats: bool = True
    heartbeat_every: int = 1
    max_delay: int = 4
    retransmit_after: int = 3


@dataclass(frozen=True)
class OpPlan:
    count: int
    mix: Optional[Mapping[str, float]] = None
    values: tuple = ("a", "b", "c")
    # client ops are issued at random steps in [0, span); defaults to count
    span: Optional[int] = None


@dataclass(frozen=True)
class ScriptedOp:
    node: str
    op: Operation
    step: int


@dataclass(frozen=True)
class Crash:
    node: str
    step: int
    # None means the node never comes back
    recover_after: Optional[int] = 5
    # durable snapshots follow every own broadcast and every this many steps;
    # 1 snapshots after each delivery batch
    snapshot_every: int = 1


@dataclass(frozen=True)
class Scenario:
    nodes: tuple[str, ...]
    datatype: str
    ops: Union[OpPlan, tuple[ScriptedOp, ...]]
    channel: ChannelConfig = field(default_factory=ChannelConfig)
    crashes: tuple[Crash, ...] = ()
    seed: int = 0
    max_steps: int = 100_000
    oracle: str = "every"  # "every" | "final" | "off"
    mutate: bool = False

    def __post_init__(self):
        validate(self)

    @property
    def scripted(self) -> bool:
        return not isinstance(self.ops, OpPlan)

    def to_json(self) -> dict:
        d = asdict(self)
        d["nodes"] = list(self.nodes)
        if self.scripted:
            d["ops"] = [{"node": s.node, "step": s.step, "op": s.op.to_json()} for s in self.ops]
        else:
            d["ops"]["values"] = list(self.ops.values)
        return d


def validate(sc: Scenario) -> None:
    if not sc.nodes:
        raise ScenarioError("at least one node is required")
    if len(set(sc.nodes)) != len(sc.nodes):
        raise ScenarioError("node ids must be unique")
    if sc.datatype not in DATATYPES:
        raise ScenarioError(f"unknown datatype {sc.datatype!r}")
    ch = sc.channel
    if not 0 <= ch.loss_rate < 1:
        raise ScenarioError("loss_rate must be in [0, 1)")
    if ch.dup_factor < 1 or ch.max_delay < 1 or ch.retransmit_after < 1 or ch.heartbeat_every < 1:
        raise ScenarioError("dup_factor, max_delay, retransmit_after and heartbeat_every must be >= 1")
    if sc.oracle not in ("every", "final", "off"):
        raise ScenarioError(f"oracle must be every/final/off, got {sc.oracle!r}")
    if sc.max_steps < 1:
        raise ScenarioError("max_steps must be positive")
    members = set(sc.nodes)
    if sc.scripted:
        for s in sc.ops:
            if s.node not in members:
                raise ScenarioError(f"scripted op on unknown node {s.node!r}")
            if s.step < 0:
                raise ScenarioError("scripted steps must be non-negative")
    else:
        if sc.ops.count < 0:
            raise ScenarioError("op count must be non-negative")
        if not sc.ops.values:
            raise ScenarioError("value domain must not be empty")
    for c in sc.crashes:
        if c.node not in members:
            raise ScenarioError(f"crash on unknown node {c.node!r}")
        if c.recover_after is not None and c.recover_after < 1:
            raise ScenarioError("recover_after must be >= 1")
        if c.snapshot_every < 1:
            raise ScenarioError("snapshot_every must be >= 1")


def scenario_from_json(obj: Mapping) -> Scenario:
    try:
        ops_obj = obj["ops"]
        if isinstance(ops_obj, list):
            ops = tuple(
                ScriptedOp(s["node"], Operation.from_json(s["op"]), int(s.get("step", i)))
                for i, s in enumerate(ops_obj)
            )
        else:
            ops = OpPlan(
                count=int(ops_obj["count"]),
                mix=ops_obj.get("mix"),
                values=tuple(ops_obj.get("values", OpPlan.values)),
                span=ops_obj.get("span"),
            )
        channel = ChannelConfig(**obj.get("channel", {}))
        crashes = tuple(Crash(**c) for c in obj.get("crashes", ()))
        return Scenario(
            nodes=tuple(obj["nodes"]),
            datatype=obj["datatype"],
            ops=ops,
            channel=channel,
            crashes=crashes,
            seed=int(obj.get("seed", 0)),
            max_steps=int(obj.get("max_steps", 100_000)),
            oracle=obj.get("oracle", "every"),
            mutate=bool(obj.get("mutate", False)),
        )
    except ScenarioError:
        raise
    except (KeyError, TypeError, ValueError) as exc:
        raise ScenarioError(f"malformed scenario: {exc!r}") from exc


def load_scenario(path: Union[str, Path]) -> Scenario:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ScenarioError(f"cannot read scenario {path}: {exc.strerror}") from exc
    try:
        obj = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ScenarioError(f"{path}: invalid JSON: {exc}") from exc
    if not isinstance(obj, dict):
        raise ScenarioError(f"{path}: scenario must be a JSON object")
    return scenario_from_json(obj)
