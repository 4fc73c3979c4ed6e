"""Deterministic discrete-event simulation of a replica group.

Virtual time is a step counter.  Within a step the loop handles, in order:
crash and recovery events, client operations, channel arrivals, heartbeats,
stability notifications, durable snapshots and metric rows.

The channel draws delays, losses and duplicate copies from one random
stream per directed link, so traffic on one link never perturbs another.
Loss is masked by retransmission: a lost attempt simply arrives
``retransmit_after`` steps later.
"""

from __future__ import annotations

import csv
import heapq
import io
import json
import pickle
import random
from dataclasses import dataclass, field, replace
from typing import Any, Optional

from purelog.clocks import NodeId
from purelog.datatypes import (
    CLEAR,
    Replica,
    get_datatype,
    is_commutative,
    query_ops,
)
from purelog.kernel import Delivery, Operation, prepare
from purelog.sim.checks import Mismatch, NotQuiescent, canonical, check_convergence, replay_schedule
from purelog.sim.scenario import Crash, OpPlan, Scenario, ScenarioError, ScriptedOp
from purelog.tcsb import TcsbNode, WireMessage

# relative weight of ``clear`` in generated workloads; other updates weigh 1
CLEAR_WEIGHT = 0.1


def plan_ops(sc: Scenario) -> tuple[ScriptedOp, ...]:
    """The concrete client operations of a scenario, ordered by step."""
    if sc.scripted:
        return tuple(sorted(sc.ops, key=lambda s: s.step))
    plan: OpPlan = sc.ops
    dt = get_datatype(sc.datatype, mutate=False)
    rng = random.Random(f"{sc.seed}/ops")
    names = sorted(dt.updates)
    if plan.mix:
        weights = [float(plan.mix.get(n, 0.0)) for n in names]
    else:
        weights = [CLEAR_WEIGHT if n == CLEAR else 1.0 for n in names]
    span = plan.span or max(plan.count, 1)
    steps = sorted(rng.randrange(span) for _ in range(plan.count))
    out = []
    for step in steps:
        node = rng.choice(sc.nodes)
        name = rng.choices(names, weights)[0]
        args = tuple(rng.choice(plan.values) for _ in range(dt.updates[name]))
        out.append(ScriptedOp(node, Operation(name, args), step))
    return tuple(out)


class _Link:
    __slots__ = ("rng", "last")

    def __init__(self, seed: str):
        self.rng = random.Random(seed)
        self.last = 0


class Channel:
    """Adversarial point-to-point transport between fixed members."""

    def __init__(self, sc: Scenario):
        self.cfg = sc.channel
        self.nodes = sc.nodes
        self._links = {(a, b): _Link(f"{sc.seed}/net/{a}/{b}")
                       for a in sc.nodes for b in sc.nodes if a != b}
        self._heap: list = []
        self._n = 0
        # every message ever addressed to a node, resent when it recovers
        self.sent_to: dict[NodeId, list[tuple[WireMessage, int]]] = {n: [] for n in sc.nodes}
        self.bytes_on_wire = 0
        self.transmissions = 0

    def __len__(self) -> int:
        return len(self._heap)

    def _push(self, at: int, prio: float, dest: NodeId, msg: WireMessage) -> None:
        self._n += 1
        heapq.heappush(self._heap, (at, prio, self._n, dest, msg))

    def _schedule(self, link: _Link, now: int, dest: NodeId, msg: WireMessage, size: int) -> None:
        cfg = self.cfg
        rng = link.rng
        at = now + (rng.randint(1, cfg.max_delay) if cfg.reorder else 1)
        attempts = 1
        while cfg.loss_rate and rng.random() < cfg.loss_rate:
            at += cfg.retransmit_after
            attempts += 1
        if not cfg.reorder:
            at = max(at, link.last)
            link.last = at
        self.transmissions += attempts
        self.bytes_on_wire += attempts * size
        self._push(at, rng.random(), dest, msg)

    def send(self, msg: WireMessage, now: int, size: int) -> None:
        for dest in self.nodes:
            if dest == msg.origin:
                continue
            link = self._links[msg.origin, dest]
            self.sent_to[dest].append((msg, size))
            for _ in range(self.cfg.dup_factor):
                self._schedule(link, now, dest, msg, size)

    def resend_all(self, dest: NodeId, now: int, rng: random.Random) -> None:
        """Peers retransmit their history to a node recovering from a snapshot."""
        for msg, size in self.sent_to[dest]:
            at = now + rng.randint(1, self.cfg.max_delay)
            self.transmissions += 1
            self.bytes_on_wire += size
            self._push(at, rng.random(), dest, msg)

    def due(self, now: int) -> list[tuple[NodeId, WireMessage]]:
        out = []
        heap = self._heap
        while heap and heap[0][0] <= now:
            _, _, _, dest, msg = heapq.heappop(heap)
            out.append((dest, msg))
        return out


class _Node:
    """Simulator-side bookkeeping for one replica, including audit state."""

    def __init__(self, name: NodeId, sc: Scenario, dt):
        self.name = name
        self.tcsb: Optional[TcsbNode] = TcsbNode(name, sc.nodes)
        self.replica = Replica(dt)
        self.idx = {n: i for i, n in enumerate(sc.nodes)}
        self.up = True
        self.dead = False
        self.dirty = False
        self.schedule: list = []
        self.delivered: set = set()
        self.audit_counts = [0] * len(sc.nodes)
        self.stable_join = [0] * len(sc.nodes)
        self.stable_seen: set = set()
        self.snapshot: Optional[bytes] = None

    def durable(self) -> tuple:
        return (self.tcsb, self.replica.state, len(self.schedule), self.delivered,
                self.audit_counts, self.stable_join, self.stable_seen)

    def take_snapshot(self) -> None:
        self.snapshot = pickle.dumps(self.durable())

    def crash(self) -> None:
        self.up = False
        self.tcsb = None
        self.replica.state = None

    def restore(self) -> None:
        (self.tcsb, self.replica.state, n, self.delivered, self.audit_counts,
         self.stable_join, self.stable_seen) = pickle.loads(self.snapshot)
        del self.schedule[n:]
        self.up = True
        self.dirty = True


@dataclass
class TraceReport:
    scenario: Scenario
    events: list = field(default_factory=list)
    final_results: dict = field(default_factory=dict)
    final_logs: dict = field(default_factory=dict)
    delivered_ops: dict = field(default_factory=dict)
    steps: int = 0
    quiescent: bool = False
    converged: bool = False
    oracle_match: Optional[bool] = None
    mismatch: Optional[Mismatch] = None
    stability_violations: int = 0
    causal_violations: int = 0
    duplicate_deliveries: int = 0
    missing_deliveries: int = 0
    purity_violations: int = 0
    broadcasts: int = 0
    op_broadcasts: int = 0
    dropped_ops: int = 0
    stable_fraction: float = 1.0
    all_tagged_empty: bool = True
    bytes_on_wire: int = 0
    transmissions: int = 0
    metrics: list = field(default_factory=list)

    @property
    def exactly_once(self) -> bool:
        return self.duplicate_deliveries == 0 and self.missing_deliveries == 0

    @property
    def ok(self) -> bool:
        return (self.converged and self.oracle_match is not False
                and self.stability_violations == 0 and self.causal_violations == 0
                and self.exactly_once and self.purity_violations == 0)

    def summary(self) -> dict:
        return {
            "datatype": self.scenario.datatype,
            "nodes": list(self.scenario.nodes),
            "seed": self.scenario.seed,
            "steps": self.steps,
            "quiescent": self.quiescent,
            "converged": self.converged,
            "oracle_match": self.oracle_match,
            "mismatch": None if self.mismatch is None else str(self.mismatch),
            "stability_violations": self.stability_violations,
            "causal_violations": self.causal_violations,
            "duplicate_deliveries": self.duplicate_deliveries,
            "missing_deliveries": self.missing_deliveries,
            "purity_violations": self.purity_violations,
            "broadcasts": self.broadcasts,
            "op_broadcasts": self.op_broadcasts,
            "dropped_ops": self.dropped_ops,
            "stable_fraction": round(self.stable_fraction, 6),
            "all_tagged_empty": self.all_tagged_empty,
            "bytes_on_wire": self.bytes_on_wire,
            "transmissions": self.transmissions,
            "final_results": {n: {q: canonical(v) for q, v in r.items()}
                              for n, r in self.final_results.items()},
        }

    def to_json(self) -> str:
        return json.dumps(self.summary(), sort_keys=True)

    def trace_lines(self) -> list[str]:
        lines = []
        for step, kind, node, payload in self.events:
            ev: dict[str, Any] = {"step": step, "event": kind, "node": node}
            if kind in ("send", "deliver"):
                ev["msg"] = _wire(payload)
            elif kind == "stable":
                ev["stamp"] = {"vv": payload.vv.as_dict(), "src": payload.src}
            elif kind == "query":
                ev["results"] = {q: canonical(v) for q, v in payload.items()}
            lines.append(json.dumps(ev, sort_keys=True, separators=(",", ":")))
        return lines

    def metrics_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["step", "node", "polog_tagged", "polog_stable", "stable_fraction"])
        for row in self.metrics:
            w.writerow([row[0], row[1], row[2], row[3], f"{row[4]:.6f}"])
        return buf.getvalue()

    @property
    def polog_size_over_time(self) -> list[tuple[int, NodeId, int]]:
        return [(s, n, t + st) for s, n, t, st, _ in self.metrics]

    @property
    def stable_fraction_over_time(self) -> list[tuple[int, NodeId, float]]:
        return [(s, n, f) for s, n, _, _, f in self.metrics]


def _wire(d: Delivery) -> dict:
    return {"origin": d.stamp.src, "vv": d.stamp.vv.as_dict(),
            "op": None if d.op is None else d.op.to_json()}


_WIRE_KEYS = ["origin", "vv", "op"]


class Simulation:
    def __init__(self, sc: Scenario):
        self.sc = sc
        self.dt = get_datatype(sc.datatype, mutate=sc.mutate or None)
        self.report = TraceReport(sc)
        self.channel = Channel(sc)
        self.nodes = {n: _Node(n, sc, self.dt) for n in sc.nodes}
        self.plan = list(plan_ops(sc))
        for s in self.plan:
            arity = self.dt.updates.get(s.op.name)
            if arity is None or len(s.op.args) != arity:
                raise ScenarioError(f"{sc.datatype} does not support {s.op!r}")
        self.horizon = self.plan[-1].step if self.plan else 0
        self.crashes: dict[int, list[Crash]] = {}
        self.recoveries: dict[int, list[NodeId]] = {}
        self.snapshot_every: dict[NodeId, int] = {}
        for c in sc.crashes:
            self.crashes.setdefault(c.step, []).append(c)
            every = self.snapshot_every.get(c.node, c.snapshot_every)
            self.snapshot_every[c.node] = min(every, c.snapshot_every)
        for n in self.snapshot_every:
            self.nodes[n].take_snapshot()
        self.deferred: dict[NodeId, list[Operation]] = {n: [] for n in sc.nodes}
        self.all_keys: set = set()
        self.resend_rng = random.Random(f"{sc.seed}/sched")

    # -- per-event handlers ---------------------------------------------------

    def _delivered(self, node: _Node, d: Delivery, step: int) -> None:
        rep = self.report
        stamp = d.stamp
        counts = stamp.vv.counts
        o = node.idx[stamp.src]
        key = (stamp.src, counts[o])
        if key in node.delivered:
            rep.duplicate_deliveries += 1
        node.delivered.add(key)
        ac = node.audit_counts
        if counts[o] != ac[o] + 1 or any(c > ac[k] for k, c in enumerate(counts) if k != o):
            rep.causal_violations += 1
        ac[o] = max(ac[o], counts[o])
        if stamp in node.stable_seen or any(c < s for c, s in zip(counts, node.stable_join)):
            rep.stability_violations += 1
        node.replica.deliver(d)
        node.schedule.append(d)
        rep.events.append((step, "deliver", node.name, d))
        if d.op is not None and stamp.src != node.name:
            node.dirty = True

    def _broadcast(self, node: _Node, op: Optional[Operation], step: int) -> None:
        rep = self.report
        if op is not None:
            op = prepare(op, node.replica.state)
        msg, d = node.tcsb.tcbcast(op)
        wire = msg.encode()
        if op is not None:
            obj = json.loads(wire)
            if list(obj) != _WIRE_KEYS or \
                    json.dumps(obj["op"], separators=(",", ":")) != op.encode():
                rep.purity_violations += 1
            rep.op_broadcasts += 1
        rep.broadcasts += 1
        self.all_keys.add(msg.key)
        rep.events.append((step, "send", node.name, d))
        self._delivered(node, d, step)
        node.dirty = False
        self.channel.send(msg, step, len(wire))

    def _stabilize(self, node: _Node, step: int) -> None:
        for t in node.tcsb.drain_stable():
            node.replica.stable(t)
            node.schedule.append(t)
            node.stable_seen.add(t)
            node.stable_join = list(map(max, node.stable_join, t.vv.counts))
            self.report.events.append((step, "stable", node.name, t))

    # -- main loop ------------------------------------------------------------

    def run(self) -> TraceReport:
        sc, rep, nodes = self.sc, self.report, self.nodes
        plan, pi = self.plan, 0
        cfg = sc.channel
        step = 0
        while True:
            touched: set[NodeId] = set()
            broadcasters: set[NodeId] = set()
            for c in self.crashes.pop(step, ()):
                node = nodes[c.node]
                if not node.up:
                    continue
                node.crash()
                rep.events.append((step, "crash", c.node, None))
                if c.recover_after is None:
                    node.dead = True
                    rep.dropped_ops += len(self.deferred[c.node])
                    self.deferred[c.node].clear()
                else:
                    self.recoveries.setdefault(step + c.recover_after, []).append(c.node)
            for name in self.recoveries.pop(step, ()):
                node = nodes[name]
                node.restore()
                rep.events.append((step, "recover", name, None))
                self.channel.resend_all(name, step, self.resend_rng)
                touched.add(name)
                for op in self.deferred[name]:
                    self._broadcast(node, op, step)
                    broadcasters.add(name)
                self.deferred[name].clear()
            while pi < len(plan) and plan[pi].step <= step:
                s = plan[pi]
                pi += 1
                node = nodes[s.node]
                if node.up:
                    self._broadcast(node, s.op, step)
                    touched.add(s.node)
                    broadcasters.add(s.node)
                elif node.dead:
                    rep.dropped_ops += 1
                else:
                    self.deferred[s.node].append(s.op)
            for dest, msg in self.channel.due(step):
                node = nodes[dest]
                if not node.up:
                    continue
                for d in node.tcsb.on_receive(msg):
                    self._delivered(node, d, step)
                touched.add(dest)
            idle = pi >= len(plan) and not any(self.deferred.values())
            if cfg.heartbeats and idle and step >= self.horizon and step % cfg.heartbeat_every == 0:
                for name, node in nodes.items():
                    if node.up and node.dirty:
                        self._broadcast(node, None, step)
                        touched.add(name)
                        broadcasters.add(name)
            for name in sorted(touched):
                node = nodes[name]
                self._stabilize(node, step)
                every = self.snapshot_every.get(name)
                if every is not None and (name in broadcasters or step % every == 0):
                    node.take_snapshot()
                tagged, stable = node.replica.log_sizes()
                t = node.tcsb
                frac = t.reported_stable / t.delivered_ops if t.delivered_ops else 1.0
                rep.metrics.append((step, name, tagged, stable, frac))
            if idle and not self.recoveries and self._quiet():
                rep.quiescent = True
                break
            step += 1
            if step >= sc.max_steps:
                break
        rep.steps = step
        self._finish(step)
        return rep

    def _quiet(self) -> bool:
        if len(self.channel):
            return False
        for node in self.nodes.values():
            if not node.up:
                continue
            if node.tcsb.pending:
                return False
            if self.sc.channel.heartbeats and node.dirty:
                return False
        return True

    # -- final checks ---------------------------------------------------------

    def _finish(self, step: int) -> None:
        sc, rep, dt = self.sc, self.report, self.dt
        live = {n: node for n, node in self.nodes.items() if node.up}
        queries = query_ops(dt)
        for n, node in live.items():
            res = node.replica.results()
            rep.final_results[n] = res
            rep.final_logs[n] = None if is_commutative(dt) else node.replica.state
            rep.delivered_ops[n] = frozenset(
                (d.stamp.src, d.stamp.seq) for d in node.schedule
                if isinstance(d, Delivery) and d.op is not None)
            rep.events.append((step, "query", n, res))
            if rep.quiescent:
                rep.missing_deliveries += len(self.all_keys - node.delivered)
        rep.bytes_on_wire = self.channel.bytes_on_wire
        rep.transmissions = self.channel.transmissions
        delivered = sum(node.tcsb.delivered_ops for node in live.values())
        stable = sum(node.tcsb.reported_stable for node in live.values())
        rep.stable_fraction = stable / delivered if delivered else 1.0
        rep.all_tagged_empty = all(
            log is None or not log.tagged for log in rep.final_logs.values())
        if rep.quiescent and live:
            try:
                rep.converged = check_convergence(
                    {n: node.replica for n, node in live.items()}, queries,
                    {n: node.tcsb.clock for n, node in live.items()})
            except NotQuiescent:
                rep.converged = False
        if sc.oracle == "off":
            return
        rep.oracle_match = True
        for n, node in live.items():
            found = replay_schedule(dt, n, node.schedule, every=sc.oracle == "every")
            if found:
                rep.oracle_match = False
                rep.mismatch = found
                return


def run(sc: Scenario) -> TraceReport:
    """Simulate ``sc``; the result is a pure function of the scenario."""
    return Simulation(sc).run()


def oracle_run(sc: Scenario) -> bool:
    """True iff compact and reference answers agree at every delivery, everywhere."""
    if sc.oracle != "every":
        sc = replace(sc, oracle="every")
    return bool(run(sc).oracle_match)


def crash_twins(seed: int, datatype: str, n_nodes: int = 3, n_ops: int = 60,
                channel=None, snapshot_every: int = 1) -> tuple[Scenario, Scenario]:
    """A scenario with one mid-run crash and recovery, and its crash-free twin.

    Both share one scripted workload.  The crashing node issues nothing from
    its crash step on, so every operation is issued in the same causal
    context in both runs and their final states must agree.
    """
    rng = random.Random(f"{seed}/crash")
    nodes = tuple(f"n{i}" for i in range(n_nodes))
    kw = {} if channel is None else {"channel": channel}
    base = Scenario(nodes=nodes, datatype=datatype, ops=OpPlan(n_ops), seed=seed,
                    oracle="final", **kw)
    victim = rng.choice(nodes)
    at = rng.randint(max(n_ops // 3, 1), max(2 * n_ops // 3, 1))
    script = tuple(s for s in plan_ops(base) if s.node != victim or s.step < at)
    twin = replace(base, ops=script)
    crash = Crash(victim, at, recover_after=rng.randint(3, 15), snapshot_every=snapshot_every)
    return replace(twin, crashes=(crash,)), twin
