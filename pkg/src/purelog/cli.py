"""Command-line interface: ``run``, ``exhaust`` and ``demo``.

Exit codes: 0 success, 1 property failure, 2 usage or configuration error.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from collections.abc import Sequence
from pathlib import Path
from typing import Optional

from purelog.datatypes import DATATYPES, POLOG_TYPES
from purelog.kernel import Delivery, Operation
from purelog.sim.checks import canonical
from purelog.sim.histories import MAX_NODES, MAX_OPS, BudgetExceeded, exhaust
from purelog.sim.runner import TraceReport, run
from purelog.sim.scenario import (
    ChannelConfig,
    OpPlan,
    Scenario,
    ScenarioError,
    ScriptedOp,
    load_scenario,
)

EXIT_OK, EXIT_FAIL, EXIT_USAGE = 0, 1, 2


class UsageError(Exception):
    pass


def _seed(value: Optional[int]) -> Optional[int]:
    if value is not None:
        return value
    env = os.environ.get("PURELOG_SEED")
    if env is None or env == "":
        return None
    try:
        return int(env)
    except ValueError:
        raise UsageError(f"PURELOG_SEED must be an integer, got {env!r}") from None


def _write(path: Optional[str], text: str) -> None:
    if path is None:
        return
    try:
        Path(path).write_text(text)
    except OSError as exc:
        raise UsageError(f"cannot write {path}: {exc.strerror}") from exc


def _trace_text(report: TraceReport) -> str:
    lines = report.trace_lines()
    return "\n".join(lines) + "\n" if lines else ""


def _scenario_for_run(args) -> Scenario:
    generated = [args.datatype, args.nodes, args.ops]
    seed = _seed(args.seed)
    if args.scenario is not None:
        if any(v is not None for v in generated):
            raise UsageError("give either --scenario or --datatype/--nodes/--ops, not both")
        sc = load_scenario(args.scenario)
        changes = {}
        if seed is not None:
            changes["seed"] = seed
        if args.heartbeats is not None:
            changes["channel"] = ChannelConfig(**{**vars(sc.channel), "heartbeats": args.heartbeats})
        if args.mutate:
            changes["mutate"] = True
        return _replace(sc, changes)
    if any(v is None for v in generated):
        raise UsageError("run needs --scenario, or all of --datatype, --nodes and --ops")
    if args.nodes < 1 or args.ops < 0:
        raise UsageError("--nodes must be >= 1 and --ops >= 0")
    heartbeats = True if args.heartbeats is None else args.heartbeats
    return Scenario(
        nodes=tuple(f"n{i}" for i in range(args.nodes)),
        datatype=args.datatype,
        ops=OpPlan(args.ops),
        channel=ChannelConfig(heartbeats=heartbeats),
        seed=seed or 0,
        mutate=args.mutate,
    )


def _replace(sc: Scenario, changes: dict) -> Scenario:
    from dataclasses import replace
    return replace(sc, **changes) if changes else sc


def cmd_run(args) -> int:
    sc = _scenario_for_run(args)
    report = run(sc)
    _write(args.out_trace, _trace_text(report))
    _write(args.out_metrics, report.metrics_csv())
    if args.format == "csv":
        sys.stdout.write(report.metrics_csv())
    else:
        print(json.dumps(report.summary(), sort_keys=True, indent=2))
    if not report.ok:
        reasons = []
        if not report.quiescent:
            reasons.append("not quiescent at max_steps")
        if not report.converged:
            reasons.append("replicas did not converge")
        if report.oracle_match is False:
            reasons.append(f"oracle mismatch: {report.mismatch}")
        if report.stability_violations:
            reasons.append(f"{report.stability_violations} stability violations")
        if not report.exactly_once:
            reasons.append("exactly-once delivery violated")
        if report.causal_violations:
            reasons.append(f"{report.causal_violations} causal-order violations")
        if report.purity_violations:
            reasons.append(f"{report.purity_violations} impure broadcasts")
        print("FAIL: " + "; ".join(reasons), file=sys.stderr)
        return EXIT_FAIL
    return EXIT_OK


def cmd_exhaust(args) -> int:
    n_ops = 4 if args.ops is None else args.ops
    n_nodes = 2 if args.nodes is None else args.nodes
    if not 1 <= n_ops <= MAX_OPS or not 1 <= n_nodes <= MAX_NODES:
        raise BudgetExceeded(f"exhaustive search limited to 1..{MAX_OPS} ops and "
                             f"1..{MAX_NODES} nodes (got ops={n_ops}, nodes={n_nodes})")
    names = [args.datatype] if args.datatype else list(POLOG_TYPES)
    failed = False
    results = []
    for name in names:
        res = exhaust(name, n_ops, n_nodes, mutate=args.mutate or None)
        results.append(res)
        if args.format == "json":
            continue
        status = "ok" if res.ok else "MISMATCH"
        print(f"{name}: checked {res.checked} histories (<= {n_ops} ops, {n_nodes} nodes): "
              f"{res.mismatches} mismatches [{status}]")
        if res.first:
            history, mismatch = res.first
            print(f"  first counterexample: {history.describe()}")
            print(f"  {mismatch}")
    for res in results:
        failed |= not res.ok
    if args.format == "json":
        print(json.dumps([{
            "datatype": r.datatype, "ops": n_ops, "nodes": n_nodes,
            "checked": r.checked, "mismatches": r.mismatches,
            "counterexample": None if r.first is None else r.first[0].describe(),
        } for r in results], sort_keys=True, indent=2))
    return EXIT_FAIL if failed else EXIT_OK


def demo_scenario(seed: int) -> Scenario:
    """Three AW-Set replicas with a concurrent add/remove and a late clear."""
    script = (
        ScriptedOp("A", Operation("add", ("x",)), 0),
        ScriptedOp("B", Operation("rmv", ("x",)), 0),
        ScriptedOp("C", Operation("add", ("y",)), 2),
        ScriptedOp("A", Operation("add", ("z",)), 4),
        ScriptedOp("B", Operation("rmv", ("y",)), 9),
        ScriptedOp("C", Operation("add", ("w",)), 10),
    )
    return Scenario(nodes=("A", "B", "C"), datatype="awset", ops=script,
                    channel=ChannelConfig(dup_factor=2, loss_rate=0.1), seed=seed)


def _elems(value) -> str:
    return "{" + ", ".join(str(v) for v in canonical(value)) + "}"


def narrate(report: TraceReport) -> list[str]:
    out = [f"AW-Set demo: nodes {', '.join(report.scenario.nodes)}, seed {report.scenario.seed}"]
    for step, kind, node, payload in report.events:
        head = f"[{step:3d}] {node}"
        if kind == "send":
            what = "heartbeat" if payload.op is None else repr(payload.op)
            out.append(f"{head} broadcasts {what} stamped {payload.stamp.vv.text()}")
        elif kind == "deliver" and isinstance(payload, Delivery):
            if payload.stamp.src == node:
                continue
            what = "heartbeat" if payload.op is None else repr(payload.op)
            out.append(f"{head} delivers {what} from {payload.stamp.src}")
        elif kind == "stable":
            out.append(f"{head} sees {payload.src}:{payload.seq} become causally stable")
        elif kind in ("crash", "recover"):
            out.append(f"{head} {kind}es" if kind == "crash" else f"{head} recovers")
        elif kind == "query":
            out.append(f"{head} final elems = {_elems(payload['elems'])}")
    verdict = "converged" if report.converged else "DID NOT converge"
    out.append(f"replicas {verdict}; tagged entries left: "
               f"{sum(len(log.tagged) for log in report.final_logs.values())}; "
               f"oracle {'agrees' if report.oracle_match else 'disagrees'}")
    return out


def cmd_demo(args) -> int:
    seed = _seed(args.seed)
    report = run(demo_scenario(seed or 0))
    _write(args.out_trace, _trace_text(report))
    _write(args.out_metrics, report.metrics_csv())
    if args.format == "json":
        sys.stdout.write(_trace_text(report))
    elif args.format == "csv":
        sys.stdout.write(report.metrics_csv())
    else:
        print("\n".join(narrate(report)))
    return EXIT_OK if report.ok else EXIT_FAIL


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="purelog", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="subcommand", required=True)

    def common(p, *, datatypes):
        p.add_argument("--datatype", choices=datatypes)
        p.add_argument("--nodes", type=int)
        p.add_argument("--ops", type=int)
        p.add_argument("--seed", type=int, help="defaults to $PURELOG_SEED, then 0")
        p.add_argument("--mutate", action="store_true",
                       help="inject a broken causality comparator (oracle sanity check)")
        p.add_argument("--format", choices=("json", "csv"))

    p_run = sub.add_parser("run", help="simulate one scenario")
    common(p_run, datatypes=DATATYPES)
    p_run.add_argument("--scenario", help="scenario JSON file")
    p_run.add_argument("--heartbeats", action=argparse.BooleanOptionalAction, default=None)
    p_run.add_argument("--out-trace", help="write the event trace as JSON-lines")
    p_run.add_argument("--out-metrics", help="write per-step metrics as CSV")
    p_run.set_defaults(func=cmd_run)

    p_ex = sub.add_parser("exhaust", help="check every small causal history")
    common(p_ex, datatypes=DATATYPES)
    p_ex.set_defaults(func=cmd_exhaust)

    p_demo = sub.add_parser("demo", help="narrate a canned 3-node AW-Set run")
    p_demo.add_argument("--seed", type=int)
    p_demo.add_argument("--format", choices=("json", "csv"))
    p_demo.add_argument("--out-trace")
    p_demo.add_argument("--out-metrics")
    p_demo.set_defaults(func=cmd_demo)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code not in (0, None) else EXIT_OK
    try:
        return args.func(args)
    except (UsageError, ScenarioError, BudgetExceeded) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
