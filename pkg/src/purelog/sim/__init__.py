"""Deterministic simulation, exhaustive history checking and oracles."""

from purelog.sim.checks import Mismatch, NotQuiescent, canonical, check_convergence, replay_schedule
from purelog.sim.histories import (
    BudgetExceeded,
    ExhaustResult,
    History,
    enumerate_histories,
    exhaust,
)
from purelog.sim.runner import Channel, TraceReport, crash_twins, oracle_run, plan_ops, run
from purelog.sim.scenario import (
    ChannelConfig,
    Crash,
    OpPlan,
    Scenario,
    ScenarioError,
    ScriptedOp,
    load_scenario,
    scenario_from_json,
)

__all__ = [
    "BudgetExceeded", "Channel", "ChannelConfig", "Crash", "ExhaustResult", "History",
    "Mismatch", "NotQuiescent", "OpPlan", "Scenario", "ScenarioError", "ScriptedOp",
    "TraceReport", "canonical", "check_convergence", "crash_twins", "enumerate_histories",
    "exhaust", "load_scenario", "oracle_run", "plan_ops", "replay_schedule", "run",
    "scenario_from_json",
]
