from __future__ import annotations

import json

import pytest

from purelog.cli import main


def call(capsys, *argv):
    code = main(list(argv))
    out, err = capsys.readouterr()
    return code, out, err


def test_run_generated(capsys, tmp_path):
    trace, metrics = tmp_path / "t.jsonl", tmp_path / "m.csv"
    code, out, _ = call(capsys, "run", "--datatype", "awset", "--nodes", "3", "--ops", "50",
                        "--seed", "7", "--out-trace", str(trace), "--out-metrics", str(metrics))
    assert code == 0
    summary = json.loads(out)
    assert summary["converged"] and summary["oracle_match"] and summary["seed"] == 7
    lines = trace.read_text().splitlines()
    assert all(json.loads(line)["event"] for line in lines)
    assert metrics.read_text().startswith("step,node,polog_tagged,polog_stable,stable_fraction\n")


def test_run_is_byte_identical_for_identical_flags(capsys, tmp_path):
    outs = []
    for k in range(2):
        trace = tmp_path / f"t{k}.jsonl"
        code, out, _ = call(capsys, "run", "--datatype", "mvreg", "--nodes", "3", "--ops", "30",
                            "--seed", "3", "--out-trace", str(trace))
        outs.append((code, out, trace.read_bytes()))
    assert outs[0] == outs[1]


def test_seed_falls_back_to_environment(capsys, monkeypatch):
    monkeypatch.setenv("PURELOG_SEED", "42")
    code, out, _ = call(capsys, "run", "--datatype", "gset", "--nodes", "2", "--ops", "5")
    assert code == 0 and json.loads(out)["seed"] == 42
    monkeypatch.setenv("PURELOG_SEED", "nope")
    code, _, err = call(capsys, "run", "--datatype", "gset", "--nodes", "2", "--ops", "5")
    assert code == 2 and "PURELOG_SEED" in err


def test_run_scenario_file(capsys, tmp_path):
    path = tmp_path / "s.json"
    path.write_text(json.dumps({
        "nodes": ["A", "B"], "datatype": "ewflag",
        "ops": [{"node": "A", "op": {"name": "enable"}, "step": 0},
                {"node": "B", "op": {"name": "disable"}, "step": 0}],
    }))
    code, out, _ = call(capsys, "run", "--scenario", str(path), "--format", "csv")
    assert code == 0 and out.startswith("step,node,")
    code, out, _ = call(capsys, "run", "--scenario", str(path), "--no-heartbeats")
    assert code == 0 and json.loads(out)["stable_fraction"] < 1


@pytest.mark.parametrize("argv", [
    ["run", "--scenario", "missing.json"],
    ["run"],
    ["run", "--datatype", "awset", "--nodes", "2"],
    ["run", "--scenario", "x.json", "--datatype", "awset"],
    ["run", "--datatype", "nope", "--nodes", "2", "--ops", "3"],
    ["exhaust", "--ops", "9"],
    ["exhaust", "--nodes", "4", "--ops", "2"],
    ["frobnicate"],
])
def test_usage_errors_exit_2(capsys, argv):
    code, _, _ = call(capsys, *argv)
    assert code == 2


def test_bad_scenario_file_exits_2(capsys, tmp_path):
    path = tmp_path / "bad.json"
    path.write_text('{"nodes": ["A"], "datatype": "awset", "ops": {"count": 1},'
                    ' "channel": {"loss_rate": 1.5}}')
    code, _, err = call(capsys, "run", "--scenario", str(path))
    assert code == 2 and "loss_rate" in err


def test_mutation_makes_run_fail(capsys):
    code, _, err = call(capsys, "run", "--datatype", "awset", "--nodes", "3", "--ops", "50",
                        "--seed", "7", "--mutate")
    assert code == 1 and "oracle mismatch" in err


def test_exhaust(capsys):
    code, out, _ = call(capsys, "exhaust", "--datatype", "mvreg", "--ops", "3", "--nodes", "3")
    assert code == 0 and "checked 2871 histories" in out
    code, out, _ = call(capsys, "exhaust", "--datatype", "awset", "--ops", "2", "--format", "json")
    assert code == 0 and json.loads(out)[0]["mismatches"] == 0


def test_exhaust_prints_the_first_counterexample(capsys):
    code, out, _ = call(capsys, "exhaust", "--datatype", "rwset", "--ops", "3", "--nodes", "2")
    assert code == 1
    assert "first counterexample" in out and "compact=" in out


def test_demo(capsys):
    code, out, _ = call(capsys, "demo", "--seed", "7")
    assert code == 0
    assert "final elems" in out and "causally stable" in out and "converged" in out
    assert call(capsys, "demo", "--seed", "7")[1] == out
    code, out, _ = call(capsys, "demo", "--format", "json")
    events = [json.loads(line) for line in out.splitlines()]
    assert code == 0 and {e["event"] for e in events} >= {"send", "deliver", "stable", "query"}
