from __future__ import annotations

import json
import math
import subprocess
import sys
from dataclasses import replace
from pathlib import Path

import pytest

from dualarm_dag.bench import BENCHMARK_TASKS, FixtureInvalidError, run_benchmark
from dualarm_dag.cli import main
from dualarm_dag.config import ConfigError, config_from_mapping, load_config
from dualarm_dag.graph import TaskType
from dualarm_dag.graphio import serialize_task_graph
from dualarm_dag.planner import PlannerConfig, run_inference
from dualarm_dag.simulate import DEFAULT_DURATIONS_S, parse_duration_overrides, simulate_timeline
from helpers import minimal_pair, task

FIXTURES = Path(BENCHMARK_TASKS[0].graph_path).parent


def test_default_benchmark_reproduces_stage_rows():
    report = run_benchmark()
    assert [t.dual_stages for t in report.tasks] == [4, 7, 4, 7, 4]
    assert [t.single_stages for t in report.tasks] == [8, 11, 6, 12, 7]
    assert [t.oracle_stages for t in report.tasks] == [4, 7, 4, 7, 4]
    assert math.isclose(report.stage_efficiency_pct, 170.7, abs_tol=0.1)
    assert report.ok


def test_no_pairing_geometry_degrades_to_single_arm():
    report = run_benchmark(PlannerConfig(d_reachable=0.0))
    assert [t.dual_stages for t in report.tasks] == [t.single_stages for t in report.tasks]
    assert report.stage_efficiency_pct == 100.0
    assert not report.ok


def test_fixture_sub_task_totals():
    counts = []
    for k in range(1, 6):
        doc, _ = task(k)
        counts.append(sum(1 for n in doc.graph.nodes.values() if n.task_type is not TaskType.COMPLETE))
    assert counts == [8, 11, 6, 12, 7]
    assert sum(counts) == 44


def test_fixture_instructions_match_task_list():
    for bt in BENCHMARK_TASKS:
        doc, _ = bt.load()
        assert doc.instruction == bt.instruction
        assert doc.task_name == bt.name


def test_report_is_reproducible():
    assert run_benchmark().to_json() == run_benchmark().to_json()
    assert run_benchmark().to_table() == run_benchmark().to_table()


def test_invalid_fixture_is_reported(tmp_path):
    bad = tmp_path / "bad.taskgraph.json"
    bad.write_text(
        (FIXTURES / "task3.taskgraph.json").read_text().replace('["grasp-blue", "place-blue"],', ""),
        encoding="utf-8",
    )
    broken = replace(BENCHMARK_TASKS[2], graph_path=bad)
    with pytest.raises(FixtureInvalidError) as info:
        run_benchmark(tasks=(broken,))
    assert info.value.code == "FIXTURE_INVALID"
    assert not info.value.report.ok


def test_config_loading(tmp_path):
    path = tmp_path / "cfg.json"
    path.write_text(json.dumps({
        "planner": {"d_reachable_m": 0.5, "allow_idle_arm": False},
        "provider.url": "http://localhost:1/v1",
        "provider.timeout_s": 5,
    }))
    cfg = load_config(path)
    assert cfg.planner.d_reachable == 0.5 and not cfg.planner.allow_idle_arm
    assert cfg.planner.d_across == 0.15
    assert cfg.provider.url == "http://localhost:1/v1" and cfg.provider.timeout_s == 5.0
    assert load_config(None).planner == PlannerConfig()
    with pytest.raises(ConfigError):
        config_from_mapping({"planner": {"speed": 1}})
    with pytest.raises(ConfigError):
        config_from_mapping({"colour": 1})


def test_cli_validate(tmp_path, capsys):
    assert main(["validate", str(FIXTURES / "task2.taskgraph.json")]) == 0
    bad = tmp_path / "bad.json"
    bad.write_text('{"version": 1}', encoding="utf-8")
    assert main(["validate", str(bad)]) == 1
    assert "SCHEMA_ERROR" in capsys.readouterr().err


def test_cli_validate_structural_error(tmp_path, capsys):
    doc, _ = task(3)
    text = serialize_task_graph(doc).replace('    ["grasp-green", "place-green"],\n', "")
    path = tmp_path / "t3.taskgraph.json"
    path.write_text(text, encoding="utf-8")
    assert main(["validate", str(path)]) == 1
    assert "UNMATCHED" in capsys.readouterr().err


def test_cli_plan_writes_trace_and_dot(tmp_path, capsys):
    trace, dot = tmp_path / "t.jsonl", tmp_path / "g.dot"
    rc = main([
        "plan", str(FIXTURES / "task2.taskgraph.json"), str(FIXTURES / "task2.world.json"),
        "--trace", str(trace), "--dot", str(dot),
    ])
    assert rc == 0
    out = capsys.readouterr().out
    assert "stage 1: left=open-drawer right=grasp-apple" in out
    assert "stages: 7" in out
    rows = [json.loads(line) for line in trace.read_text().splitlines()]
    assert rows[0]["left"]["node"] == "open-drawer"
    assert rows[-1]["terminal"] is True
    assert dot.read_text().startswith("digraph")


def test_cli_plan_infeasible_exit_code(tmp_path, capsys):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"planner": {"d_reachable_m": 0.0, "allow_idle_arm": False}}))
    rc = main([
        "plan", str(FIXTURES / "task3.taskgraph.json"), str(FIXTURES / "task3.world.json"), "--config", str(cfg),
    ])
    assert rc == 2
    assert "outcome: infeasible" in capsys.readouterr().out


def test_cli_bench(tmp_path, capsys):
    out = tmp_path / "report.json"
    assert main(["bench", "--json", str(out)]) == 0
    assert "stage efficiency: 170.7%" in capsys.readouterr().out
    assert json.loads(out.read_text())["ok"] is True
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"planner.d_reachable_m": 0.0}))
    assert main(["bench", "--config", str(cfg)]) == 2


def test_cli_gen_with_mock(tmp_path, capsys):
    env = tmp_path / "env.txt"
    env.write_text("apple on the left, plate on the right", encoding="utf-8")
    good = tmp_path / "good.txt"
    from dualarm_dag.graphio import GraphDocument

    good.write_text("```json\n" + serialize_task_graph(GraphDocument("a", "b", minimal_pair())) + "```")
    prose = tmp_path / "prose.txt"
    prose.write_text("no graph here")
    log = tmp_path / "log.jsonl"
    rc = main([
        "gen", "--instruction", "Put the apple on the plate.", "--env", str(env),
        "--mock-response", str(prose), "--mock-response", str(good), "--log", str(log),
    ])
    assert rc == 0
    assert '"grasp-apple"' in capsys.readouterr().out
    assert len(log.read_text().splitlines()) == 2
    rc = main(["gen", "--instruction", "x", "--env", str(env), "--mock-response", str(prose)])
    assert rc == 3
    rc = main(["gen", "--instruction", "x", "--env", str(env)])
    assert rc == 3


def test_module_entry_point():
    result = subprocess.run(
        [sys.executable, "-m", "dualarm_dag", "validate", str(FIXTURES / "task1.taskgraph.json")],
        capture_output=True, text=True, check=False,
    )
    assert result.returncode == 0
    assert "ok" in result.stdout


def test_timeline_uses_slowest_node_per_stage():
    doc, w = task(2)
    trace = run_inference(doc.graph, w)
    timeline = simulate_timeline(trace, doc.graph)
    assert len(timeline) == trace.stage_count == 7
    assert timeline[0].start_s == 0.0
    for prev, cur in zip(timeline, timeline[1:]):
        assert cur.start_s == prev.end_s
    for t in timeline:
        assert t.end_s - t.start_s == max(DEFAULT_DURATIONS_S[doc.graph[n].task_type] for n in t.node_ids)
    flat = {kind: 1.0 for kind in TaskType}
    assert simulate_timeline(trace, doc.graph, flat)[-1].end_s == 7.0


def test_duration_overrides():
    table = parse_duration_overrides(["Occupy=2.5", "ToolUse=0"])
    assert table[TaskType.OCCUPY] == 2.5 and table[TaskType.TOOL_USE] == 0.0
    assert table[TaskType.RELEASE] == DEFAULT_DURATIONS_S[TaskType.RELEASE]
    for bad in (["Grasp=1"], ["Occupy"], ["Occupy=-1"], ["Occupy=x"]):
        with pytest.raises(ValueError):
            parse_duration_overrides(bad)


def test_cli_simulate(capsys):
    graph, world = str(FIXTURES / "task2.taskgraph.json"), str(FIXTURES / "task2.world.json")
    assert main(["simulate", graph, world, "--duration", "ToolUse=1"]) == 0
    out = capsys.readouterr().out
    assert "stage 5:    17.0s -    18.0s  wipe-table" in out
    assert "duration: 26.0s" in out
    assert main(["simulate", graph, world, "--duration", "Grasp=1"]) == 1


def test_fixture_counts_hold_across_threshold_grid():
    for reach in (0.4, 0.6, 0.8, 1.0, 1.2):
        for across in (0.075, 0.11, 0.15, 0.19, 0.225):
            report = run_benchmark(PlannerConfig(d_reachable=reach, d_across=across))
            assert [t.dual_stages for t in report.tasks] == [4, 7, 4, 7, 4], (reach, across)
