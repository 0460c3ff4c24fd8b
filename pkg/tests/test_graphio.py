from __future__ import annotations

import json
import random
import re
from pathlib import Path

import pytest

from dualarm_dag.graph import TaskGraph
from dualarm_dag.graphio import (
    GraphDocument,
    GraphParseError,
    NoPayloadError,
    export_dot,
    extract_graph_payload,
    parse_task_graph,
    parse_with_diagnostics,
    serialize_task_graph,
)
from helpers import complete, minimal_pair, task
from randgraphs import random_document

GOLDEN = Path(__file__).parent / "golden"


def _doc(graph: TaskGraph) -> GraphDocument:
    return GraphDocument("demo", "put the apple on the plate", graph)


def _raw(nodes, edges, **top) -> str:
    body = {"version": 1, "task": "t", "instruction": "i", "nodes": nodes, "edges": edges}
    body.update(top)
    return json.dumps(body, indent=2)


def test_minimal_pair_round_trips():
    doc = _doc(minimal_pair())
    assert parse_task_graph(serialize_task_graph(doc)) == doc


def test_serialize_is_deterministic_and_canonical():
    doc = _doc(minimal_pair())
    text = serialize_task_graph(doc)
    assert text == serialize_task_graph(doc)
    assert text.endswith("}\n")
    shuffled = TaskGraph(list(reversed(list(minimal_pair().nodes.values()))), reversed(minimal_pair().edges))
    assert serialize_task_graph(_doc(shuffled)) == text


def test_task1_golden():
    doc, _ = task(1)
    assert serialize_task_graph(doc) == (GOLDEN / "task1.taskgraph.json").read_text(encoding="utf-8")


def test_fixtures_round_trip():
    for k in range(1, 6):
        doc, _ = task(k)
        assert parse_task_graph(serialize_task_graph(doc)) == doc


def test_unknown_task_type_is_located():
    raw = _raw(
        [
            {"id": "g", "type": "Grasp", "desc": "", "arms": 1, "object": "cup"},
            {"id": "complete", "type": "Complete", "desc": "", "arms": 1, "object": ""},
        ],
        [["g", "complete"]],
    )
    doc, diags = parse_with_diagnostics(raw)
    assert doc is None
    (d,) = [d for d in diags if d.severity == "error"]
    assert d.code == "UNKNOWN_TASK_TYPE"
    line = raw.splitlines()[d.line - 1]
    assert '"Grasp"' in line[d.column - 1 :]
    for name in ("Occupy", "ToolUse", "Release", "Operate", "Complete"):
        assert name in d.message


def test_distinct_codes_for_distinct_faults():
    complete_node = {"id": "complete", "type": "Complete", "arms": 1, "object": ""}
    cases = {
        "SYNTAX_ERROR": '{"version": 1,,}',
        "DUPLICATE_NODE_ID": _raw([complete_node, complete_node], []),
        "UNDECLARED_EDGE_ENDPOINT": _raw([complete_node], [["ghost", "complete"]]),
        "UNSUPPORTED_VERSION": _raw([complete_node], [], version=2),
        "SCHEMA_ERROR": _raw("nope", []),
    }
    for code, raw in cases.items():
        doc, diags = parse_with_diagnostics(raw)
        assert doc is None, code
        assert code in {d.code for d in diags}, (code, diags)
        with pytest.raises(GraphParseError):
            parse_task_graph(raw)


def test_duplicate_key_and_invalid_utf8():
    _, diags = parse_with_diagnostics('{"version": 1, "version": 1, "task": "", "instruction": "", "nodes": [], "edges": []}')
    assert "DUPLICATE_KEY" in {d.code for d in diags}
    _, diags = parse_with_diagnostics(b'{"task": "\xff"}')
    assert [d.code for d in diags] == ["INVALID_UTF8"]


def test_warnings_do_not_block_parse():
    node = {"id": "complete", "type": "Complete", "arms": 1, "object": "", "colour": "red"}
    doc, diags = parse_with_diagnostics(_raw([node], []))
    assert doc is not None
    assert [(d.code, d.severity) for d in diags] == [("UNKNOWN_KEY", "warning")]


def test_errors_carry_location_inside_input():
    raw = _raw([{"id": "x", "type": "Complete", "arms": "two"}], [])
    _, diags = parse_with_diagnostics(raw)
    lines = raw.splitlines()
    for d in diags:
        assert 1 <= d.line <= len(lines)
        assert 1 <= d.column <= len(lines[d.line - 1]) + 1


def test_parser_is_total_on_random_bytes():
    rng = random.Random(5)
    seeds = [serialize_task_graph(_doc(minimal_pair())).encode()]
    for i in range(10_000):
        if i % 2:
            data = bytes(rng.randrange(256) for _ in range(rng.randint(0, 64)))
        else:
            base = bytearray(rng.choice(seeds))
            for _ in range(rng.randint(1, 6)):
                base[rng.randrange(len(base))] = rng.randrange(256)
            data = bytes(base)
        doc, diags = parse_with_diagnostics(data)
        assert doc is not None or any(d.severity == "error" for d in diags)
        assert parse_with_diagnostics(data) == (doc, diags)


def test_round_trip_on_random_documents():
    rng = random.Random(8)
    for _ in range(1000):
        doc = random_document(rng)
        text = serialize_task_graph(doc)
        assert parse_task_graph(text) == doc
        assert serialize_task_graph(parse_task_graph(text)) == text


def test_payload_from_fenced_block():
    raw = 'Here is the plan:\n```json\n{"a": 1}\n```\nHope it helps.'
    assert extract_graph_payload(raw) == '{"a": 1}'


def test_payload_last_fenced_block_wins():
    raw = '```json\n{"a": 1}\n```\nOops, corrected:\n```json\n{"a": 2}\n```'
    assert extract_graph_payload(raw) == '{"a": 2}'


def test_payload_from_bare_braces():
    assert extract_graph_payload('sure! {"a": {"b": "}"}} done') == '{"a": {"b": "}"}}'


def test_pure_prose_has_no_payload():
    with pytest.raises(NoPayloadError) as info:
        extract_graph_payload("I cannot produce a graph for this.")
    assert info.value.code == "NO_PAYLOAD"


def _dot_counts(dot: str) -> tuple[int, int]:
    nodes = len(re.findall(r"^\s+\"[^\"]*\" \[", dot, re.M))
    edges = len(re.findall(r"->", dot))
    return nodes, edges


def test_dot_minimal_pair():
    dot = export_dot(minimal_pair())
    assert dot.startswith("digraph")
    assert _dot_counts(dot) == (3, 2)
    assert "shape=box" in dot and "shape=ellipse" in dot and "shape=doublecircle" in dot


def test_dot_task2_counts_all_nodes_including_terminal():
    doc, _ = task(2)
    # eleven sub-tasks plus the Complete node
    assert _dot_counts(export_dot(doc.graph)) == (12, len(doc.graph.edges))


def test_dot_complete_only_and_deterministic():
    g = TaskGraph([complete()])
    assert _dot_counts(export_dot(g)) == (1, 0)
    doc, _ = task(4)
    assert export_dot(doc.graph) == export_dot(doc.graph)
