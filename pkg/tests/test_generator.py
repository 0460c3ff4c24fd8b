from __future__ import annotations

import json
import random

import pytest

from dualarm_dag.generator import (
    GenerationFailure,
    GenerationRequest,
    HttpProvider,
    MockProvider,
    ProviderError,
    build_prompt,
    build_reflection_feedback,
    exchanges_to_jsonl,
    generate_graph,
    load_prompt_template,
)
from dualarm_dag.graph import TaskGraph, ValidationIssue, validate_graph
from dualarm_dag.graphio import GraphDocument, serialize_task_graph
from helpers import complete, minimal_pair, occupy, operate, task

REQUEST = GenerationRequest("Put the apple on the plate.", "objects: apple, plate; apple left of plate")


def _fenced(doc: GraphDocument, prose: str = "Here is the graph:") -> str:
    return f"{prose}\n```json\n{serialize_task_graph(doc)}```\n"


VALID = _fenced(GraphDocument("apple", "Put the apple on the plate.", minimal_pair()))
MISSING_RELEASE = _fenced(GraphDocument(
    "apple", "Put the apple on the plate.",
    TaskGraph([occupy("grasp-apple", "apple"), complete()], [("grasp-apple", "complete")]),
))
PROSE = "I would first pick up the apple and then put it on the plate."


def test_invalid_then_valid_succeeds_on_second_attempt():
    provider = MockProvider([MISSING_RELEASE, VALID])
    doc, log = generate_graph(REQUEST, provider)
    assert validate_graph(doc.graph).ok
    assert [e.accepted for e in log] == [False, True]
    assert [e.attempt_index for e in log] == [1, 2]
    assert "UNMATCHED_OCCUPY" in {d.code for d in log[0].diagnostics}
    assert log[1].diagnostics == ()
    # the second prompt carries the reflection on the first failure
    assert "UNMATCHED_OCCUPY [grasp-apple]" in log[1].prompt_text
    assert "UNMATCHED_OCCUPY" not in log[0].prompt_text


def test_valid_first_time_is_one_exchange():
    doc, log = generate_graph(REQUEST, MockProvider([VALID]))
    assert len(log) == 1 and log[0].accepted
    assert doc.graph == minimal_pair()


def test_prose_exhausts_attempts():
    provider = MockProvider([PROSE])
    with pytest.raises(GenerationFailure) as info:
        generate_graph(REQUEST, provider)
    log = info.value.exchanges
    assert len(log) == REQUEST.max_attempts == 3
    assert all(not e.accepted for e in log)
    assert all([d.code for d in e.diagnostics] == ["NO_PAYLOAD"] for e in log)
    assert len(provider.prompts) == 3


def test_custom_attempt_budget():
    req = GenerationRequest("x", "y", max_attempts=5)
    with pytest.raises(GenerationFailure) as info:
        generate_graph(req, MockProvider([PROSE]))
    assert len(info.value.exchanges) == 5
    with pytest.raises(ValueError):
        GenerationRequest("x", "y", max_attempts=0)


def test_syntax_errors_are_reflected():
    provider = MockProvider(['```json\n{"version": 1,, }\n```', VALID])
    _, log = generate_graph(REQUEST, provider)
    assert log[0].diagnostics[0].code == "SYNTAX_ERROR"
    assert "SYNTAX_ERROR" in log[1].prompt_text


def test_transport_failures_surface_distinctly():
    class Broken:
        def complete(self, prompt: str) -> str:
            raise ProviderError("connection refused")

    with pytest.raises(ProviderError):
        generate_graph(REQUEST, Broken())
    with pytest.raises(ProviderError):
        MockProvider([]).complete("x")


def test_http_provider_reports_unreachable_endpoint():
    provider = HttpProvider("http://127.0.0.1:9/v1/chat/completions", "m", timeout_s=0.5)
    with pytest.raises(ProviderError):
        provider.complete("hello")


def test_http_provider_requires_token_variable(monkeypatch):
    monkeypatch.delenv("DUALARM_TEST_TOKEN", raising=False)
    provider = HttpProvider("http://127.0.0.1:9/", "m", auth_env="DUALARM_TEST_TOKEN")
    with pytest.raises(ProviderError, match="DUALARM_TEST_TOKEN"):
        provider.complete("hello")


def test_feedback_for_single_unmatched_occupy():
    text = build_reflection_feedback([
        ValidationIssue("UNMATCHED_OCCUPY", ("grasp-mug",), "Occupy 'grasp-mug' has no downstream Release of 'mug'")
    ])
    assert "grasp-mug" in text
    assert "every Occupy must reach a matching Release" in text


def test_feedback_for_cycle_lists_ids():
    text = build_reflection_feedback([ValidationIssue("CYCLE", ("A", "B"), "cycle through A, B")])
    assert "[A, B]" in text


def test_feedback_golden_three_errors():
    g = TaskGraph(
        [occupy("grasp-mug", "mug"), operate("A", "a"), operate("B", "b"), operate("C", "c"), complete()],
        [("grasp-mug", "complete"), ("A", "B"), ("B", "A"), ("A", "complete")],
    )
    errors = validate_graph(g).errors
    expected = (
        "Your previous graph was rejected. Fix every problem below and reply with the full corrected graph.\n"
        "1. CYCLE [A, B]: cycle through A, B. Rule: dependencies must not form a cycle.\n"
        "2. DISCONNECTED [C]: 'C' has no path to the Complete node. Rule: every node must lead to the Complete node.\n"
        "3. UNMATCHED_OCCUPY [grasp-mug]: Occupy 'grasp-mug' has no downstream Release of 'mug'. "
        "Rule: every Occupy must reach a matching Release of the same object."
    )
    assert build_reflection_feedback(reversed(errors)) == expected
    with pytest.raises(ValueError):
        build_reflection_feedback([])


def test_prompt_template_fields():
    template = load_prompt_template()
    for word in ("Occupy", "ToolUse", "Release", "Operate", "Complete", '"edges"'):
        assert word in template
    prompt = build_prompt(REQUEST)
    assert REQUEST.instruction in prompt
    assert REQUEST.environment_description in prompt
    assert "{instruction}" not in prompt


def test_exchange_log_is_jsonl():
    _, log = generate_graph(REQUEST, MockProvider([MISSING_RELEASE, VALID]))
    lines = exchanges_to_jsonl(log).splitlines()
    assert len(lines) == 2
    first = json.loads(lines[0])
    assert first["accepted"] is False
    assert first["diagnostics"][0]["code"] == "UNMATCHED_OCCUPY"


def test_adversarial_providers_never_yield_invalid_graphs():
    rng = random.Random(51)
    docs = [task(k)[0] for k in range(1, 6)]
    for _ in range(200):
        script = []
        for _ in range(rng.randint(1, 4)):
            doc = rng.choice(docs)
            text = serialize_task_graph(doc)
            roll = rng.random()
            if roll < 0.3:
                lines = text.splitlines()
                del lines[rng.randrange(5, len(lines) - 2)]
                text = "\n".join(lines)
            elif roll < 0.5:
                text = text.replace(rng.choice(sorted(doc.graph.nodes)), "ghost", 1)
            elif roll < 0.6:
                text = PROSE
            script.append(f"Sure.\n```json\n{text}\n```")
        req = GenerationRequest("x", "y", max_attempts=rng.randint(1, 4))
        provider = MockProvider(script)
        try:
            doc, log = generate_graph(req, provider)
        except GenerationFailure as exc:
            assert len(exc.exchanges) == req.max_attempts
            assert not any(e.accepted for e in exc.exchanges)
            continue
        assert validate_graph(doc.graph).ok
        assert len(log) <= req.max_attempts
        assert [e.accepted for e in log] == [False] * (len(log) - 1) + [True]


def test_deterministic_loop():
    runs = [generate_graph(REQUEST, MockProvider([MISSING_RELEASE, VALID])) for _ in range(2)]
    assert exchanges_to_jsonl(runs[0][1]) == exchanges_to_jsonl(runs[1][1])
