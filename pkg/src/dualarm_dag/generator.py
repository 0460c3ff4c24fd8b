"""Instruction to validated task graph through a text-completion provider.

Each attempt extracts a JSON payload from the completion, parses it and runs
the structural validator. Any failure becomes numbered feedback appended to
the next prompt, until a graph passes or the attempt budget runs out.
"""

from __future__ import annotations

import json
import os
import urllib.error
import urllib.request
from collections.abc import Iterable, Sequence
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Protocol

from .graph import ValidationIssue, validate_graph
from .graphio import GraphDocument, NoPayloadError, extract_graph_payload, parse_with_diagnostics

PROMPT_VERSION = "task_graph_v1"
DEFAULT_MAX_ATTEMPTS = 3

_RULES = {
    "BAD_ARMS": "arms must be 1 or 2",
    "BAD_TERMINAL": "the graph needs exactly one Complete node, and it must have no successors",
    "CYCLE": "dependencies must not form a cycle",
    "DANGLING_EDGE": "every edge endpoint must be a declared node",
    "DISCONNECTED": "every node must lead to the Complete node",
    "DUPLICATE_KEY": "a JSON object must not repeat a key",
    "DUPLICATE_NODE_ID": "node ids must be unique",
    "INVALID_UTF8": "the reply must be valid UTF-8",
    "MISSING_OBJECT": "every node except Complete must name its object",
    "MISSING_TOOL": "a ToolUse node must name the tool it uses",
    "NO_PAYLOAD": "the reply must contain the graph as one JSON object",
    "PAIRING_AMBIGUOUS": "each Occupy must have a single nearest matching Release",
    "PAIR_ARMS_MISMATCH": "nodes of one occupy-release pair must use the same arms value",
    "PAIR_OBJECT_MISMATCH": "an Occupy and the Release it reaches must name the same object",
    "PAIR_OVERLAP": "a node may belong to only one occupy-release pair",
    "PAIR_PATH_BROKEN": "work on a held object must lie between its Occupy and its Release",
    "SCHEMA_ERROR": "the JSON must follow the documented schema",
    "SYNTAX_ERROR": "the payload must be well-formed JSON",
    "TOOL_NOT_HELD": "a ToolUse inside a pair must use the held object as its tool",
    "UNDECLARED_EDGE_ENDPOINT": "every edge endpoint must be a declared node",
    "UNKNOWN_TASK_TYPE": "type must be one of Occupy, ToolUse, Release, Operate, Complete",
    "UNMATCHED_OCCUPY": "every Occupy must reach a matching Release of the same object",
    "UNMATCHED_RELEASE": "every Release must be reached from a matching Occupy of the same object",
    "UNSUPPORTED_VERSION": "version must be 1",
}


class ProviderError(Exception):
    """Transport-level failure talking to the completion backend."""

    code = "PROVIDER_TRANSPORT"


class Provider(Protocol):
    def complete(self, prompt: str) -> str: ...


@dataclass(frozen=True)
class GenerationRequest:
    instruction: str
    environment_description: str
    max_attempts: int = DEFAULT_MAX_ATTEMPTS

    def __post_init__(self) -> None:
        if self.max_attempts < 1:
            raise ValueError("max_attempts must be at least 1")


@dataclass(frozen=True)
class ProviderExchange:
    attempt_index: int
    prompt_text: str
    raw_response: str
    diagnostics: tuple[ValidationIssue, ...]
    accepted: bool

    def to_dict(self) -> dict:
        return {
            "attempt": self.attempt_index,
            "prompt": self.prompt_text,
            "response": self.raw_response,
            "diagnostics": [
                {"code": d.code, "node_ids": list(d.node_ids), "message": d.message} for d in self.diagnostics
            ],
            "accepted": self.accepted,
        }


class GenerationFailure(Exception):
    code = "ATTEMPTS_EXHAUSTED"

    def __init__(self, exchanges: Sequence[ProviderExchange]) -> None:
        self.exchanges = tuple(exchanges)
        last = self.exchanges[-1].diagnostics if self.exchanges else ()
        codes = ", ".join(sorted({d.code for d in last})) or "none"
        super().__init__(f"no valid graph after {len(self.exchanges)} attempt(s); last errors: {codes}")


@dataclass
class MockProvider:
    """Replays scripted completions; the last one repeats once the script runs out."""

    responses: Sequence[str]
    prompts: list[str] = field(default_factory=list)

    def complete(self, prompt: str) -> str:
        if not self.responses:
            raise ProviderError("mock provider has no scripted responses")
        self.prompts.append(prompt)
        return self.responses[min(len(self.prompts), len(self.responses)) - 1]


@dataclass(frozen=True)
class HttpProvider:
    """Chat-completion endpoint speaking the common ``messages`` JSON protocol."""

    url: str
    model: str
    auth_env: str | None = None
    timeout_s: float = 60.0

    def complete(self, prompt: str) -> str:
        body = json.dumps({
            "model": self.model,
            "messages": [{"role": "user", "content": prompt}],
            "temperature": 0,
        }).encode("utf-8")
        headers = {"Content-Type": "application/json"}
        if self.auth_env:
            token = os.environ.get(self.auth_env)
            if not token:
                raise ProviderError(f"environment variable {self.auth_env} is not set")
            headers["Authorization"] = f"Bearer {token}"
        req = urllib.request.Request(self.url, data=body, headers=headers, method="POST")
        try:
            with urllib.request.urlopen(req, timeout=self.timeout_s) as resp:
                payload = json.loads(resp.read().decode("utf-8"))
        except (urllib.error.URLError, TimeoutError, OSError, ValueError) as exc:
            raise ProviderError(f"request to {self.url} failed: {exc}") from exc
        try:
            return payload["choices"][0]["message"]["content"]
        except (KeyError, IndexError, TypeError) as exc:
            raise ProviderError("response has no choices[0].message.content") from exc


def load_prompt_template(version: str = PROMPT_VERSION) -> str:
    return resources.files("dualarm_dag").joinpath("prompts").joinpath(f"{version}.txt").read_text(encoding="utf-8")


def build_prompt(request: GenerationRequest, template: str | None = None) -> str:
    text = load_prompt_template() if template is None else template
    return text.replace("{instruction}", request.instruction).replace("{environment}", request.environment_description)


def build_reflection_feedback(diagnostics: Iterable[ValidationIssue]) -> str:
    """Numbered correction notes, one per diagnostic, sorted by code then ids."""
    items = sorted(set(diagnostics))
    if not items:
        raise ValueError("no diagnostics to reflect on")
    lines = ["Your previous graph was rejected. Fix every problem below and reply with the full corrected graph."]
    for k, d in enumerate(items, 1):
        ids = f" [{', '.join(d.node_ids)}]" if d.node_ids else ""
        rule = _RULES.get(d.code, "see the schema and rules above")
        lines.append(f"{k}. {d.code}{ids}: {d.message}. Rule: {rule}.")
    return "\n".join(lines)


def assess_response(raw: str) -> tuple[GraphDocument | None, tuple[ValidationIssue, ...]]:
    """Extract, parse and validate one completion. A document comes back only if it is error-free."""
    try:
        payload = extract_graph_payload(raw)
    except NoPayloadError as exc:
        return None, (ValidationIssue(NoPayloadError.code, (), str(exc)),)
    doc, diags = parse_with_diagnostics(payload)
    parse_errors = tuple(
        ValidationIssue(d.code, (), f"line {d.line} column {d.column}: {d.message}")
        for d in diags if d.severity == "error"
    )
    if doc is None or parse_errors:
        return None, parse_errors
    report = validate_graph(doc.graph)
    if not report.ok:
        return None, report.errors
    return doc, ()


def generate_graph(
    request: GenerationRequest,
    provider: Provider,
    *,
    template: str | None = None,
) -> tuple[GraphDocument, list[ProviderExchange]]:
    """Run the generate, validate, reflect loop.

    Raises :class:`GenerationFailure` (carrying every exchange) once
    ``max_attempts`` completions have all been rejected. Transport faults
    propagate as :class:`ProviderError`.
    """
    base = build_prompt(request, template)
    prompt = base
    log: list[ProviderExchange] = []
    for attempt in range(1, request.max_attempts + 1):
        raw = provider.complete(prompt)
        doc, diagnostics = assess_response(raw)
        log.append(ProviderExchange(attempt, prompt, raw, diagnostics, doc is not None))
        if doc is not None:
            return doc, log
        prompt = f"{base}\n\n{build_reflection_feedback(diagnostics)}"
    raise GenerationFailure(log)


def exchanges_to_jsonl(exchanges: Iterable[ProviderExchange]) -> str:
    return "".join(json.dumps(e.to_dict(), sort_keys=True) + "\n" for e in exchanges)


def write_exchange_log(path: str | Path, exchanges: Iterable[ProviderExchange]) -> None:
    Path(path).write_text(exchanges_to_jsonl(exchanges), encoding="utf-8")
