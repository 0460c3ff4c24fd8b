"""Task-graph documents: parsing with located diagnostics, canonical text, LLM payload isolation, DOT."""

from __future__ import annotations

import json
import re
from dataclasses import dataclass
from json.decoder import scanstring
from pathlib import Path

from .graph import TaskGraph, TaskNode, TaskType

FORMAT_VERSION = 1
FILE_SUFFIX = ".taskgraph.json"

_TOP_KEYS = ("version", "task", "instruction", "nodes", "edges")
_NODE_KEYS = ("id", "type", "desc", "arms", "object", "tool", "dest")
_TYPE_NAMES = {t.value: t for t in TaskType}


@dataclass(frozen=True)
class GraphDocument:
    task_name: str
    instruction: str
    graph: TaskGraph
    format_version: int = FORMAT_VERSION


@dataclass(frozen=True, order=True)
class ParseDiagnostic:
    line: int
    column: int
    code: str
    message: str
    severity: str = "error"
    end_line: int | None = None
    end_column: int | None = None

    def __str__(self) -> str:
        return f"{self.line}:{self.column}: {self.severity} {self.code}: {self.message}"


class GraphParseError(ValueError):
    def __init__(self, diagnostics: list[ParseDiagnostic]) -> None:
        self.diagnostics = diagnostics
        super().__init__("; ".join(str(d) for d in diagnostics if d.severity == "error"))


class NoPayloadError(ValueError):
    code = "NO_PAYLOAD"


# ---------------------------------------------------------------------------
# Parsing

_WS = re.compile(r"[ \t\n\r]*")
_MAX_INDEX_DEPTH = 4


class _Locator:
    def __init__(self, text: str) -> None:
        self.text = text
        self._line_starts = [0] + [m.end() for m in re.finditer("\n", text)]

    def line_col(self, offset: int) -> tuple[int, int]:
        lo, hi = 0, len(self._line_starts) - 1
        while lo < hi:
            mid = (lo + hi + 1) // 2
            if self._line_starts[mid] <= offset:
                lo = mid
            else:
                hi = mid - 1
        return lo + 1, offset - self._line_starts[lo] + 1

    def diag(self, start: int, end: int | None, code: str, message: str, severity: str = "error") -> ParseDiagnostic:
        line, col = self.line_col(start)
        end_line = end_col = None
        if end is not None:
            end_line, end_col = self.line_col(max(start, end - 1))
        return ParseDiagnostic(line, col, code, message, severity, end_line, end_col)


def _index_spans(text: str, out: dict, dupes: list, pos: int, path: tuple, depth: int) -> int:
    """Record (start, end) offsets of every value up to a fixed depth; return end of value."""
    pos = _WS.match(text, pos).end()
    start = pos
    char = text[pos]
    if depth >= _MAX_INDEX_DEPTH or char not in "{[":
        _, end = _RAW.raw_decode(text, pos)
        out[path] = (start, end)
        return end
    if char == "{":
        seen: set[str] = set()
        pos = _WS.match(text, pos + 1).end()
        if text[pos] == "}":
            out[path] = (start, pos + 1)
            return pos + 1
        while True:
            key_start = pos
            key, pos = scanstring(text, pos + 1)
            if key in seen:
                dupes.append((key_start, pos, path + (key,)))
            seen.add(key)
            pos = _WS.match(text, pos).end() + 1  # ':'
            pos = _index_spans(text, out, dupes, pos, path + (key,), depth + 1)
            pos = _WS.match(text, pos).end()
            if text[pos] == "}":
                out[path] = (start, pos + 1)
                return pos + 1
            pos = _WS.match(text, pos + 1).end()
    index = 0
    pos = _WS.match(text, pos + 1).end()
    if text[pos] == "]":
        out[path] = (start, pos + 1)
        return pos + 1
    while True:
        pos = _index_spans(text, out, dupes, pos, path + (index,), depth + 1)
        index += 1
        pos = _WS.match(text, pos).end()
        if text[pos] == "]":
            out[path] = (start, pos + 1)
            return pos + 1
        pos += 1


_RAW = json.JSONDecoder()


def _reject_constant(name: str):
    raise ValueError(f"non-standard JSON constant {name}")


def parse_with_diagnostics(data: str | bytes) -> tuple[GraphDocument | None, list[ParseDiagnostic]]:
    """Parse a task-graph document; never raises on malformed input."""
    if isinstance(data, (bytes, bytearray)):
        try:
            text = bytes(data).decode("utf-8")
        except UnicodeDecodeError as exc:
            good = bytes(data[: exc.start]).decode("utf-8", errors="replace")
            loc = _Locator(good)
            line, col = loc.line_col(len(good))
            return None, [ParseDiagnostic(line, col, "INVALID_UTF8", f"invalid UTF-8 at byte {exc.start}")]
    else:
        text = data
    if text.startswith("\ufeff"):
        text = text[1:]
    loc = _Locator(text)

    try:
        value = json.loads(text, parse_constant=_reject_constant)
    except json.JSONDecodeError as exc:
        return None, [loc.diag(exc.pos, None, "SYNTAX_ERROR", exc.msg)]
    except RecursionError:
        return None, [loc.diag(0, None, "SYNTAX_ERROR", "nesting too deep")]
    except ValueError as exc:
        where = max(0, min((text.find(c) for c in ("NaN", "Infinity") if c in text), default=0))
        return None, [loc.diag(where, None, "SYNTAX_ERROR", str(exc))]

    spans: dict[tuple, tuple[int, int]] = {}
    dupes: list = []
    _index_spans(text, spans, dupes, 0, (), 0)
    diags: list[ParseDiagnostic] = []

    def at(path: tuple, code: str, message: str, severity: str = "error") -> None:
        probe = path
        while probe not in spans and probe:
            probe = probe[:-1]
        start, end = spans.get(probe, (0, len(text)))
        diags.append(loc.diag(start, end, code, message, severity))

    for start, end, path in dupes:
        diags.append(loc.diag(start, end, "DUPLICATE_KEY", f"duplicate key {path[-1]!r}"))

    if not isinstance(value, dict):
        at((), "SCHEMA_ERROR", "document must be a JSON object")
        return None, sorted(diags)
    for key in value:
        if key not in _TOP_KEYS:
            at((key,), "UNKNOWN_KEY", f"unknown top-level key {key!r}", "warning")
    for key in _TOP_KEYS:
        if key not in value:
            at((), "SCHEMA_ERROR", f"missing top-level key {key!r}")
    if any(d.severity == "error" for d in diags):
        return None, sorted(diags)

    version = value["version"]
    if type(version) is not int:
        at(("version",), "SCHEMA_ERROR", "version must be an integer")
    elif version != FORMAT_VERSION:
        at(("version",), "UNSUPPORTED_VERSION", f"format version {version} is not supported")
    for key in ("task", "instruction"):
        if not isinstance(value[key], str):
            at((key,), "SCHEMA_ERROR", f"{key} must be a string")

    nodes: list[TaskNode] = []
    declared: set[str] = set()
    named: set[str] = set()  # ids of every node object, even malformed ones
    if not isinstance(value["nodes"], list):
        at(("nodes",), "SCHEMA_ERROR", "nodes must be an array")
    else:
        for i, raw in enumerate(value["nodes"]):
            if isinstance(raw, dict) and isinstance(raw.get("id"), str):
                named.add(raw["id"])
            node = _parse_node(raw, ("nodes", i), at)
            if node is None:
                continue
            if node.id in declared:
                at(("nodes", i, "id"), "DUPLICATE_NODE_ID", f"node id {node.id!r} declared twice")
                continue
            declared.add(node.id)
            nodes.append(node)

    edges: list[tuple[str, str]] = []
    if not isinstance(value["edges"], list):
        at(("edges",), "SCHEMA_ERROR", "edges must be an array")
    else:
        seen_edges: set[tuple[str, str]] = set()
        for i, raw in enumerate(value["edges"]):
            if not (isinstance(raw, list) and len(raw) == 2 and all(isinstance(x, str) for x in raw)):
                at(("edges", i), "SCHEMA_ERROR", "an edge must be a [from, to] pair of node ids")
                continue
            edge = (raw[0], raw[1])
            bad = [x for x in edge if x not in named]
            if bad and isinstance(value["nodes"], list):
                at(("edges", i), "UNDECLARED_EDGE_ENDPOINT", f"edge references undeclared node(s) {', '.join(bad)}")
                continue
            if edge in seen_edges:
                at(("edges", i), "DUPLICATE_EDGE", f"edge {edge[0]}->{edge[1]} listed twice", "warning")
            seen_edges.add(edge)
            edges.append(edge)

    diags.sort()
    if any(d.severity == "error" for d in diags):
        return None, diags
    doc = GraphDocument(value["task"], value["instruction"], TaskGraph(nodes, edges), version)
    return doc, diags


def _parse_node(raw, path: tuple, at) -> TaskNode | None:
    if not isinstance(raw, dict):
        at(path, "SCHEMA_ERROR", "a node must be a JSON object")
        return None
    ok = True
    for key in raw:
        if key not in _NODE_KEYS:
            at(path + (key,), "UNKNOWN_KEY", f"unknown node key {key!r}", "warning")
    for key in ("id", "type"):
        if key not in raw:
            at(path, "SCHEMA_ERROR", f"node is missing {key!r}")
            ok = False
    if not ok:
        return None
    if not isinstance(raw["id"], str) or not raw["id"]:
        at(path + ("id",), "SCHEMA_ERROR", "node id must be a non-empty string")
        ok = False
    kind = raw["type"]
    if not isinstance(kind, str) or kind not in _TYPE_NAMES:
        at(path + ("type",), "UNKNOWN_TASK_TYPE",
           f"unknown task type {kind!r}; expected one of {', '.join(_TYPE_NAMES)}")
        ok = False
    arms = raw.get("arms", 1)
    if type(arms) is not int:
        at(path + ("arms",), "SCHEMA_ERROR", "arms must be an integer")
        ok = False
    for key in ("desc", "object"):
        if key in raw and not isinstance(raw[key], str):
            at(path + (key,), "SCHEMA_ERROR", f"{key} must be a string")
            ok = False
    for key in ("tool", "dest"):
        if key in raw and raw[key] is not None and not isinstance(raw[key], str):
            at(path + (key,), "SCHEMA_ERROR", f"{key} must be a string or null")
            ok = False
    if not ok:
        return None
    return TaskNode(
        id=raw["id"],
        task_type=_TYPE_NAMES[kind],
        description=raw.get("desc", ""),
        arms_required=arms,
        target_object=raw.get("object", ""),
        tool=raw.get("tool"),
        destination=raw.get("dest"),
    )


def parse_task_graph(data: str | bytes) -> GraphDocument:
    """Parse a document or raise :class:`GraphParseError` with every diagnostic."""
    doc, diags = parse_with_diagnostics(data)
    if doc is None:
        raise GraphParseError(diags)
    return doc


def load_document(path: str | Path) -> GraphDocument:
    return parse_task_graph(Path(path).read_bytes())


# ---------------------------------------------------------------------------
# Serialization


def _node_line(node: TaskNode) -> str:
    fields = {
        "id": node.id,
        "type": node.task_type.value,
        "desc": node.description,
        "arms": node.arms_required,
        "object": node.target_object,
    }
    if node.tool is not None:
        fields["tool"] = node.tool
    if node.destination is not None:
        fields["dest"] = node.destination
    return json.dumps(fields, ensure_ascii=False)


def serialize_task_graph(doc: GraphDocument) -> str:
    dump = lambda v: json.dumps(v, ensure_ascii=False)  # noqa: E731
    lines = [
        "{",
        f'  "version": {doc.format_version},',
        f'  "task": {dump(doc.task_name)},',
        f'  "instruction": {dump(doc.instruction)},',
    ]
    nodes = [_node_line(doc.graph[nid]) for nid in sorted(doc.graph.nodes)]
    edges = [dump([a, b]) for a, b in sorted(doc.graph.edges)]
    for key, items, last in (("nodes", nodes, False), ("edges", edges, True)):
        tail = "" if last else ","
        if not items:
            lines.append(f'  "{key}": []{tail}')
            continue
        lines.append(f'  "{key}": [')
        lines.extend(f"    {item}{',' if i < len(items) - 1 else ''}" for i, item in enumerate(items))
        lines.append(f"  ]{tail}")
    lines.append("}")
    return "\n".join(lines) + "\n"


# ---------------------------------------------------------------------------
# LLM payload isolation

_FENCE = re.compile(r"```[^\n`]*\n(.*?)```", re.DOTALL)


def _balanced_blocks(text: str, skip: list[tuple[int, int]]) -> list[tuple[int, str]]:
    blocks = []
    i = 0
    while i < len(text):
        inside = next((e for s, e in skip if s <= i < e), None)
        if inside is not None:
            i = inside
            continue
        if text[i] != "{":
            i += 1
            continue
        depth, j, in_str = 0, i, False
        while j < len(text):
            c = text[j]
            if in_str:
                if c == "\\":
                    j += 1
                elif c == '"':
                    in_str = False
            elif c == '"':
                in_str = True
            elif c == "{":
                depth += 1
            elif c == "}":
                depth -= 1
                if depth == 0:
                    break
            j += 1
        if depth == 0 and j < len(text):
            blocks.append((i, text[i : j + 1]))
            i = j + 1
        else:
            i += 1
    return blocks


def extract_graph_payload(raw: str) -> str:
    """Return the last fenced or brace-balanced block of ``raw``.

    Later blocks win because self-corrections come after the first attempt.
    Raises :class:`NoPayloadError` when no block exists.
    """
    candidates: list[tuple[int, str]] = []
    fences = []
    for m in _FENCE.finditer(raw):
        fences.append((m.start(), m.end()))
        body = m.group(1).strip()
        if "{" in body:
            candidates.append((m.start(), body))
    candidates.extend(_balanced_blocks(raw, fences))
    if not candidates:
        raise NoPayloadError("no graph payload block found in the response")
    return max(candidates, key=lambda c: c[0])[1].strip()


# ---------------------------------------------------------------------------
# DOT

_SHAPES = {
    TaskType.OCCUPY: "box",
    TaskType.TOOL_USE: "hexagon",
    TaskType.RELEASE: "ellipse",
    TaskType.OPERATE: "diamond",
    TaskType.COMPLETE: "doublecircle",
}


def _dot_str(value: str) -> str:
    return '"' + value.replace("\\", "\\\\").replace('"', '\\"').replace("\n", "\\n") + '"'


def export_dot(graph: TaskGraph, name: str = "task_graph") -> str:
    lines = [f"digraph {_dot_str(name)} {{", "  rankdir=TB;", '  node [fontname="Helvetica"];']
    for nid in sorted(graph.nodes):
        node = graph[nid]
        label = nid if not node.description else f"{nid}\n{node.description}"
        attrs = [f"label={_dot_str(label)}", f"shape={_SHAPES[node.task_type]}"]
        if node.arms_required == 2:
            attrs.append("style=bold")
        lines.append(f"  {_dot_str(nid)} [{', '.join(attrs)}];")
    for a, b in sorted(graph.edges):
        lines.append(f"  {_dot_str(a)} -> {_dot_str(b)};")
    lines.append("}")
    return "\n".join(lines) + "\n"
