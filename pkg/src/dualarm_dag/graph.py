"""Typed sub-task DAG, structural validation, occupy-release pairing and node status."""

from __future__ import annotations

import enum
from collections import deque
from collections.abc import Iterable, Mapping
from dataclasses import dataclass
from types import MappingProxyType


class TaskType(str, enum.Enum):
    OCCUPY = "Occupy"
    TOOL_USE = "ToolUse"
    RELEASE = "Release"
    OPERATE = "Operate"
    COMPLETE = "Complete"


class NodeStatus(str, enum.Enum):
    PENDING = "Pending"
    READY = "Ready"
    DONE = "Done"


@dataclass(frozen=True)
class TaskNode:
    """One sub-task.

    ``destination`` names the object a Release puts the held object into or
    onto (plate, drawer, tray). Field-level rules (arms in {1, 2}, ToolUse needs
    a tool, ...) are checked by :func:`validate_graph` so that malformed graphs
    can still be represented and reported on.
    """

    id: str
    task_type: TaskType
    description: str = ""
    arms_required: int = 1
    target_object: str = ""
    tool: str | None = None
    destination: str | None = None


class TaskGraph:
    """Immutable node/edge container with cached reachability queries.

    Edges whose endpoints are missing are kept (so the validator can report
    them) but ignored by every traversal.
    """

    __slots__ = ("_nodes", "_edges", "_succ", "_pred", "_desc", "_anc")

    def __init__(self, nodes: Iterable[TaskNode], edges: Iterable[tuple[str, str]] = ()) -> None:
        table: dict[str, TaskNode] = {}
        for node in nodes:
            if node.id in table:
                raise ValueError(f"duplicate node id {node.id!r}")
            table[node.id] = node
        self._nodes = MappingProxyType(dict(sorted(table.items())))
        self._edges = tuple(sorted({(str(a), str(b)) for a, b in edges}))
        succ: dict[str, list[str]] = {nid: [] for nid in self._nodes}
        pred: dict[str, list[str]] = {nid: [] for nid in self._nodes}
        for a, b in self._edges:
            if a in self._nodes and b in self._nodes:
                succ[a].append(b)
                pred[b].append(a)
        self._succ = {k: tuple(v) for k, v in succ.items()}
        self._pred = {k: tuple(v) for k, v in pred.items()}
        self._desc: dict[str, frozenset[str]] = {}
        self._anc: dict[str, frozenset[str]] = {}

    @property
    def nodes(self) -> Mapping[str, TaskNode]:
        return self._nodes

    @property
    def edges(self) -> tuple[tuple[str, str], ...]:
        return self._edges

    def __getitem__(self, node_id: str) -> TaskNode:
        return self._nodes[node_id]

    def __contains__(self, node_id: object) -> bool:
        return node_id in self._nodes

    def __len__(self) -> int:
        return len(self._nodes)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, TaskGraph):
            return NotImplemented
        return dict(self._nodes) == dict(other._nodes) and self._edges == other._edges

    def __hash__(self) -> int:
        return hash((tuple(self._nodes.values()), self._edges))

    def __repr__(self) -> str:
        return f"TaskGraph({len(self._nodes)} nodes, {len(self._edges)} edges)"

    def successors(self, node_id: str) -> tuple[str, ...]:
        return self._succ[node_id]

    def predecessors(self, node_id: str) -> tuple[str, ...]:
        return self._pred[node_id]

    def descendants(self, node_id: str) -> frozenset[str]:
        """Nodes reachable from ``node_id`` by one or more edges."""
        if node_id not in self._desc:
            self._desc[node_id] = _reach(node_id, self._succ)
        return self._desc[node_id]

    def ancestors(self, node_id: str) -> frozenset[str]:
        if node_id not in self._anc:
            self._anc[node_id] = _reach(node_id, self._pred)
        return self._anc[node_id]

    def distances_from(self, node_id: str) -> dict[str, int]:
        """BFS hop counts to every node reachable from ``node_id``."""
        dist = {node_id: 0}
        queue = deque([node_id])
        while queue:
            current = queue.popleft()
            for nxt in self._succ[current]:
                if nxt not in dist:
                    dist[nxt] = dist[current] + 1
                    queue.append(nxt)
        del dist[node_id]
        return dist

    def complete_ids(self) -> tuple[str, ...]:
        return tuple(nid for nid, n in self._nodes.items() if n.task_type is TaskType.COMPLETE)

    @property
    def complete_id(self) -> str:
        """The unique terminal node id; raises if the graph has zero or several."""
        ids = self.complete_ids()
        if len(ids) != 1:
            raise ValueError(f"expected exactly one Complete node, found {len(ids)}")
        return ids[0]

    def topological_order(self) -> tuple[str, ...]:
        """Kahn order with lexicographic tie-breaking. Raises on cycles."""
        indegree = {nid: len(self._pred[nid]) for nid in self._nodes}
        ready = sorted(nid for nid, deg in indegree.items() if deg == 0)
        order: list[str] = []
        while ready:
            current = ready.pop(0)
            order.append(current)
            for nxt in self._succ[current]:
                indegree[nxt] -= 1
                if indegree[nxt] == 0:
                    ready.append(nxt)
            ready.sort()
        if len(order) != len(self._nodes):
            raise ValueError("graph contains a cycle")
        return tuple(order)


def _reach(start: str, adjacency: Mapping[str, tuple[str, ...]]) -> frozenset[str]:
    seen: set[str] = set()
    stack = list(adjacency[start])
    while stack:
        current = stack.pop()
        if current in seen:
            continue
        seen.add(current)
        stack.extend(adjacency[current])
    return frozenset(seen)


# ---------------------------------------------------------------------------
# Validation


@dataclass(frozen=True, order=True)
class ValidationIssue:
    code: str
    node_ids: tuple[str, ...]
    message: str


@dataclass(frozen=True)
class ValidationReport:
    errors: tuple[ValidationIssue, ...] = ()
    warnings: tuple[ValidationIssue, ...] = ()

    @property
    def ok(self) -> bool:
        return not self.errors

    def codes(self) -> list[str]:
        return [issue.code for issue in self.errors]


@dataclass(frozen=True)
class OccupyReleasePair:
    occupy_id: str
    release_id: str
    path_ids: tuple[str, ...]
    object_name: str

    @property
    def pair_id(self) -> str:
        return self.occupy_id


class PairingError(ValueError):
    """Raised by :func:`extract_pairs` when the graph has unresolved pairing issues."""

    def __init__(self, issues: Iterable[ValidationIssue]) -> None:
        self.issues = tuple(sorted(issues))
        self.code = self.issues[0].code if self.issues else "PAIRING_ERROR"
        detail = "; ".join(f"{i.code} {','.join(i.node_ids)}" for i in self.issues)
        super().__init__(f"cannot extract occupy-release pairs: {detail}")


_PAIR_CODES = frozenset(
    {
        "UNMATCHED_OCCUPY",
        "UNMATCHED_RELEASE",
        "PAIR_OBJECT_MISMATCH",
        "PAIRING_AMBIGUOUS",
        "PAIR_PATH_BROKEN",
        "PAIR_OVERLAP",
        "PAIR_ARMS_MISMATCH",
        "TOOL_NOT_HELD",
    }
)


def _acts_on(node: TaskNode, held: str) -> bool:
    if node.task_type is TaskType.TOOL_USE:
        return node.tool == held
    if node.task_type is TaskType.OPERATE:
        return node.target_object == held
    return False


def _path_for(graph: TaskGraph, occupy_id: str, release_id: str, held: str) -> tuple[str, ...]:
    between = graph.descendants(occupy_id) & graph.ancestors(release_id)
    inner = {nid for nid in between if _acts_on(graph[nid], held)}
    members = inner | {occupy_id, release_id}
    # topological order restricted to members, lexicographic ties
    order: list[str] = []
    remaining = set(members)
    while remaining:
        layer = sorted(n for n in remaining if not (graph.ancestors(n) & remaining))
        if not layer:  # cyclic; fall back to id order
            layer = sorted(remaining)
        order.append(layer[0])
        remaining.discard(layer[0])
    return tuple(order)


def _connected_within(graph: TaskGraph, source: str, target: str, allowed: set[str]) -> bool:
    stack = [source]
    seen = {source}
    while stack:
        current = stack.pop()
        if current == target:
            return True
        for nxt in graph.successors(current):
            if nxt in allowed and nxt not in seen:
                seen.add(nxt)
                stack.append(nxt)
    return False


def _match_pairs(graph: TaskGraph) -> tuple[list[OccupyReleasePair], list[ValidationIssue]]:
    issues: list[ValidationIssue] = []
    nodes = graph.nodes
    occupies = [n for n in nodes.values() if n.task_type is TaskType.OCCUPY]
    releases = [n for n in nodes.values() if n.task_type is TaskType.RELEASE]

    # each Occupy proposes its nearest reachable Release of the same object
    proposals: dict[str, str] = {}
    for occ in occupies:
        if not occ.target_object:
            continue
        dist = graph.distances_from(occ.id)
        same = [(d, nid) for nid, d in dist.items()
                if nodes[nid].task_type is TaskType.RELEASE and nodes[nid].target_object == occ.target_object]
        if not same:
            continue
        best = min(d for d, _ in same)
        nearest = sorted(nid for d, nid in same if d == best)
        if len(nearest) > 1:
            issues.append(ValidationIssue(
                "PAIRING_AMBIGUOUS", (occ.id, *nearest),
                f"Occupy {occ.id!r} reaches several Releases of {occ.target_object!r} at equal distance",
            ))
            continue
        proposals[occ.id] = nearest[0]

    claims: dict[str, list[str]] = {}
    for occ_id, rel_id in proposals.items():
        claims.setdefault(rel_id, []).append(occ_id)
    matched: dict[str, str] = {}
    for rel_id, occ_ids in sorted(claims.items()):
        if len(occ_ids) > 1:
            issues.append(ValidationIssue(
                "PAIRING_AMBIGUOUS", (rel_id, *sorted(occ_ids)),
                f"Release {rel_id!r} is the nearest match of several Occupy nodes",
            ))
            continue
        matched[occ_ids[0]] = rel_id

    ambiguous = {nid for issue in issues for nid in issue.node_ids}
    lone_occ = sorted(o.id for o in occupies if o.id not in matched and o.id not in ambiguous)
    lone_rel = sorted(r.id for r in releases if r.id not in matched.values() and r.id not in ambiguous)

    # an orphan Occupy followed by an orphan Release of another object looks like a typo'd pair
    used: set[str] = set()
    for occ_id in lone_occ:
        dist = graph.distances_from(occ_id)
        options = sorted((dist[r], r) for r in lone_rel if r in dist and r not in used)
        if options:
            rel_id = options[0][1]
            used.update({occ_id, rel_id})
            issues.append(ValidationIssue(
                "PAIR_OBJECT_MISMATCH", (occ_id, rel_id),
                f"Occupy {occ_id!r} ({nodes[occ_id].target_object!r}) is followed by Release "
                f"{rel_id!r} of a different object ({nodes[rel_id].target_object!r})",
            ))
    for occ_id in lone_occ:
        if occ_id not in used:
            issues.append(ValidationIssue(
                "UNMATCHED_OCCUPY", (occ_id,),
                f"Occupy {occ_id!r} has no downstream Release of {nodes[occ_id].target_object!r}",
            ))
    for rel_id in lone_rel:
        if rel_id not in used:
            issues.append(ValidationIssue(
                "UNMATCHED_RELEASE", (rel_id,),
                f"Release {rel_id!r} has no upstream Occupy of {nodes[rel_id].target_object!r}",
            ))

    pairs: list[OccupyReleasePair] = []
    membership: dict[str, list[str]] = {}
    for occ_id, rel_id in sorted(matched.items()):
        held = nodes[occ_id].target_object
        path = _path_for(graph, occ_id, rel_id, held)
        pair = OccupyReleasePair(occ_id, rel_id, path, held)
        pairs.append(pair)
        for nid in path:
            membership.setdefault(nid, []).append(occ_id)
        if not _connected_within(graph, occ_id, rel_id, set(path)):
            issues.append(ValidationIssue(
                "PAIR_PATH_BROKEN", (occ_id, rel_id),
                f"no edge path from {occ_id!r} to {rel_id!r} through nodes acting on {held!r}",
            ))
        arms = {nodes[nid].arms_required for nid in path}
        if len(arms) > 1:
            issues.append(ValidationIssue(
                "PAIR_ARMS_MISMATCH", path,
                f"pair {occ_id!r}->{rel_id!r} mixes one- and two-arm nodes",
            ))
    for nid, owners in sorted(membership.items()):
        if len(owners) > 1:
            issues.append(ValidationIssue(
                "PAIR_OVERLAP", (nid, *sorted(owners)),
                f"node {nid!r} lies on several occupy-release paths",
            ))
    for node in nodes.values():
        if node.task_type is TaskType.TOOL_USE and node.tool and node.id not in membership:
            issues.append(ValidationIssue(
                "TOOL_NOT_HELD", (node.id,),
                f"ToolUse {node.id!r} is not between an Occupy and Release of tool {node.tool!r}",
            ))
    return pairs, issues


def _cycles(graph: TaskGraph) -> list[tuple[str, ...]]:
    out: list[tuple[str, ...]] = []
    seen: set[str] = set()
    for nid in graph.nodes:
        if nid in seen:
            continue
        component = {nid} | (graph.descendants(nid) & graph.ancestors(nid))
        if len(component) > 1 or nid in graph.successors(nid):
            out.append(tuple(sorted(component)))
            seen |= component
    return out


def validate_graph(graph: TaskGraph) -> ValidationReport:
    """Collect every structural problem of ``graph``; never raises."""
    errors: list[ValidationIssue] = []
    warnings: list[ValidationIssue] = []
    nodes = graph.nodes

    for node in nodes.values():
        if node.arms_required not in (1, 2):
            errors.append(ValidationIssue("BAD_ARMS", (node.id,), f"{node.id!r} requires {node.arms_required} arms"))
        if node.task_type is TaskType.COMPLETE:
            if node.target_object or node.arms_required != 1:
                errors.append(ValidationIssue(
                    "BAD_TERMINAL", (node.id,), f"Complete node {node.id!r} must have no object and one arm"))
            continue
        if not node.target_object:
            errors.append(ValidationIssue("MISSING_OBJECT", (node.id,), f"{node.id!r} names no target object"))
        if node.task_type is TaskType.TOOL_USE and not node.tool:
            errors.append(ValidationIssue("MISSING_TOOL", (node.id,), f"ToolUse {node.id!r} names no tool"))
        if node.task_type is TaskType.RELEASE and not node.destination:
            warnings.append(ValidationIssue(
                "MISSING_DESTINATION", (node.id,), f"Release {node.id!r} names no destination"))

    for a, b in graph.edges:
        missing = [x for x in (a, b) if x not in nodes]
        if missing:
            errors.append(ValidationIssue(
                "DANGLING_EDGE", (a, b), f"edge {a!r}->{b!r} references unknown node(s) {', '.join(missing)}"))

    for cycle in _cycles(graph):
        errors.append(ValidationIssue("CYCLE", cycle, f"cycle through {', '.join(cycle)}"))

    completes = graph.complete_ids()
    if len(completes) != 1:
        errors.append(ValidationIssue(
            "BAD_TERMINAL", completes, f"expected exactly one Complete node, found {len(completes)}"))
    else:
        terminal = completes[0]
        if graph.successors(terminal):
            errors.append(ValidationIssue(
                "BAD_TERMINAL", (terminal,), f"Complete node {terminal!r} has outgoing edges"))
        reaches = graph.ancestors(terminal) | {terminal}
        for nid in nodes:
            if nid not in reaches:
                errors.append(ValidationIssue(
                    "DISCONNECTED", (nid,), f"{nid!r} has no path to the Complete node"))

    errors.extend(_match_pairs(graph)[1])
    return ValidationReport(tuple(sorted(set(errors))), tuple(sorted(set(warnings))))


def extract_pairs(graph: TaskGraph) -> list[OccupyReleasePair]:
    """Occupy-release pairs sorted by occupy id.

    Raises :class:`PairingError` (``code`` of ``PAIRING_AMBIGUOUS`` etc.) if
    the graph has any pairing problem.
    """
    pairs, issues = _match_pairs(graph)
    if issues:
        raise PairingError(issues)
    return pairs


def out_of_path_ancestors(graph: TaskGraph, pair: OccupyReleasePair) -> frozenset[str]:
    return graph.ancestors(pair.release_id) - set(pair.path_ids)


# ---------------------------------------------------------------------------
# Status


class NotReadyError(ValueError):
    code = "NOT_READY"


def ready_nodes(graph: TaskGraph, status: Mapping[str, NodeStatus]) -> frozenset[str]:
    """Non-Done nodes whose predecessors are all Done.

    The Complete node qualifies only once it is the last non-Done node.
    """
    open_nodes = [nid for nid in graph.nodes if status[nid] is not NodeStatus.DONE]
    out = set()
    for nid in open_nodes:
        if graph[nid].task_type is TaskType.COMPLETE and len(open_nodes) > 1:
            continue
        if all(status[p] is NodeStatus.DONE for p in graph.predecessors(nid)):
            out.add(nid)
    return frozenset(out)


def initial_status(graph: TaskGraph) -> dict[str, NodeStatus]:
    status = {nid: NodeStatus.PENDING for nid in graph.nodes}
    for nid in ready_nodes(graph, status):
        status[nid] = NodeStatus.READY
    return status


def mark_done(
    status: Mapping[str, NodeStatus], graph: TaskGraph, node_ids: Iterable[str]
) -> dict[str, NodeStatus]:
    """Return a new status map with ``node_ids`` Done and successors promoted."""
    updated = dict(status)
    node_ids = list(node_ids)
    for nid in node_ids:
        if updated.get(nid) is not NodeStatus.READY:
            raise NotReadyError(f"node {nid!r} is {updated.get(nid)}, not Ready")
    for nid in node_ids:
        updated[nid] = NodeStatus.DONE
    for nid in ready_nodes(graph, updated):
        if updated[nid] is NodeStatus.PENDING:
            updated[nid] = NodeStatus.READY
    return updated
