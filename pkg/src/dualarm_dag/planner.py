"""Stage-by-stage dual-arm execution over a task DAG.

Each stage recomputes the ready set, narrows it per arm (an arm that owns an
open occupy-release pair works on that pair first), filters every joint
assignment through the deadlock and geometry checks, and executes the cheapest
survivor.
"""

from __future__ import annotations

import json
import math
from collections.abc import Iterable, Mapping
from dataclasses import dataclass, field
from typing import Literal, NamedTuple

from .graph import (
    NodeStatus,
    OccupyReleasePair,
    TaskGraph,
    TaskType,
    extract_pairs,
    initial_status,
    mark_done,
    out_of_path_ancestors,
    ready_nodes,
    validate_graph,
)
from .world import ARMS, Arm, ArmHoldings, WorldState, apply_stage_effects, hand_distance, target_position

Owner = Literal["left", "right", "both"]
Ownership = Mapping[str, Owner]


@dataclass(frozen=True)
class PlannerConfig:
    """Planner thresholds in meters.

    A dual assignment passes geometry iff ``d_across < distance <= d_reachable``.
    An empty band (``d_across >= d_reachable``) forbids every dual assignment.
    """

    d_reachable: float = 0.8
    d_across: float = 0.15
    tie_break: str = "lexicographic"
    allow_idle_arm: bool = True

    def __post_init__(self) -> None:
        if self.d_across < 0 or self.d_reachable < 0:
            raise ValueError("distance thresholds must be non-negative")
        if self.tie_break != "lexicographic":
            raise ValueError(f"unknown tie_break rule {self.tie_break!r}")

    @classmethod
    def from_mapping(cls, section: Mapping | None) -> PlannerConfig:
        section = section or {}
        kwargs = {}
        if "d_reachable_m" in section:
            kwargs["d_reachable"] = float(section["d_reachable_m"])
        if "d_across_m" in section:
            kwargs["d_across"] = float(section["d_across_m"])
        if "allow_idle_arm" in section:
            kwargs["allow_idle_arm"] = bool(section["allow_idle_arm"])
        if "tie_break" in section:
            kwargs["tie_break"] = str(section["tie_break"])
        return cls(**kwargs)


PERMISSIVE = PlannerConfig(d_reachable=math.inf, d_across=0.0)


class _Index:
    """Per-graph lookup tables shared by every stage of a run."""

    def __init__(self, graph: TaskGraph, pairs: Iterable[OccupyReleasePair] | None = None) -> None:
        self.graph = graph
        self.pairs = {p.pair_id: p for p in (extract_pairs(graph) if pairs is None else pairs)}
        self.pair_of: dict[str, str] = {}
        for pair in self.pairs.values():
            for nid in pair.path_ids:
                self.pair_of[nid] = pair.pair_id
        self.external = {pid: out_of_path_ancestors(graph, p) for pid, p in self.pairs.items()}
        self.work = frozenset(v for v, n in graph.nodes.items() if n.task_type is not TaskType.COMPLETE)
        self._live: dict[tuple, bool] = {}

    def completable(self, done: frozenset, left: str | None, right: str | None) -> bool:
        """Whether some one-node-at-a-time continuation finishes every sub-task.

        Any dual schedule can be serialized, so this decides liveness exactly.
        ``left``/``right`` are the pair ids held (equal for a two-arm grasp).
        """
        key = (done, left, right)
        hit = self._live.get(key)
        if hit is not None:
            return hit
        if done >= self.work:
            self._live[key] = True
            return True
        self._live[key] = False  # a state never recurs on its own path; guards re-entry
        graph = self.graph
        result = False
        for v in sorted(self.work - done):
            if not all(p in done for p in graph.predecessors(v)):
                continue
            node = graph[v]
            pid = self.pair_of.get(v)
            unowned = pid is None or pid == v
            joint_hold = left is not None and left == right
            if node.arms_required == 2:
                ok = (left is None and right is None and unowned) or (joint_hold and pid == left)
                arms = ("both",) if ok else ()
            elif joint_hold:
                arms = ()
            else:
                arms = tuple(
                    arm for arm, mine in (("left", left), ("right", right))
                    if (mine is None and unowned) or (mine is not None and mine == pid)
                )
            for arm in arms:
                nl, nr = left, right
                if node.task_type is TaskType.OCCUPY:
                    nl = v if arm in ("left", "both") else nl
                    nr = v if arm in ("right", "both") else nr
                elif node.task_type is TaskType.RELEASE:
                    nl = None if arm in ("left", "both") else nl
                    nr = None if arm in ("right", "both") else nr
                if self.completable(done | {v}, nl, nr):
                    result = True
                    break
            if result:
                break
        self._live[key] = result
        return result


_INDEX_CACHE: dict[int, tuple[TaskGraph, _Index]] = {}


def _index(graph: TaskGraph, pairs: Iterable[OccupyReleasePair] | None = None) -> _Index:
    if pairs is not None:
        return _Index(graph, pairs)
    hit = _INDEX_CACHE.get(id(graph))
    if hit is not None and hit[0] is graph:
        return hit[1]
    if len(_INDEX_CACHE) > 256:
        _INDEX_CACHE.clear()
    index = _Index(graph)
    _INDEX_CACHE[id(graph)] = (graph, index)
    return index


def _other(arm: Arm) -> Arm:
    return "right" if arm == "left" else "left"


@dataclass(frozen=True)
class CandidateSets:
    common: frozenset[str]
    priority_left: frozenset[str]
    priority_right: frozenset[str]
    effective_left: frozenset[str]
    effective_right: frozenset[str]

    def effective(self, arm: Arm) -> frozenset[str]:
        return self.effective_left if arm == "left" else self.effective_right


def compute_candidates(
    graph: TaskGraph,
    status: Mapping[str, NodeStatus],
    ownership: Ownership,
    pairs: Iterable[OccupyReleasePair] | None = None,
) -> CandidateSets:
    index = _index(graph, pairs)
    common = ready_nodes(graph, status)
    priority: dict[str, frozenset[str]] = {}
    effective: dict[str, frozenset[str]] = {}
    for arm in ARMS:
        owned = {pid for pid, who in ownership.items() if who in (arm, "both")}
        foreign = {pid for pid, who in ownership.items() if who == _other(arm)}
        prio = frozenset(
            v for v in common
            if index.pair_of.get(v) in owned and v != index.pair_of.get(v)
        )
        free = not owned
        eff = set()
        for v in prio or common:
            node = graph[v]
            pid = index.pair_of.get(v)
            if node.task_type is TaskType.COMPLETE or pid in foreign:
                continue
            if not free and pid not in owned and node.task_type in (TaskType.OCCUPY, TaskType.OPERATE):
                continue
            eff.add(v)
        priority[arm] = prio
        effective[arm] = frozenset(eff)
    return CandidateSets(common, priority["left"], priority["right"], effective["left"], effective["right"])


@dataclass(frozen=True)
class Proposal:
    """A tentative stage: at most one node per arm, or one two-arm node."""

    left: str | None = None
    right: str | None = None
    joint: str | None = None

    def node_ids(self) -> tuple[str, ...]:
        return tuple(v for v in (self.left, self.right, self.joint) if v is not None)

    def assignments(self) -> list[tuple[Arm | Literal["both"], str]]:
        if self.joint is not None:
            return [("both", self.joint)]
        out: list[tuple[Arm | Literal["both"], str]] = []
        if self.left is not None:
            out.append(("left", self.left))
        if self.right is not None:
            out.append(("right", self.right))
        return out


@dataclass(frozen=True)
class Violation:
    """Why a proposal was filtered: ``rule`` is R1, R2, R3, ACROSS or REACHABLE."""

    rule: str
    witness: tuple[str, ...] = ()
    distance: float | None = None

    def __str__(self) -> str:
        if self.distance is not None:
            return f"{self.rule} ({self.distance:.3f} m)"
        return f"{self.rule} [{', '.join(self.witness)}]"


def _post_ownership(index: _Index, ownership: Ownership, proposal: Proposal) -> dict[str, Owner]:
    post = dict(ownership)
    for arm, nid in proposal.assignments():
        kind = index.graph[nid].task_type
        if kind is TaskType.OCCUPY:
            post[nid] = arm
        elif kind is TaskType.RELEASE:
            post.pop(index.pair_of[nid], None)
    return post


def dependency_check(
    graph: TaskGraph,
    status: Mapping[str, NodeStatus],
    ownership: Ownership,
    proposal: Proposal,
    pairs: Iterable[OccupyReleasePair] | None = None,
) -> Violation | None:
    """Reject exactly the proposals after which the task can no longer finish.

    The decision is a memoized search over (done set, pair held per arm): any
    dual schedule can be serialized, so one node per step suffices. A rejection
    is labelled with the first structural cause that explains it:

    R1: a grasp whose release still waits on a two-arm node outside the pair
    (or, for a two-arm grasp, on anything outside the pair).
    R2: both arms hold, and neither pair can finish on its own while the other
    avoids two-arm work.
    R3: any other dead end, such as a held object whose release waits on a
    chain of grasps that needs more free arms than remain.

    R1 always implies a dead end. R2 does not: two interlocked pairs can still
    finish when each arm advances the other's prerequisites, so a live state
    is accepted even when the R2 pattern matches.
    """
    index = _index(graph, pairs)
    done = {v for v, s in status.items() if s is NodeStatus.DONE} | set(proposal.node_ids())
    post = _post_ownership(index, ownership, proposal)
    left = sorted(pid for pid, who in post.items() if who == "left")
    right = sorted(pid for pid, who in post.items() if who == "right")
    joint = [pid for pid, who in post.items() if who == "both"]
    held_l = joint[0] if joint else (left[0] if left else None)
    held_r = joint[0] if joint else (right[0] if right else None)
    if index.completable(frozenset(done) & index.work, held_l, held_r):
        return None

    def pending(pid: str) -> list[str]:
        return sorted(v for v in index.external[pid] if v not in done)

    def needs_two(pid: str) -> list[str]:
        return [v for v in pending(pid) if graph[v].arms_required == 2]

    for arm, nid in proposal.assignments():
        if graph[nid].task_type is not TaskType.OCCUPY:
            continue
        blockers = pending(nid) if arm == "both" else needs_two(nid)
        if blockers:
            return Violation("R1", (nid, *blockers))
    if left and right:
        pl, pr = left[0], right[0]
        if not ((not pending(pl) and not needs_two(pr)) or (not pending(pr) and not needs_two(pl))):
            return Violation("R2", (pl, pr))
    return Violation("R3", proposal.node_ids())


def geometry_checks(world: WorldState, left_node, right_node, config: PlannerConfig) -> Violation | None:
    if left_node is None or right_node is None:
        return None
    if TaskType.COMPLETE in (left_node.task_type, right_node.task_type):
        return None
    distance = math.dist(target_position(world, left_node), target_position(world, right_node))
    if distance <= config.d_across:
        return Violation("ACROSS", (left_node.id, right_node.id), distance)
    if distance > config.d_reachable:
        return Violation("REACHABLE", (left_node.id, right_node.id), distance)
    return None


def pair_cost(world: WorldState, left_node, right_node) -> float:
    """Summed hand-to-target distance; an idle arm contributes nothing."""
    cost = 0.0
    if left_node is not None:
        cost += hand_distance(world, "left", left_node)
    if right_node is not None:
        cost += hand_distance(world, "right", right_node)
    return cost


@dataclass(frozen=True)
class Rejection:
    left: str | None
    right: str | None
    reason: str


@dataclass(frozen=True)
class StagePlan:
    left: str | None = None
    right: str | None = None
    joint: str | None = None
    cost: float = 0.0
    left_cost: float = 0.0
    right_cost: float = 0.0
    terminal: bool = False
    rejected: tuple[Rejection, ...] = ()
    # every surviving option as (left, right, joint, cost)
    survivors: tuple[tuple[str | None, str | None, str | None, float], ...] = ()

    @property
    def proposal(self) -> Proposal:
        return Proposal(self.left, self.right, self.joint)

    def node_ids(self) -> tuple[str, ...]:
        return self.proposal.node_ids()


class NoFeasibleAssignment(Exception):
    code = "NO_FEASIBLE_ASSIGNMENT"

    def __init__(self, rejected: Iterable[Rejection]) -> None:
        self.rejected = tuple(rejected)
        super().__init__(f"no feasible assignment ({len(self.rejected)} options rejected)")


def _sort_key(cost: float, left: str | None, right: str | None):
    return (round(cost, 9), left is None, left or "", right is None, right or "")


def select_stage(
    graph: TaskGraph,
    status: Mapping[str, NodeStatus],
    ownership: Ownership,
    world: WorldState,
    holdings: ArmHoldings,
    config: PlannerConfig,
    pairs: Iterable[OccupyReleasePair] | None = None,
) -> StagePlan:
    index = _index(graph, pairs)
    open_nodes = [v for v, s in status.items() if s is not NodeStatus.DONE]
    if len(open_nodes) == 1 and graph[open_nodes[0]].task_type is TaskType.COMPLETE:
        return StagePlan(joint=open_nodes[0], terminal=True)

    cands = compute_candidates(graph, status, ownership, index.pairs.values())
    both_free = holdings.left.free and holdings.right.free
    rejected: list[Rejection] = []
    options: list[tuple[tuple, StagePlan]] = []

    def consider(proposal: Proposal, check_geometry: bool) -> None:
        left = graph[proposal.left] if proposal.left else None
        right = graph[proposal.right] if proposal.right else None
        violation = dependency_check(graph, status, ownership, proposal, index.pairs.values())
        if violation is None and check_geometry:
            violation = geometry_checks(world, left, right, config)
        shown_l = proposal.left or proposal.joint
        shown_r = proposal.right or proposal.joint
        if violation is not None:
            rejected.append(Rejection(shown_l, shown_r, str(violation)))
            return
        if proposal.joint is not None:
            node = graph[proposal.joint]
            lc, rc = hand_distance(world, "left", node), hand_distance(world, "right", node)
        else:
            lc = hand_distance(world, "left", left) if left else 0.0
            rc = hand_distance(world, "right", right) if right else 0.0
        plan = StagePlan(proposal.left, proposal.right, proposal.joint, lc + rc, lc, rc)
        options.append((_sort_key(lc + rc, shown_l, shown_r), plan))

    one_arm = lambda v: graph[v].arms_required == 1  # noqa: E731
    lefts = sorted(filter(one_arm, cands.effective_left))
    rights = sorted(filter(one_arm, cands.effective_right))
    for lv in lefts:
        for rv in rights:
            if lv != rv:
                consider(Proposal(left=lv, right=rv), check_geometry=True)
    for v in sorted(cands.common):
        node = graph[v]
        if node.arms_required != 2 or node.task_type is TaskType.COMPLETE:
            continue
        pid = index.pair_of.get(v)
        if (pid is not None and ownership.get(pid) == "both") or (pid is None and both_free) or (
            node.task_type is TaskType.OCCUPY and both_free
        ):
            consider(Proposal(joint=v), check_geometry=False)

    if not options and config.allow_idle_arm:
        for lv in lefts:
            consider(Proposal(left=lv), check_geometry=False)
        for rv in rights:
            consider(Proposal(right=rv), check_geometry=False)

    if not options:
        raise NoFeasibleAssignment(rejected)
    options.sort(key=lambda item: item[0])
    best = options[0][1]
    survivors = tuple((p.left, p.right, p.joint, p.cost) for _, p in options)
    return StagePlan(
        best.left, best.right, best.joint, best.cost, best.left_cost, best.right_cost,
        rejected=tuple(rejected), survivors=survivors,
    )


# ---------------------------------------------------------------------------
# Execution loop


@dataclass(frozen=True)
class StageRecord:
    index: int
    plan: StagePlan
    world_before: WorldState
    world_after: WorldState
    holdings_after: ArmHoldings

    def to_dict(self) -> dict:
        plan = self.plan

        def slot(nid: str | None, cost: float) -> dict | None:
            return None if nid is None else {"node": nid, "cost_m": round(cost, 6)}

        return {
            "stage": self.index,
            "left": slot(plan.left, plan.left_cost),
            "right": slot(plan.right, plan.right_cost),
            "joint": slot(plan.joint, plan.cost),
            "terminal": plan.terminal,
            "rejected": [{"left": r.left, "right": r.right, "reason": r.reason} for r in plan.rejected],
            "world_after_digest": self.world_after.digest(),
        }


@dataclass
class ExecutionTrace:
    stages: list[StageRecord] = field(default_factory=list)
    final_status: dict[str, NodeStatus] = field(default_factory=dict)
    outcome: Literal["completed", "deadlock", "infeasible"] = "completed"
    failure: tuple[Rejection, ...] = ()

    @property
    def stage_count(self) -> int:
        """Stages that executed real sub-tasks (the terminal no-op is excluded)."""
        return sum(1 for s in self.stages if not s.plan.terminal)

    def assignments(self) -> list[tuple[str | None, str | None, str | None]]:
        return [(s.plan.left, s.plan.right, s.plan.joint) for s in self.stages if not s.plan.terminal]

    def to_jsonl(self) -> str:
        lines = [json.dumps(s.to_dict(), sort_keys=True) for s in self.stages]
        return "".join(line + "\n" for line in lines)


def run_inference(graph: TaskGraph, world: WorldState, config: PlannerConfig = PlannerConfig()) -> ExecutionTrace:
    report = validate_graph(graph)
    if not report.ok:
        raise ValueError(f"graph is not valid: {', '.join(report.codes())}")
    index = _index(graph)
    pairs = list(index.pairs.values())
    status = initial_status(graph)
    ownership: dict[str, Owner] = {}
    holdings = ArmHoldings()
    trace = ExecutionTrace()

    while any(s is not NodeStatus.DONE for s in status.values()):
        try:
            plan = select_stage(graph, status, ownership, world, holdings, config, pairs)
        except NoFeasibleAssignment as exc:
            trace.outcome = "deadlock" if not (holdings.left.free and holdings.right.free) else "infeasible"
            trace.failure = exc.rejected
            break
        proposal = plan.proposal
        steps = [(arm, graph[nid]) for arm, nid in proposal.assignments()]
        new_world, holdings = apply_stage_effects(world, holdings, steps)
        ownership = _post_ownership(index, ownership, proposal)
        status = mark_done(status, graph, proposal.node_ids())
        trace.stages.append(StageRecord(len(trace.stages) + 1, plan, world, new_world, holdings))
        world = new_world
    trace.final_status = status
    return trace


class SingleArmPlan(NamedTuple):
    stage_count: int
    order: tuple[str, ...]


def single_arm_plan(graph: TaskGraph) -> SingleArmPlan:
    """One node per stage in lexicographic topological order."""
    status = initial_status(graph)
    order: list[str] = []
    while True:
        ready = sorted(v for v in ready_nodes(graph, status) if graph[v].task_type is not TaskType.COMPLETE)
        if not ready:
            break
        order.append(ready[0])
        status = mark_done(status, graph, [ready[0]])
    return SingleArmPlan(len(order), tuple(order))


def stage_efficiency(per_task: Iterable[tuple[int, int]]) -> float:
    """Mean of single-arm stages over method stages, as a percentage."""
    ratios = []
    for single, method in per_task:
        if method < 1:
            raise ValueError("method stage counts must be at least 1")
        ratios.append(single / method)
    if not ratios:
        raise ValueError("no tasks given")
    return 100.0 * sum(ratios) / len(ratios)
