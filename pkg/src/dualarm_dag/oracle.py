"""Breadth-first search for the fewest stages any legal dual-arm schedule needs.

Only physical rules constrain the search: a holding arm may work solely on
its own pair, a free arm may grasp or operate, two-arm nodes need both arms
(free, or jointly holding their pair), and simultaneous single-arm targets
must sit inside the distance band. The planner's priority narrowing and
deadlock filters are deliberately not applied, so the result is a true lower
bound on what the planner can achieve. Dead ends simply never reach the goal.
"""

from __future__ import annotations

import math
from collections.abc import Iterator

from .graph import TaskGraph, TaskType, extract_pairs
from .planner import PlannerConfig
from .world import ARMS, ArmHoldings, Grip, WorldState, apply_stage_effects, target_position

# per-arm grip as the pair id held, or None; a joint grasp appears on both arms
_Key = tuple[frozenset, str | None, str | None]


class _Search:
    def __init__(self, graph: TaskGraph, world: WorldState, config: PlannerConfig) -> None:
        self.graph = graph
        self.config = config
        self.world0 = world
        self.pairs = {p.occupy_id: p for p in extract_pairs(graph)}
        self.owner_pair = {nid: pid for pid, p in self.pairs.items() for nid in p.path_ids}
        self.work = frozenset(v for v, n in graph.nodes.items() if n.task_type is not TaskType.COMPLETE)

    def ready(self, done: frozenset) -> list[str]:
        g = self.graph
        return sorted(
            v for v in self.work - done
            if all(p in done for p in g.predecessors(v))
        )

    def moves(self, key: _Key, world: WorldState) -> Iterator[tuple[tuple[str, str], ...]]:
        done, held_l, held_r = key
        g = self.graph
        ready = self.ready(done)
        joint_hold = held_l is not None and held_l == held_r
        per_arm: dict[str, list[str]] = {}
        for arm, mine in (("left", held_l), ("right", held_r)):
            options = []
            for v in ready:
                node = g[v]
                if node.arms_required != 1 or joint_hold:
                    continue
                pid = self.owner_pair.get(v)
                if mine is not None:
                    if pid == mine:
                        options.append(v)
                elif pid is None or pid == v:
                    # free arm: unpaired Operate, or a grasp
                    if node.task_type in (TaskType.OCCUPY, TaskType.OPERATE):
                        options.append(v)
                # a free arm can never touch a pair held by the other arm
            per_arm[arm] = options

        for lv in per_arm["left"]:
            for rv in per_arm["right"]:
                if lv != rv and self._band_ok(world, lv, rv):
                    yield (("left", lv), ("right", rv))
        for lv in per_arm["left"]:
            yield (("left", lv),)
        for rv in per_arm["right"]:
            yield (("right", rv),)
        for v in ready:
            node = g[v]
            if node.arms_required != 2:
                continue
            pid = self.owner_pair.get(v)
            if joint_hold and pid == held_l:
                yield (("both", v),)
            elif held_l is None and held_r is None and (pid is None or pid == v):
                yield (("both", v),)

    def _band_ok(self, world: WorldState, lv: str, rv: str) -> bool:
        d = math.dist(target_position(world, self.graph[lv]), target_position(world, self.graph[rv]))
        return self.config.d_across < d <= self.config.d_reachable

    def step(self, key: _Key, world: WorldState, move) -> tuple[_Key, WorldState]:
        done, held_l, held_r = key
        holdings = ArmHoldings()
        grips = {"left": held_l, "right": held_r}
        for arm in ARMS:
            pid = grips[arm]
            if pid is not None:
                holdings = holdings.with_grip(arm, Grip("holding", self.pairs[pid].object_name))
        steps = [(arm, self.graph[v]) for arm, v in move]
        new_world, _ = apply_stage_effects(world, holdings, steps)
        for arm, v in move:
            kind = self.graph[v].task_type
            arms = ARMS if arm == "both" else (arm,)
            for one in arms:
                if kind is TaskType.OCCUPY:
                    grips[one] = v
                elif kind is TaskType.RELEASE:
                    grips[one] = None
        new_done = done | {v for _, v in move}
        return (new_done, grips["left"], grips["right"]), new_world


def optimal_stage_oracle(
    graph: TaskGraph,
    world: WorldState,
    config: PlannerConfig = PlannerConfig(),
    stage_budget: int | None = None,
    *,
    start: tuple[frozenset, str | None, str | None, WorldState] | None = None,
) -> int | None:
    """Minimum number of non-terminal stages, or ``None`` if none is found.

    With ``stage_budget`` at least the number of remaining sub-tasks, ``None``
    proves that no completing schedule exists. ``start`` resumes from
    ``(done ids, left pair id, right pair id, world)`` instead of the initial
    state.
    """
    search = _Search(graph, world, config)
    if start is None:
        key: _Key = (frozenset(), None, None)
        world0 = world
    else:
        key = (frozenset(start[0]) & search.work, start[1], start[2])
        world0 = start[3]
    budget = len(search.work) if stage_budget is None else stage_budget
    if key[0] == search.work:
        return 0
    frontier = {key: world0}
    seen = {key}
    depth = 0
    while frontier and depth < budget:
        depth += 1
        nxt: dict[_Key, WorldState] = {}
        for state in sorted(frontier, key=_order):
            w = frontier[state]
            for move in search.moves(state, w):
                new_key, new_world = search.step(state, w, move)
                if new_key in seen:
                    continue
                if new_key[0] == search.work and new_key[1] is None and new_key[2] is None:
                    return depth
                seen.add(new_key)
                nxt[new_key] = new_world
        frontier = nxt
    return None


def _order(key: _Key):
    done, left, right = key
    return (sorted(done), left or "", right or "")
