"""Small graph builders and fixture loaders shared by the test modules."""

from __future__ import annotations

from dualarm_dag.bench import BENCHMARK_TASKS
from dualarm_dag.graph import TaskGraph, TaskNode, TaskType
from dualarm_dag.graphio import GraphDocument
from dualarm_dag.world import WorldState

LEFT_HAND = (-0.15, 0.3, 0.2)
RIGHT_HAND = (0.15, 0.3, 0.2)


def occupy(nid: str, obj: str, arms: int = 1) -> TaskNode:
    return TaskNode(nid, TaskType.OCCUPY, f"grasp {obj}", arms, obj)


def release(nid: str, obj: str, dest: str | None = None, arms: int = 1) -> TaskNode:
    return TaskNode(nid, TaskType.RELEASE, f"place {obj}", arms, obj, destination=dest)


def tool_use(nid: str, target: str, tool: str, arms: int = 1) -> TaskNode:
    return TaskNode(nid, TaskType.TOOL_USE, f"use {tool} on {target}", arms, target, tool=tool)


def operate(nid: str, obj: str, arms: int = 1) -> TaskNode:
    return TaskNode(nid, TaskType.OPERATE, f"operate {obj}", arms, obj)


def complete(nid: str = "complete") -> TaskNode:
    return TaskNode(nid, TaskType.COMPLETE, "task finished")


def minimal_pair() -> TaskGraph:
    return TaskGraph(
        [occupy("grasp-apple", "apple"), release("place-apple", "apple", "plate"), complete()],
        [("grasp-apple", "place-apple"), ("place-apple", "complete")],
    )


def task(k: int) -> tuple[GraphDocument, WorldState]:
    return BENCHMARK_TASKS[k - 1].load()


def world_for(graph: TaskGraph, positions: dict[str, tuple[float, float, float]] | None = None) -> WorldState:
    """A world placing every named object at ``positions`` or on a default grid."""
    names = sorted({n for node in graph.nodes.values() for n in (node.target_object, node.tool, node.destination) if n})
    objects = {name: (0.1 * k, 0.5, 0.0) for k, name in enumerate(names)}
    objects.update(positions or {})
    return WorldState(objects, LEFT_HAND, RIGHT_HAND)
