"""Symbolic world: object poses, hand poses, grips and per-type node effects."""

from __future__ import annotations

import hashlib
import json
import math
from collections.abc import Iterable, Mapping
from dataclasses import dataclass, field, replace
from pathlib import Path
from types import MappingProxyType
from typing import Literal

from .graph import TaskNode, TaskType

Arm = Literal["left", "right"]
ARMS: tuple[Arm, Arm] = ("left", "right")
Position = tuple[float, float, float]


class WorldError(Exception):
    code = "WORLD_ERROR"


class UnknownObjectError(WorldError, KeyError):
    code = "UNKNOWN_OBJECT"

    def __str__(self) -> str:  # KeyError would repr() the message
        return str(self.args[0]) if self.args else self.code


class ArmNotEligibleError(WorldError):
    code = "ARM_NOT_ELIGIBLE"


def _pos(value: Iterable[float]) -> Position:
    x, y, z = (float(v) for v in value)
    return (x, y, z)


@dataclass(frozen=True)
class WorldState:
    objects: Mapping[str, Position]
    left_hand: Position
    right_hand: Position
    containers: Mapping[str, str | None] = field(default_factory=dict)
    articulation: Mapping[str, str] = field(default_factory=dict)

    def __post_init__(self) -> None:
        object.__setattr__(self, "objects", MappingProxyType({k: _pos(v) for k, v in sorted(self.objects.items())}))
        object.__setattr__(self, "containers", MappingProxyType(dict(sorted(self.containers.items()))))
        object.__setattr__(self, "articulation", MappingProxyType(dict(sorted(self.articulation.items()))))
        object.__setattr__(self, "left_hand", _pos(self.left_hand))
        object.__setattr__(self, "right_hand", _pos(self.right_hand))

    def hand(self, arm: Arm) -> Position:
        return self.left_hand if arm == "left" else self.right_hand

    def position(self, name: str) -> Position:
        try:
            return self.objects[name]
        except KeyError:
            raise UnknownObjectError(f"object {name!r} is not in the world") from None

    def to_dict(self) -> dict:
        return {
            "objects": {k: list(v) for k, v in self.objects.items()},
            "containers": {k: v for k, v in self.containers.items() if v is not None},
            "articulation": dict(self.articulation),
            "left_hand": list(self.left_hand),
            "right_hand": list(self.right_hand),
        }

    @classmethod
    def from_dict(cls, data: Mapping) -> WorldState:
        return cls(
            objects={k: _pos(v) for k, v in data["objects"].items()},
            left_hand=_pos(data["left_hand"]),
            right_hand=_pos(data["right_hand"]),
            containers=dict(data.get("containers", {})),
            articulation=dict(data.get("articulation", {})),
        )

    def digest(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode("utf-8")).hexdigest()[:16]


def load_world(path: str | Path) -> WorldState:
    return WorldState.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))


@dataclass(frozen=True)
class Grip:
    """What one gripper holds: ``kind`` is ``free``, ``holding`` or ``tool``."""

    kind: Literal["free", "holding", "tool"] = "free"
    name: str | None = None

    @property
    def free(self) -> bool:
        return self.kind == "free"

    def __str__(self) -> str:
        if self.free:
            return "Free"
        return f"{'Holding' if self.kind == 'holding' else 'HoldingTool'}({self.name})"


FREE = Grip()


@dataclass(frozen=True)
class ArmHoldings:
    left: Grip = FREE
    right: Grip = FREE

    def __getitem__(self, arm: Arm) -> Grip:
        return self.left if arm == "left" else self.right

    def with_grip(self, arm: Arm, grip: Grip) -> ArmHoldings:
        return replace(self, **{arm: grip})

    def held(self, arm: Arm) -> str | None:
        return self[arm].name


def target_position(world: WorldState, node: TaskNode) -> Position:
    if node.task_type is TaskType.COMPLETE:
        raise ValueError("the Complete node has no target")
    return world.position(node.target_object)


def hand_distance(world: WorldState, arm: Arm, node: TaskNode) -> float:
    if node.task_type is TaskType.COMPLETE:
        return 0.0
    return math.dist(world.hand(arm), target_position(world, node))


def _midpoint(a: Position, b: Position) -> Position:
    return ((a[0] + b[0]) / 2, (a[1] + b[1]) / 2, (a[2] + b[2]) / 2)


def apply_stage_effects(
    world: WorldState,
    holdings: ArmHoldings,
    assignments: Iterable[tuple[Arm | Literal["both"], TaskNode]],
) -> tuple[WorldState, ArmHoldings]:
    """Apply one stage's assignments and return the new (world, holdings).

    ``"both"`` marks a two-arm node. Eligibility is checked against the
    holdings at stage start for every assignment before anything is applied.
    """
    assignments = list(assignments)
    for arm, node in assignments:
        for one in ARMS if arm == "both" else (arm,):
            _check_eligible(holdings[one], node, one)

    objects = dict(world.objects)
    containers = dict(world.containers)
    articulation = dict(world.articulation)
    out = holdings
    for arm, node in assignments:
        kind = node.task_type
        arms: tuple[Arm, ...] = ARMS if arm == "both" else (arm,)
        if kind is TaskType.COMPLETE:
            continue
        if node.target_object not in objects:
            raise UnknownObjectError(f"object {node.target_object!r} is not in the world")
        if kind is TaskType.OCCUPY:
            grip = Grip("holding", node.target_object)
            for one in arms:
                out = out.with_grip(one, grip)
            hand = world.hand(arms[0]) if len(arms) == 1 else _midpoint(world.left_hand, world.right_hand)
            objects[node.target_object] = hand
            containers.pop(node.target_object, None)
        elif kind is TaskType.TOOL_USE:
            for one in arms:
                out = out.with_grip(one, Grip("tool", node.tool))
        elif kind is TaskType.RELEASE:
            dest = node.destination
            if dest is not None:
                if dest not in objects:
                    raise UnknownObjectError(f"destination {dest!r} is not in the world")
                objects[node.target_object] = objects[dest]
                containers[node.target_object] = dest
            for one in arms:
                out = out.with_grip(one, FREE)
        elif kind is TaskType.OPERATE:
            name = node.target_object
            if name in articulation:
                articulation[name] = "closed" if articulation[name] == "open" else "open"
    new_world = WorldState(objects, world.left_hand, world.right_hand, containers, articulation)
    return new_world, out


def _check_eligible(grip: Grip, node: TaskNode, arm: str) -> None:
    kind = node.task_type
    if kind is TaskType.COMPLETE:
        return
    if kind is TaskType.OCCUPY:
        ok = grip.free
    elif kind is TaskType.TOOL_USE:
        ok = not grip.free and grip.name == node.tool
    elif kind is TaskType.RELEASE:
        ok = not grip.free and grip.name == node.target_object
    else:
        # Operate: a free arm, or the holding arm working on its own object
        ok = grip.free or grip.name == node.target_object
    if not ok:
        raise ArmNotEligibleError(f"{arm} arm ({grip}) cannot execute {kind.value} node {node.id!r}")
