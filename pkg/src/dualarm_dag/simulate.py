"""Wall-clock replay of a stage trace.

Both arms finish a stage together, so a stage lasts as long as its slowest
node. Durations are nominal per-type values, not measured skill times.
"""

from __future__ import annotations

from collections.abc import Mapping
from dataclasses import dataclass

from .graph import TaskGraph, TaskType
from .planner import ExecutionTrace

DEFAULT_DURATIONS_S: Mapping[TaskType, float] = {
    TaskType.OCCUPY: 4.0,
    TaskType.TOOL_USE: 6.0,
    TaskType.RELEASE: 3.0,
    TaskType.OPERATE: 5.0,
    TaskType.COMPLETE: 0.0,
}


@dataclass(frozen=True)
class StageTiming:
    index: int
    start_s: float
    end_s: float
    node_ids: tuple[str, ...]


def parse_duration_overrides(items: list[str]) -> dict[TaskType, float]:
    """``["Occupy=2.5", ...]`` to a duration table based on the defaults."""
    table = dict(DEFAULT_DURATIONS_S)
    for item in items:
        name, sep, value = item.partition("=")
        try:
            kind = TaskType(name.strip())
            seconds = float(value)
        except ValueError:
            raise ValueError(f"bad duration {item!r}; expected TYPE=SECONDS") from None
        if not sep or seconds < 0:
            raise ValueError(f"bad duration {item!r}; expected TYPE=SECONDS")
        table[kind] = seconds
    return table


def simulate_timeline(
    trace: ExecutionTrace, graph: TaskGraph, durations: Mapping[TaskType, float] = DEFAULT_DURATIONS_S
) -> tuple[StageTiming, ...]:
    out: list[StageTiming] = []
    clock = 0.0
    for stage in trace.stages:
        if stage.plan.terminal:
            continue
        ids = stage.plan.node_ids()
        length = max((durations[graph[nid].task_type] for nid in ids), default=0.0)
        out.append(StageTiming(stage.index, clock, clock + length, ids))
        clock += length
    return tuple(out)
