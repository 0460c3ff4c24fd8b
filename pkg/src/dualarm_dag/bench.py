"""The five-task kitchen benchmark: fixtures, stage counts and stage efficiency."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass
from importlib import resources
from pathlib import Path

from .graph import ValidationReport, validate_graph
from .graphio import GraphDocument, load_document
from .oracle import optimal_stage_oracle
from .planner import PlannerConfig, run_inference, single_arm_plan, stage_efficiency
from .world import WorldState, load_world

ORACLE_MAX_NODES = 14


class FixtureInvalidError(ValueError):
    code = "FIXTURE_INVALID"

    def __init__(self, task_id: str, report: ValidationReport) -> None:
        self.task_id = task_id
        self.report = report
        super().__init__(f"fixture {task_id} is invalid: {', '.join(report.codes())}")


@dataclass(frozen=True)
class BenchmarkTask:
    task_id: str
    name: str
    instruction: str
    graph_path: Path
    world_path: Path
    expected_single_stages: int
    expected_dual_stages: int

    def load(self) -> tuple[GraphDocument, WorldState]:
        return load_document(self.graph_path), load_world(self.world_path)


def _fixture(name: str) -> Path:
    return Path(str(resources.files("dualarm_dag").joinpath("fixtures").joinpath(name)))


def _task(k: int, name: str, instruction: str, single: int, dual: int) -> BenchmarkTask:
    return BenchmarkTask(
        f"task{k}",
        name,
        instruction,
        _fixture(f"task{k}.taskgraph.json"),
        _fixture(f"task{k}.world.json"),
        single,
        dual,
    )


BENCHMARK_TASKS: tuple[BenchmarkTask, ...] = (
    _task(1, "Clean the table (Easy)", "Clean the table. Put objects into plate.", 8, 4),
    _task(
        2,
        "Clean the table (Hard)",
        "Clean the table. The fruits should into the plate. The table should be wiped by sponge. "
        "The mug and sponge should in drawer.",
        11,
        7,
    ),
    _task(
        3,
        "Stack bowls",
        "Stack the bowls onto the wooden tray with the green bowl, blue bowl and yellow bowl order.",
        6,
        4,
    ),
    _task(
        4,
        "Make cup of coffee",
        "Make a cup of coffee. You should add the coffee, water and milk in order. "
        "Finally, stir it with the spoon.",
        12,
        7,
    ),
    _task(5, "Boil vegetables", "Boil vegetables. Pour water and put vegetables into the pot.", 7, 4),
)


@dataclass(frozen=True)
class TaskResult:
    task_id: str
    name: str
    nodes: int
    single_stages: int
    dual_stages: int
    oracle_stages: int | None
    outcome: str
    expected_single_stages: int
    expected_dual_stages: int


@dataclass(frozen=True)
class BenchReport:
    tasks: tuple[TaskResult, ...]
    stage_efficiency_pct: float

    @property
    def ok(self) -> bool:
        """False when any task failed or needed more dual stages than expected."""
        return all(t.outcome == "completed" and t.dual_stages <= t.expected_dual_stages for t in self.tasks)

    def to_dict(self) -> dict:
        return {
            "tasks": [asdict(t) for t in self.tasks],
            "stage_efficiency_pct": round(self.stage_efficiency_pct, 4),
            "ok": self.ok,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"

    def to_table(self) -> str:
        header = f"{'task':<6} {'name':<24} {'nodes':>5} {'single':>6} {'dual':>5} {'oracle':>6}  outcome"
        rows = [header, "-" * len(header)]
        for t in self.tasks:
            oracle = "-" if t.oracle_stages is None else str(t.oracle_stages)
            rows.append(
                f"{t.task_id:<6} {t.name:<24} {t.nodes:>5} {t.single_stages:>6} {t.dual_stages:>5} {oracle:>6}  {t.outcome}"
            )
        rows.append(f"stage efficiency: {self.stage_efficiency_pct:.1f}%")
        return "\n".join(rows) + "\n"


def run_task(task: BenchmarkTask, config: PlannerConfig) -> TaskResult:
    doc, world = task.load()
    graph = doc.graph
    report = validate_graph(graph)
    if not report.ok:
        raise FixtureInvalidError(task.task_id, report)
    single = single_arm_plan(graph).stage_count
    trace = run_inference(graph, world, config)
    dual = trace.stage_count if trace.outcome == "completed" else single
    work = len(graph) - len(graph.complete_ids())
    oracle = optimal_stage_oracle(graph, world, config) if len(graph) <= ORACLE_MAX_NODES else None
    return TaskResult(
        task.task_id, task.name, work, single, dual, oracle, trace.outcome,
        task.expected_single_stages, task.expected_dual_stages,
    )


def run_benchmark(
    config: PlannerConfig = PlannerConfig(),
    tasks: tuple[BenchmarkTask, ...] = BENCHMARK_TASKS,
) -> BenchReport:
    """Plan every task; a failed dual run counts at its single-arm stage count."""
    results = tuple(run_task(task, config) for task in sorted(tasks, key=lambda t: t.task_id))
    efficiency = stage_efficiency((r.single_stages, r.dual_stages) for r in results)
    return BenchReport(results, efficiency)
