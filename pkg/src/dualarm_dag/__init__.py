"""Typed task DAGs for dual-arm manipulation and a stage-by-stage dual-arm planner."""

from __future__ import annotations

from .graph import (
    NodeStatus,
    NotReadyError,
    OccupyReleasePair,
    PairingError,
    TaskGraph,
    TaskNode,
    TaskType,
    ValidationIssue,
    ValidationReport,
    extract_pairs,
    initial_status,
    mark_done,
    out_of_path_ancestors,
    ready_nodes,
    validate_graph,
)
from .graphio import (
    GraphDocument,
    GraphParseError,
    NoPayloadError,
    ParseDiagnostic,
    export_dot,
    extract_graph_payload,
    load_document,
    parse_task_graph,
    parse_with_diagnostics,
    serialize_task_graph,
)
from .oracle import optimal_stage_oracle
from .planner import (
    PERMISSIVE,
    ExecutionTrace,
    NoFeasibleAssignment,
    PlannerConfig,
    Proposal,
    StagePlan,
    compute_candidates,
    dependency_check,
    geometry_checks,
    pair_cost,
    run_inference,
    select_stage,
    single_arm_plan,
    stage_efficiency,
)
from .simulate import DEFAULT_DURATIONS_S, StageTiming, simulate_timeline
from .world import ArmHoldings, Grip, WorldState, apply_stage_effects, hand_distance, load_world

__version__ = "0.1.0"

__all__ = [
    "ArmHoldings",
    "DEFAULT_DURATIONS_S",
    "ExecutionTrace",
    "GraphDocument",
    "GraphParseError",
    "Grip",
    "NoFeasibleAssignment",
    "NoPayloadError",
    "NodeStatus",
    "NotReadyError",
    "OccupyReleasePair",
    "PERMISSIVE",
    "PairingError",
    "ParseDiagnostic",
    "PlannerConfig",
    "Proposal",
    "StagePlan",
    "StageTiming",
    "TaskGraph",
    "TaskNode",
    "TaskType",
    "ValidationIssue",
    "ValidationReport",
    "WorldState",
    "apply_stage_effects",
    "compute_candidates",
    "dependency_check",
    "export_dot",
    "extract_graph_payload",
    "extract_pairs",
    "geometry_checks",
    "hand_distance",
    "initial_status",
    "load_document",
    "load_world",
    "mark_done",
    "optimal_stage_oracle",
    "out_of_path_ancestors",
    "pair_cost",
    "parse_task_graph",
    "parse_with_diagnostics",
    "ready_nodes",
    "run_inference",
    "select_stage",
    "serialize_task_graph",
    "simulate_timeline",
    "single_arm_plan",
    "stage_efficiency",
    "validate_graph",
]
