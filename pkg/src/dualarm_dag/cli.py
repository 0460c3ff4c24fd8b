"""Command-line entry point.

Exit codes: 0 success, 1 invalid graph or input, 2 planning failure or
benchmark regression, 3 provider failure.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from .bench import FixtureInvalidError, run_benchmark
from .config import ConfigError, load_config
from .generator import (
    GenerationFailure,
    GenerationRequest,
    HttpProvider,
    MockProvider,
    ProviderError,
    generate_graph,
    write_exchange_log,
)
from .graph import validate_graph
from .graphio import export_dot, parse_with_diagnostics, serialize_task_graph
from .planner import run_inference
from .simulate import parse_duration_overrides, simulate_timeline
from .world import WorldError, load_world

EXIT_OK = 0
EXIT_INVALID = 1
EXIT_PLANNING = 2
EXIT_PROVIDER = 3


def _err(msg: str) -> None:
    print(msg, file=sys.stderr)


def _read_graph(path: str):
    """Parse and validate; prints diagnostics and returns None on any error."""
    try:
        data = Path(path).read_bytes()
    except OSError as exc:
        _err(f"{path}: {exc}")
        return None
    doc, diags = parse_with_diagnostics(data)
    for d in diags:
        _err(f"{path}:{d}")
    if doc is None:
        return None
    report = validate_graph(doc.graph)
    for issue in report.warnings:
        _err(f"{path}: warning {issue.code} [{', '.join(issue.node_ids)}]: {issue.message}")
    for issue in report.errors:
        _err(f"{path}: error {issue.code} [{', '.join(issue.node_ids)}]: {issue.message}")
    return doc if report.ok else None


def cmd_validate(args: argparse.Namespace) -> int:
    doc = _read_graph(args.graph)
    if doc is None:
        return EXIT_INVALID
    print(f"{args.graph}: ok ({len(doc.graph)} nodes, {len(doc.graph.edges)} edges)")
    return EXIT_OK


def _run_plan(args: argparse.Namespace):
    """(doc, trace) or an exit code."""
    try:
        config = load_config(args.config)
    except ConfigError as exc:
        _err(str(exc))
        return EXIT_INVALID
    doc = _read_graph(args.graph)
    if doc is None:
        return EXIT_INVALID
    try:
        world = load_world(args.world)
        trace = run_inference(doc.graph, world, config.planner)
    except (OSError, ValueError, KeyError, WorldError) as exc:
        _err(f"cannot plan: {exc}")
        return EXIT_INVALID
    return doc, trace


def _planning_failed(trace) -> bool:
    if trace.outcome == "completed":
        return False
    for r in trace.failure:
        _err(f"rejected left={r.left} right={r.right}: {r.reason}")
    return True


def cmd_plan(args: argparse.Namespace) -> int:
    result = _run_plan(args)
    if isinstance(result, int):
        return result
    doc, trace = result
    for stage in trace.stages:
        p = stage.plan
        if p.terminal:
            continue
        if p.joint:
            print(f"stage {stage.index}: both={p.joint}")
        else:
            print(f"stage {stage.index}: left={p.left or '-'} right={p.right or '-'}")
    print(f"outcome: {trace.outcome}, stages: {trace.stage_count}")
    if args.trace:
        Path(args.trace).write_text(trace.to_jsonl(), encoding="utf-8")
    if args.dot:
        Path(args.dot).write_text(export_dot(doc.graph), encoding="utf-8")
    return EXIT_PLANNING if _planning_failed(trace) else EXIT_OK


def cmd_simulate(args: argparse.Namespace) -> int:
    try:
        durations = parse_duration_overrides(args.duration)
    except ValueError as exc:
        _err(str(exc))
        return EXIT_INVALID
    result = _run_plan(args)
    if isinstance(result, int):
        return result
    doc, trace = result
    timeline = simulate_timeline(trace, doc.graph, durations)
    for t in timeline:
        print(f"stage {t.index}: {t.start_s:7.1f}s - {t.end_s:7.1f}s  {', '.join(t.node_ids)}")
    total = timeline[-1].end_s if timeline else 0.0
    print(f"outcome: {trace.outcome}, stages: {trace.stage_count}, duration: {total:.1f}s")
    return EXIT_PLANNING if _planning_failed(trace) else EXIT_OK


def cmd_bench(args: argparse.Namespace) -> int:
    try:
        config = load_config(args.config)
        report = run_benchmark(config.planner)
    except ConfigError as exc:
        _err(str(exc))
        return EXIT_INVALID
    except FixtureInvalidError as exc:
        _err(f"{exc.code}: {exc}")
        return EXIT_INVALID
    sys.stdout.write(report.to_table())
    if args.json:
        Path(args.json).write_text(report.to_json(), encoding="utf-8")
    if not report.ok:
        _err("benchmark regression: a task needed more dual stages than expected")
        return EXIT_PLANNING
    return EXIT_OK


def cmd_gen(args: argparse.Namespace) -> int:
    try:
        config = load_config(args.config)
        env = Path(args.env).read_text(encoding="utf-8")
    except (ConfigError, OSError) as exc:
        _err(str(exc))
        return EXIT_INVALID
    if args.provider == "http":
        pc = config.provider
        if not pc.url or not pc.model:
            _err("provider.url and provider.model must be configured for --provider http")
            return EXIT_INVALID
        provider = HttpProvider(pc.url, pc.model, pc.auth_env, pc.timeout_s)
    else:
        try:
            responses = [Path(p).read_text(encoding="utf-8") for p in args.mock_response]
        except OSError as exc:
            _err(str(exc))
            return EXIT_INVALID
        provider = MockProvider(responses)
    request = GenerationRequest(args.instruction, env, args.max_attempts)
    try:
        doc, log = generate_graph(request, provider)
    except ProviderError as exc:
        _err(f"provider failure: {exc}")
        return EXIT_PROVIDER
    except GenerationFailure as exc:
        if args.log:
            write_exchange_log(args.log, exc.exchanges)
        _err(str(exc))
        return EXIT_PROVIDER
    if args.log:
        write_exchange_log(args.log, log)
    text = serialize_task_graph(doc)
    if args.out:
        Path(args.out).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)
    _err(f"accepted on attempt {len(log)}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="dualarm-dag", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("validate", help="parse and validate a task graph file")
    p.add_argument("graph")
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("plan", help="run the dual-arm planner on a graph and world")
    p.add_argument("graph")
    p.add_argument("world")
    p.add_argument("--trace", metavar="OUT.jsonl", help="write the stage trace as JSON Lines")
    p.add_argument("--dot", metavar="OUT.dot", help="write the graph in DOT format")
    p.add_argument("--config", help="JSON config file")
    p.set_defaults(func=cmd_plan)

    p = sub.add_parser("simulate", help="plan, then replay the stages on a nominal clock")
    p.add_argument("graph")
    p.add_argument("world")
    p.add_argument("--duration", action="append", default=[], metavar="TYPE=SECONDS",
                   help="override a node type's nominal duration (repeatable)")
    p.add_argument("--config", help="JSON config file")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("bench", help="run the five-task benchmark")
    p.add_argument("--config", help="JSON config file")
    p.add_argument("--json", metavar="OUT.json", help="also write the report as JSON")
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("gen", help="generate a graph from an instruction")
    p.add_argument("--instruction", required=True)
    p.add_argument("--env", required=True, help="file with the environment description")
    p.add_argument("--provider", choices=("mock", "http"), default="mock")
    p.add_argument("--mock-response", action="append", default=[], metavar="FILE",
                   help="scripted completion for the mock provider (repeatable, used in order)")
    p.add_argument("--max-attempts", type=int, default=3)
    p.add_argument("--config", help="JSON config file")
    p.add_argument("--out", help="write the accepted graph here instead of stdout")
    p.add_argument("--log", help="write the exchange log as JSON Lines")
    p.set_defaults(func=cmd_gen)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    if getattr(args, "max_attempts", 1) < 1:
        _err("--max-attempts must be at least 1")
        return EXIT_INVALID
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
