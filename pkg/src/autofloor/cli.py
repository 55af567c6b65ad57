"""Command-line driver.

Exit codes: 0 success, 1 infeasible, 2 invalid input, 3 budget exhausted.
Diagnostics go to stderr; artifacts are written under ``--out``.
"""

from __future__ import annotations

import argparse
import logging
import sys
from dataclasses import replace
from pathlib import Path
from typing import Sequence

from .balance import CoOptResult, balance_latency, co_optimize
from .floorplan import floorplan, merge_groups, sweep_attempts, pareto_front
from .io import (
    Project,
    dumps,
    emit_constraints_tcl,
    emit_floorplan_json,
    format_bursts,
    load_device,
    load_project,
    parse_sweep,
    read_burst_trace,
)
from .model import BudgetExhaustedError, InfeasibleError, InvalidInputError
from .pipeline import apply_pipelining
from .sim import ActorKind, ActorSpec, burst_run, compare_throughput

EXIT_OK, EXIT_INFEASIBLE, EXIT_INVALID, EXIT_BUDGET = 0, 1, 2, 3

log = logging.getLogger("autofloor")


def _parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--project", type=Path, help="project JSON file")
    common.add_argument("--device", help="device preset name (u250, u280) or device JSON file")
    common.add_argument("--max-util", type=float, help="per-slot utilization cap in (0, 1]")
    common.add_argument("--per-crossing", type=int, help="pipeline stages per slot boundary (default 2)")
    common.add_argument("--sweep", help="max_util range LO:HI:STEP for the sweep subcommand")
    common.add_argument("--out", type=Path, help="directory for artifacts")
    common.add_argument("--time-limit", type=float, help="ILP wall-clock budget per iteration, seconds")
    common.add_argument("--jobs", type=int, default=1, help="parallel sweep workers")
    common.add_argument("--strict", action="store_true", help="reject unknown project fields instead of warning")
    common.add_argument("--trace", type=Path, help="burst-sim: input trace CSV (cycle,addr)")
    common.add_argument("--timeout-threshold", type=int, help="burst-sim: idle cycles before a burst is flushed")
    common.add_argument("-v", "--verbose", action="store_true")

    p = argparse.ArgumentParser(prog="autofloor", description="Floorplan-aware pipelining for HLS dataflow designs.")
    sub = p.add_subparsers(dest="command", required=True)
    sub.add_parser("check", parents=[common], help="validate a project")
    sub.add_parser("floorplan", parents=[common], help="floorplan only")
    sub.add_parser("optimize", parents=[common], help="floorplan, pipeline and balance")
    sub.add_parser("sweep", parents=[common], help="Pareto floorplan candidates over a max_util range")
    sub.add_parser("simulate", parents=[common], help="cycle-level throughput before vs. after optimization")
    sub.add_parser("burst-sim", parents=[common], help="fold an address trace through the burst detector")
    return p


def _load(args) -> Project:
    if args.project is None:
        raise InvalidInputError("--project is required")
    project = load_project(args.project, strict=args.strict)
    opts = project.options
    if args.max_util is not None:
        if not 0 < args.max_util <= 1:
            raise InvalidInputError(f"--max-util must lie in (0, 1], got {args.max_util}")
        opts = replace(opts, max_util=args.max_util)
    if args.per_crossing is not None:
        if args.per_crossing < 0:
            raise InvalidInputError("--per-crossing must be non-negative")
        opts = replace(opts, per_crossing=args.per_crossing)
    if args.time_limit is not None:
        opts = replace(opts, time_limit=args.time_limit)
    if args.sweep is not None:
        try:
            opts = replace(opts, sweep=parse_sweep(args.sweep))
        except ValueError as exc:
            raise InvalidInputError(f"--sweep: {exc}") from None
    device = load_device(args.device) if args.device else project.device
    return replace(project, device=device, options=opts)


def _write(out: Path | None, name: str, text: str) -> None:
    if out is None:
        sys.stdout.write(text)
        return
    out.mkdir(parents=True, exist_ok=True)
    (out / name).write_text(text)
    log.info("wrote %s", out / name)


def _optimize(project: Project) -> CoOptResult:
    o = project.options
    return co_optimize(project.graph, project.device, o.max_util, o.per_crossing, o.max_feedback_rounds,
                       o.same_slot_groups, o.time_limit, o.hbm_partial, o.hbm_access_groups)


def cmd_check(args) -> int:
    p = _load(args)
    from .floorplan import early_check

    early_check(p.graph, p.device, p.options.max_util, merge_groups(p.graph, p.options.same_slot_groups))
    print(f"ok: {len(p.graph.tasks)} tasks, {len(p.graph.channels)} channels, device {p.device.name} "
          f"({p.device.rows}x{p.device.cols})", file=sys.stderr)
    return EXIT_OK


def cmd_floorplan(args) -> int:
    p = _load(args)
    o = p.options
    fp = floorplan(p.graph, p.device, o.max_util, o.same_slot_groups, o.time_limit)
    result = CoOptResult(fp, p.graph, 0, 0, merge_groups(p.graph, o.same_slot_groups))
    _write(args.out, "floorplan.json", dumps(emit_floorplan_json(result, p.device)))
    _write(args.out, "constraints.tcl", emit_constraints_tcl(result, p.device))
    print(f"floorplan cost {fp.cost}", file=sys.stderr)
    return EXIT_OK


def cmd_optimize(args) -> int:
    p = _load(args)
    result = _optimize(p)
    _write(args.out, "floorplan.json", dumps(emit_floorplan_json(result, p.device)))
    _write(args.out, "constraints.tcl", emit_constraints_tcl(result, p.device))
    print(f"cost {result.floorplan.cost}, balancing overhead {result.overhead} bits, "
          f"{result.rounds} round(s)", file=sys.stderr)
    return EXIT_OK


def cmd_sweep(args) -> int:
    p = _load(args)
    o = p.options
    if not o.sweep:
        raise InvalidInputError("sweep needs --sweep LO:HI:STEP or options.sweep in the project")
    attempts = sweep_attempts(p.graph, p.device, o.sweep, o.same_slot_groups, o.time_limit, max(1, args.jobs))
    front = pareto_front(a.candidate for a in attempts if a.candidate is not None)
    docs, tcls = [], []
    for cand in front:
        piped = apply_pipelining(p.graph, cand.floorplan, o.per_crossing)
        try:
            balanced = balance_latency(piped)
        except InfeasibleError as exc:
            log.warning("max_util %.3f: candidate dropped: %s", cand.max_util, exc)
            continue
        overhead = sum(c.balance * c.width for c in balanced.channels)
        res = CoOptResult(cand.floorplan, balanced, overhead, 1, merge_groups(p.graph, o.same_slot_groups))
        docs.append(emit_floorplan_json(res, p.device, {"max_util": cand.max_util,
                                                        "max_slot_util": round(cand.max_slot_util, 6)}))
        tcls.append(emit_constraints_tcl(res, p.device))
    if not docs:
        failures = "; ".join(f"{a.max_util}: {a.error}" for a in attempts if a.error)
        raise InfeasibleError("no feasible candidate" + (f": {failures}" if failures else ""))
    _write(args.out, "candidates.json", dumps({"attempted": list(o.sweep), "candidates": docs}))
    for i, text in enumerate(tcls):
        _write(args.out, f"candidate_{i}.tcl", text)
    print(f"{len(docs)} Pareto candidate(s) from {len(o.sweep)} max_util value(s)", file=sys.stderr)
    return EXIT_OK


def cmd_simulate(args) -> int:
    p = _load(args)
    result = _optimize(p)
    specs = {}
    has_input = {c.dst for c in p.graph.channels}
    for n in p.graph.task_names:
        spec = p.actors.get(n)
        if spec is None:
            spec = ActorSpec() if n in has_input else ActorSpec(firings=p.options.firings)
        elif n not in has_input and spec.firings is None and spec.kind is ActorKind.JOINED:
            spec = replace(spec, firings=p.options.firings)
        specs[n] = spec
    cmp = compare_throughput(p.graph, result.graph, specs)
    doc = {"cycles_before": cmp.cycles_before, "cycles_after": cmp.cycles_after, "ratio": round(cmp.ratio, 6),
           "overhead_bits": result.overhead, "feedback_rounds": result.rounds}
    _write(args.out, "simulation.json", dumps(doc))
    print(f"cycles {cmp.cycles_before} -> {cmp.cycles_after} (ratio {cmp.ratio:.4f})", file=sys.stderr)
    return EXIT_OK


def cmd_burst_sim(args) -> int:
    if args.trace is None:
        raise InvalidInputError("burst-sim needs --trace CSV")
    threshold = args.timeout_threshold
    if threshold is None:
        threshold = _load(args).options.timeout_threshold if args.project else 16
    if threshold < 1:
        raise InvalidInputError("--timeout-threshold must be at least 1")
    try:
        trace = read_burst_trace(args.trace)
    except OSError as exc:
        raise InvalidInputError(f"cannot read trace {args.trace}: {exc.strerror}") from None
    _write(args.out, "bursts.csv", format_bursts(burst_run(trace, threshold)))
    return EXIT_OK


COMMANDS = {
    "check": cmd_check,
    "floorplan": cmd_floorplan,
    "optimize": cmd_optimize,
    "sweep": cmd_sweep,
    "simulate": cmd_simulate,
    "burst-sim": cmd_burst_sim,
}


def run(argv: Sequence[str] | None = None) -> int:
    args = _parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr, force=True)
    try:
        return COMMANDS[args.command](args)
    except InvalidInputError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except BudgetExhaustedError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_BUDGET
    except InfeasibleError as exc:
        print(f"infeasible: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE


def main() -> None:
    try:
        code = run()
    except SystemExit as exc:  # argparse usage errors are invalid input
        code = EXIT_INVALID if exc.code not in (0, None) else 0
    sys.exit(code)


if __name__ == "__main__":
    main()
