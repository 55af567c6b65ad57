"""Project files in, solutions / constraints / traces out.

The project format is JSON; ``docs/project.schema.json`` describes it. A
minimal project::

    {
      "graph": {
        "tasks": [{"name": "load", "area": {"lut": 1200, "bram18k": 4}},
                  {"name": "pe", "area": {"lut": 9000, "dsp": 32}}],
        "channels": [{"id": "e0", "src": "load", "dst": "pe", "width": 512}]
      },
      "device": "u250",
      "options": {"max_util": 0.7}
    }
"""

from __future__ import annotations

import csv
import io as _io
import json
import logging
import math
import re
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any, Iterable, Mapping, Sequence

from .balance import CoOptResult
from .devices import PRESETS, preset
from .ilp import DEFAULT_TIME_LIMIT
from .model import (
    DEFAULT_MAX_UTIL,
    RESOURCE_TYPES,
    Channel,
    DeviceGrid,
    InvalidInputError,
    PartitionDirective,
    ResourceVector,
    Slot,
    Task,
    TaskGraph,
    make_floorplan,
    validate_graph,
)
from .pipeline import DEFAULT_PER_CROSSING
from .sim import DEFAULT_TIMEOUT_THRESHOLD, ActorSpec, EmittedBurst

log = logging.getLogger(__name__)

# Area change of one memory interface when switched from the default
# array-style port to async_mmap (measured LUT/FF/BRAM deltas).
ASYNC_MMAP_DELTA = {"lut": 277, "ff": -3578, "bram18k": -15}

SOLUTION_FORMAT = "autofloor-solution/1"

_PROJECT_KEYS = {"graph", "device", "options", "version", "name", "description"}
_GRAPH_KEYS = {"tasks", "channels"}
_TASK_KEYS = {"name", "area", "fixed_slot", "group", "actor"}
_CHANNEL_KEYS = {"id", "src", "dst", "width", "capacity", "lat", "balance", "per_crossing", "async_mmap"}
_ACTOR_KEYS = {"ii", "latency", "firings", "kind"}
_DEVICE_KEYS = {"name", "rows", "cols", "slots", "schedule", "hbm_groups", "max_util"}
_SLOT_KEYS = {"row", "col", "capacity", "max_util", "hbm_channels", "region"}
_OPTION_KEYS = {
    "max_util", "per_crossing", "sweep", "timeout_threshold", "hbm_partial", "hbm_access_groups",
    "same_slot_groups", "seed", "max_feedback_rounds", "time_limit", "firings",
}


@dataclass(frozen=True)
class Options:
    max_util: float | Mapping[str, float] = DEFAULT_MAX_UTIL
    per_crossing: int = DEFAULT_PER_CROSSING
    sweep: tuple[float, ...] = ()
    timeout_threshold: int = DEFAULT_TIMEOUT_THRESHOLD
    hbm_partial: Mapping[str, tuple[int, ...]] = field(default_factory=dict)
    hbm_access_groups: tuple[tuple[str, ...], ...] = ()
    same_slot_groups: tuple[tuple[str, ...], ...] = ()
    seed: int = 0
    max_feedback_rounds: int = 10
    time_limit: float | None = DEFAULT_TIME_LIMIT
    firings: int = 1000  # default source firing count for simulation


@dataclass(frozen=True)
class Project:
    graph: TaskGraph
    device: DeviceGrid
    options: Options
    actors: Mapping[str, ActorSpec] = field(default_factory=dict)
    warnings: tuple[str, ...] = ()


class _Issues:
    """Collects fatal errors and strict-mode-only complaints in one pass."""

    def __init__(self):
        self.errors: list[str] = []
        self.unknown: list[str] = []

    def keys(self, obj: Mapping, allowed: set[str], where: str) -> None:
        for k in sorted(set(obj) - allowed):
            self.unknown.append(f"{where}: unknown field {k!r}")

    def need(self, obj: Mapping, key: str, where: str, kind=None):
        if key not in obj:
            self.errors.append(f"{where}: missing field {key!r}")
            return None
        return self.typed(obj[key], kind, f"{where}.{key}") if kind else obj[key]

    def typed(self, value, kind, where):
        ok = isinstance(value, kind) and not (isinstance(value, bool) and kind in (int, (int, float)))
        if not ok:
            self.errors.append(f"{where}: expected {getattr(kind, '__name__', 'number')}, got {value!r}")
            return None
        return value


def parse_json(text: str, source: str = "<string>") -> Any:
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise InvalidInputError(f"{source}:{exc.lineno}:{exc.colno}: parse error: {exc.msg}") from None


def _resources(raw, where: str, issues: _Issues) -> ResourceVector:
    if not isinstance(raw, Mapping):
        issues.errors.append(f"{where}: expected an object of resource counts")
        return ResourceVector()
    vals = {}
    for k, v in raw.items():
        if k not in RESOURCE_TYPES:
            issues.errors.append(f"{where}: unknown resource type {k!r}")
        elif isinstance(v, bool) or not isinstance(v, (int, float)) or v < 0 or not math.isfinite(v):
            issues.errors.append(f"{where}.{k}: expected a non-negative number, got {v!r}")
        else:
            vals[k] = v
    return ResourceVector.from_mapping(vals)


def _coord(raw, where, issues):
    if (not isinstance(raw, list) or len(raw) != 2
            or not all(isinstance(x, int) and not isinstance(x, bool) and x >= 0 for x in raw)):
        issues.errors.append(f"{where}: expected [row, col]")
        return None
    return (raw[0], raw[1])


def _max_util(raw, where, issues):
    if isinstance(raw, Mapping):
        out = {}
        for k, v in raw.items():
            if k not in RESOURCE_TYPES:
                issues.errors.append(f"{where}: unknown resource type {k!r}")
            elif isinstance(v, bool) or not isinstance(v, (int, float)) or not 0 < v <= 1:
                issues.errors.append(f"{where}.{k}: max_util must lie in (0, 1]")
            else:
                out[k] = float(v)
        return out
    if isinstance(raw, bool) or not isinstance(raw, (int, float)) or not 0 < raw <= 1:
        issues.errors.append(f"{where}: max_util must lie in (0, 1], got {raw!r}")
        return DEFAULT_MAX_UTIL
    return float(raw)


def _graph(raw, issues: _Issues) -> tuple[TaskGraph, dict[str, ActorSpec]]:
    if not isinstance(raw, Mapping):
        issues.errors.append("graph: expected an object")
        return TaskGraph(), {}
    issues.keys(raw, _GRAPH_KEYS, "graph")
    tasks, actors = [], {}
    raw_tasks = raw.get("tasks", [])
    if not isinstance(raw_tasks, list):
        issues.errors.append("graph.tasks: expected a list")
        raw_tasks = []
    for i, t in enumerate(raw_tasks):
        where = f"graph.tasks[{i}]"
        if not isinstance(t, Mapping):
            issues.errors.append(f"{where}: expected an object")
            continue
        issues.keys(t, _TASK_KEYS, where)
        name = issues.need(t, "name", where, str)
        if name is None:
            continue
        where = f"task {name}"
        area = _resources(t.get("area", {}), f"{where}.area", issues)
        fixed = _coord(t["fixed_slot"], f"{where}.fixed_slot", issues) if t.get("fixed_slot") is not None else None
        group = t.get("group")
        if group is not None and not isinstance(group, str):
            issues.errors.append(f"{where}.group: expected a string")
            group = None
        tasks.append(Task(name, area, fixed, group))
        if "actor" in t:
            a = t["actor"]
            if not isinstance(a, Mapping):
                issues.errors.append(f"{where}.actor: expected an object")
                continue
            issues.keys(a, _ACTOR_KEYS, f"{where}.actor")
            try:
                actors[name] = ActorSpec(**{k: v for k, v in a.items() if k in _ACTOR_KEYS})
            except (TypeError, ValueError) as exc:
                issues.errors.append(f"{where}.actor: {exc}")

    channels, mmap_owners = [], []
    raw_channels = raw.get("channels", [])
    if not isinstance(raw_channels, list):
        issues.errors.append("graph.channels: expected a list")
        raw_channels = []
    for i, c in enumerate(raw_channels):
        where = f"graph.channels[{i}]"
        if not isinstance(c, Mapping):
            issues.errors.append(f"{where}: expected an object")
            continue
        issues.keys(c, _CHANNEL_KEYS, where)
        cid = issues.need(c, "id", where, str)
        src = issues.need(c, "src", where, str)
        dst = issues.need(c, "dst", where, str)
        if None in (cid, src, dst):
            continue
        where = f"channel {cid}"
        ints = {}
        for key, default in (("width", 32), ("capacity", 2), ("lat", 0), ("balance", 0), ("per_crossing", None)):
            v = c.get(key, default)
            if v is not None and issues.typed(v, int, f"{where}.{key}") is None:
                v = default
            ints[key] = v
        for key in ("lat", "balance", "per_crossing"):
            if ints[key] is not None and ints[key] < 0:
                issues.errors.append(f"{where}.{key}: must be non-negative")
                ints[key] = 0
        channels.append(Channel(cid, src, dst, **ints))
        if c.get("async_mmap"):
            mmap_owners.append(src)
    graph = TaskGraph(tuple(tasks), tuple(channels))
    issues.errors.extend(validate_graph(graph))
    if mmap_owners:
        graph = apply_async_mmap(graph, mmap_owners)
    return graph, actors


def apply_async_mmap(graph: TaskGraph, owners: Iterable[str]) -> TaskGraph:
    """Apply the per-interface async_mmap area delta once per entry of ``owners``."""
    count: dict[str, int] = {}
    for o in owners:
        count[o] = count.get(o, 0) + 1
    tasks = []
    for t in graph.tasks:
        n = count.get(t.name, 0)
        if n:
            area = t.area.as_dict()
            for k, d in ASYNC_MMAP_DELTA.items():
                area[k] = max(0, area[k] + n * d)
            t = replace(t, area=ResourceVector(**area))
        tasks.append(t)
    return graph.with_tasks(tasks)


def device_from_json(raw, issues: _Issues | None = None) -> DeviceGrid | None:
    own = issues is None
    issues = issues or _Issues()
    dev = None
    if isinstance(raw, str):
        if raw.lower() in PRESETS:
            dev = preset(raw)
        else:
            issues.errors.append(f"device: unknown preset {raw!r} (known: {', '.join(sorted(PRESETS))})")
    elif isinstance(raw, Mapping):
        issues.keys(raw, _DEVICE_KEYS, "device")
        rows = issues.need(raw, "rows", "device", int)
        cols = issues.need(raw, "cols", "device", int)
        schedule = []
        for s in raw.get("schedule", []):
            try:
                schedule.append(PartitionDirective.parse(s))
            except (ValueError, IndexError, TypeError):
                issues.errors.append(f"device.schedule: bad directive {s!r}")
        default_util = _max_util(raw["max_util"], "device.max_util", issues) if "max_util" in raw else DEFAULT_MAX_UTIL
        slots = []
        for i, s in enumerate(raw.get("slots", [])):
            where = f"device.slots[{i}]"
            if not isinstance(s, Mapping):
                issues.errors.append(f"{where}: expected an object")
                continue
            issues.keys(s, _SLOT_KEYS, where)
            r, c = issues.need(s, "row", where, int), issues.need(s, "col", where, int)
            cap = _resources(s.get("capacity", {}), f"{where}.capacity", issues)
            util = _max_util(s["max_util"], f"{where}.max_util", issues) if "max_util" in s else default_util
            hbm = s.get("hbm_channels", [])
            if r is None or c is None:
                continue
            try:
                slots.append(Slot(r, c, cap, util, tuple(hbm), s.get("region")))
            except (InvalidInputError, TypeError) as exc:
                issues.errors.append(f"{where}: {exc}")
        if rows is not None and cols is not None and not issues.errors:
            try:
                dev = DeviceGrid(rows, cols, tuple(slots), tuple(schedule),
                                 tuple(tuple(g) for g in raw.get("hbm_groups", [])), raw.get("name", "custom"))
            except InvalidInputError as exc:
                issues.errors.append(str(exc))
    else:
        issues.errors.append("device: expected a preset name or an object")
    if own and (issues.errors or issues.unknown):
        raise InvalidInputError("invalid device:\n  " + "\n  ".join(issues.errors + issues.unknown))
    return dev


def _options(raw, issues: _Issues) -> Options:
    if not isinstance(raw, Mapping):
        issues.errors.append("options: expected an object")
        return Options()
    issues.keys(raw, _OPTION_KEYS, "options")
    kw: dict[str, Any] = {}
    if "max_util" in raw:
        kw["max_util"] = _max_util(raw["max_util"], "options.max_util", issues)
    for key in ("per_crossing", "timeout_threshold", "seed", "max_feedback_rounds", "firings"):
        if key in raw and issues.typed(raw[key], int, f"options.{key}") is not None:
            kw[key] = raw[key]
    if "time_limit" in raw:
        v = raw["time_limit"]
        if v is None or issues.typed(v, (int, float), "options.time_limit") is not None:
            kw["time_limit"] = None if v is None else float(v)
    if "sweep" in raw:
        try:
            kw["sweep"] = parse_sweep(raw["sweep"]) if isinstance(raw["sweep"], str) else tuple(
                float(x) for x in raw["sweep"])
        except (ValueError, TypeError) as exc:
            issues.errors.append(f"options.sweep: {exc}")
    if "hbm_partial" in raw:
        part = raw["hbm_partial"]
        if isinstance(part, Mapping):
            kw["hbm_partial"] = {t: (c,) if isinstance(c, int) else tuple(c) for t, c in sorted(part.items())}
        else:
            issues.errors.append("options.hbm_partial: expected an object task -> channel id(s)")
    for key in ("hbm_access_groups", "same_slot_groups"):
        if key in raw:
            groups = raw[key]
            if isinstance(groups, list) and all(isinstance(g, list) for g in groups):
                kw[key] = tuple(tuple(g) for g in groups)
            else:
                issues.errors.append(f"options.{key}: expected a list of task-name lists")
    return Options(**kw)


def parse_sweep(text: str) -> tuple[float, ...]:
    """``"LO:HI:STEP"`` -> inclusive grid of max_util values."""
    parts = text.split(":")
    if len(parts) != 3:
        raise ValueError(f"sweep range must be LO:HI:STEP, got {text!r}")
    lo, hi, step = (float(p) for p in parts)
    if step <= 0 or lo > hi:
        raise ValueError(f"empty sweep range {text!r}")
    n = int(math.floor((hi - lo) / step + 1e-9))
    return tuple(round(lo + i * step, 6) for i in range(n + 1))


def project_from_dict(doc: Any, strict: bool = False) -> Project:
    issues = _Issues()
    if not isinstance(doc, Mapping):
        raise InvalidInputError("project: top level must be an object")
    issues.keys(doc, _PROJECT_KEYS, "project")
    graph, actors = _graph(doc.get("graph", {}), issues)
    device = device_from_json(doc["device"], issues) if "device" in doc else None
    if "device" not in doc:
        issues.errors.append("project: missing field 'device'")
    options = _options(doc.get("options", {}), issues)
    if device is not None:
        for t in graph.tasks:
            if t.fixed_slot is not None and not (t.fixed_slot[0] < device.rows and t.fixed_slot[1] < device.cols):
                issues.errors.append(f"task {t.name}: fixed_slot {list(t.fixed_slot)} lies outside the "
                                     f"{device.rows}x{device.cols} grid")
    names = set(graph.task_names)
    for key in ("same_slot_groups", "hbm_access_groups"):
        for g in getattr(options, key):
            for n in g:
                if n not in names:
                    issues.errors.append(f"options.{key}: unknown task {n!r}")
    for n in options.hbm_partial:
        if n not in names:
            issues.errors.append(f"options.hbm_partial: unknown task {n!r}")
    for n in actors:
        if n not in names:
            issues.errors.append(f"actor spec for unknown task {n!r}")
    problems = issues.errors + (issues.unknown if strict else [])
    if problems:
        raise InvalidInputError("invalid project:\n  " + "\n  ".join(problems))
    for w in issues.unknown:
        log.warning("%s (ignored; --strict rejects this)", w)
    return Project(graph, device, options, actors, tuple(issues.unknown))


def load_project(path: str | Path, strict: bool = False) -> Project:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise InvalidInputError(f"cannot read project {path}: {exc.strerror}") from None
    return project_from_dict(parse_json(text, str(path)), strict)


def load_device(spec: str) -> DeviceGrid:
    """A preset name or the path of a JSON file holding a device object."""
    if spec.lower() in PRESETS:
        return preset(spec)
    path = Path(spec)
    if not path.exists():
        raise InvalidInputError(f"device {spec!r} is neither a preset ({', '.join(sorted(PRESETS))}) nor a file")
    return device_from_json(parse_json(path.read_text(), str(path)))


# ---------------------------------------------------------------- solutions

def _slot_name(xy) -> str:
    return f"X{xy[1]}Y{xy[0]}"


def emit_floorplan_json(result: CoOptResult, device: DeviceGrid, extra: Mapping[str, Any] | None = None) -> dict:
    """Solution document; serialize with :func:`dumps` for byte-stable output."""
    fp = result.floorplan
    slots = {}
    for xy, used in sorted(fp.util.items()):
        cap = device.slot(*xy).capacity
        slots[_slot_name(xy)] = {
            "row": xy[0],
            "col": xy[1],
            "used": used.as_dict(),
            "util": {k: round(u / c, 6) if c else (0.0 if not u else None)
                     for k, u, c in zip(RESOURCE_TYPES, used, cap)},
        }
    doc = {
        "format": SOLUTION_FORMAT,
        "device": device.name,
        "cost": fp.cost,
        "overhead_bits": result.overhead,
        "feedback_rounds": result.rounds,
        "tasks": {n: {"slot": list(fp.assignment[n])} for n in result.graph.task_names},
        "channels": {c.id: {"src": c.src, "dst": c.dst, "width": c.width, "lat": c.lat, "balance": c.balance}
                     for c in result.graph.channels},
        "slots": slots,
        "hbm_binding": {t: list(chs) for t, chs in sorted(result.hbm_binding.items())},
        "same_slot_groups": sorted(sorted(g) for g in result.groups),
    }
    if extra:
        doc.update(extra)
    return doc


def dumps(doc: Any) -> str:
    return json.dumps(doc, sort_keys=True, indent=2) + "\n"


def load_solution(doc: Mapping[str, Any], graph: TaskGraph, device: DeviceGrid) -> CoOptResult:
    """Rebuild the result an :func:`emit_floorplan_json` document was made from."""
    if doc.get("format") != SOLUTION_FORMAT:
        raise InvalidInputError(f"not a solution document (format {doc.get('format')!r})")
    tasks, chans = doc["tasks"], doc["channels"]
    if set(tasks) != set(graph.task_names) or set(chans) != {c.id for c in graph.channels}:
        raise InvalidInputError("solution does not match the project graph")
    assignment = {n: tuple(tasks[n]["slot"]) for n in graph.task_names}
    fp = make_floorplan(graph, assignment, device)
    if fp.cost != doc["cost"]:
        raise InvalidInputError(f"solution cost {doc['cost']} disagrees with its assignment ({fp.cost})")
    g = graph.with_channels(replace(c, lat=chans[c.id]["lat"], balance=chans[c.id]["balance"])
                            for c in graph.channels)
    return CoOptResult(
        fp, g, doc["overhead_bits"], doc["feedback_rounds"],
        tuple(frozenset(x) for x in doc.get("same_slot_groups", [])),
        {t: tuple(v) for t, v in doc.get("hbm_binding", {}).items()},
    )


# ---------------------------------------------------------------- tcl

def emit_constraints_tcl(result: CoOptResult, device: DeviceGrid) -> str:
    """pblock constraints for the floorplan, with pipeline depths as comments."""
    fp = result.floorplan
    by_slot: dict[tuple[int, int], list[str]] = {}
    for n in sorted(result.graph.task_names):
        by_slot.setdefault(tuple(fp.assignment[n]), []).append(n)
    out = [f"# floorplan constraints for device {device.name} ({device.rows} rows x {device.cols} cols)",
           f"# crossing cost {fp.cost}, balancing overhead {result.overhead} bits"]
    for xy in sorted(by_slot):
        name = f"pblock_{_slot_name(xy)}"
        out.append("")
        out.append(f"create_pblock {name}")
        region = device.slot(*xy).region
        if region:
            out.append(f"resize_pblock [get_pblocks {name}] -add {{{region}}}")
        for task in by_slot[xy]:
            out.append(f"add_cells_to_pblock [get_pblocks {name}] [get_cells -hierarchical {{{task}}}]")
    out.append("")
    out.append("# pipeline registers per channel: <id> <src> -> <dst> lat=<stages> balance=<stages>")
    for c in sorted(result.graph.channels, key=lambda c: c.id):
        out.append(f"# pipeline {c.id} {c.src} -> {c.dst} lat={c.lat} balance={c.balance}")
    return "\n".join(out) + "\n"


_ADD_CELLS = re.compile(r"^add_cells_to_pblock \[get_pblocks pblock_X(\d+)Y(\d+)\] \[get_cells -hierarchical \{(.+)\}\]$")
_CREATE = re.compile(r"^create_pblock pblock_X(\d+)Y(\d+)$")
_PIPE = re.compile(r"^# pipeline (\S+) (\S+) -> (\S+) lat=(\d+) balance=(\d+)$")


@dataclass(frozen=True)
class ParsedConstraints:
    assignment: Mapping[str, tuple[int, int]]
    pblocks: tuple[tuple[int, int], ...]
    pipeline: Mapping[str, tuple[int, int]]
    problems: tuple[str, ...] = ()


def parse_constraints_tcl(text: str) -> ParsedConstraints:
    assignment, pipeline, pblocks, problems = {}, {}, [], []
    for lineno, line in enumerate(text.splitlines(), 1):
        if m := _CREATE.match(line):
            xy = (int(m[2]), int(m[1]))
            if xy in pblocks:
                problems.append(f"line {lineno}: pblock {xy} declared twice")
            pblocks.append(xy)
        elif m := _ADD_CELLS.match(line):
            xy = (int(m[2]), int(m[1]))
            if xy not in pblocks:
                problems.append(f"line {lineno}: cells added to undeclared pblock {xy}")
            if m[3] in assignment:
                problems.append(f"line {lineno}: task {m[3]} placed twice")
            assignment[m[3]] = xy
        elif m := _PIPE.match(line):
            pipeline[m[1]] = (int(m[4]), int(m[5]))
    return ParsedConstraints(assignment, tuple(pblocks), pipeline, tuple(problems))


def check_constraints(text: str, graph: TaskGraph) -> list[str]:
    """Every problem with a constraints file relative to ``graph``; empty means consistent."""
    parsed = parse_constraints_tcl(text)
    problems = list(parsed.problems)
    names = set(graph.task_names)
    problems += [f"unknown task {t}" for t in sorted(set(parsed.assignment) - names)]
    problems += [f"task {t} has no pblock" for t in sorted(names - set(parsed.assignment))]
    used = set(parsed.assignment.values())
    problems += [f"pblock {xy} is empty" for xy in parsed.pblocks if xy not in used]
    return problems


# ---------------------------------------------------------------- burst traces

def read_burst_trace(source: str | Path | _io.TextIOBase) -> list[tuple[int, int]]:
    """``cycle,addr`` CSV (header required) -> list of requests."""
    text = source.read() if hasattr(source, "read") else Path(source).read_text()
    rows = list(csv.reader(_io.StringIO(text)))
    if not rows or [h.strip() for h in rows[0]] != ["cycle", "addr"]:
        raise InvalidInputError("burst trace must start with the header 'cycle,addr'")
    out = []
    for i, row in enumerate(rows[1:], 2):
        if not row:
            continue
        try:
            cycle, addr = (int(x, 0) for x in row)
        except ValueError:
            raise InvalidInputError(f"burst trace line {i}: expected two integers, got {row}") from None
        if out and cycle < out[-1][0]:
            raise InvalidInputError(f"burst trace line {i}: cycles must be non-decreasing")
        out.append((cycle, addr))
    return out


def format_bursts(bursts: Sequence[EmittedBurst]) -> str:
    buf = _io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["emit_cycle", "addr", "len"])
    for b in bursts:
        w.writerow([b.emit_cycle, b.addr, b.len])
    return buf.getvalue()
