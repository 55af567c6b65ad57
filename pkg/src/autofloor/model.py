"""Graph, device and floorplan value types plus the cost arithmetic on them."""

from __future__ import annotations

import math
from dataclasses import dataclass, field, fields, replace
from enum import Enum
from typing import Iterable, Iterator, Mapping, Sequence

RESOURCE_TYPES = ("lut", "ff", "bram18k", "dsp", "uram", "hbm_ch")
LOGIC_TYPES = RESOURCE_TYPES[:-1]

DEFAULT_MAX_UTIL = 0.70

Coord = tuple[int, int]


class AutofloorError(Exception):
    """Base class for all errors raised by this package."""


class InvalidInputError(AutofloorError):
    pass


class InfeasibleError(AutofloorError):
    def __init__(self, message: str, *, iteration: int | None = None, tasks: Sequence[str] = ()):
        super().__init__(message)
        self.iteration = iteration
        self.tasks = tuple(tasks)


class BudgetExhaustedError(AutofloorError):
    def __init__(self, message: str, *, iteration: int | None = None):
        super().__init__(message)
        self.iteration = iteration


@dataclass(frozen=True)
class ResourceVector:
    lut: int = 0
    ff: int = 0
    bram18k: int = 0
    dsp: int = 0
    uram: int = 0
    hbm_ch: int = 0

    def __post_init__(self):
        for f in fields(self):
            v = getattr(self, f.name)
            if not isinstance(v, int) or isinstance(v, bool):
                raise TypeError(f"{f.name} must be an int, got {v!r}")
            if v < 0:
                raise ValueError(f"{f.name} must be non-negative, got {v}")

    @classmethod
    def from_mapping(cls, data: Mapping[str, float]) -> ResourceVector:
        """Build from a mapping, rounding fractional estimates up."""
        unknown = set(data) - set(RESOURCE_TYPES)
        if unknown:
            raise InvalidInputError(f"unknown resource types: {sorted(unknown)}")
        return cls(**{k: int(math.ceil(v)) for k, v in data.items()})

    @classmethod
    def from_tuple(cls, values: Iterable[int]) -> ResourceVector:
        return cls(*values)

    def as_tuple(self) -> tuple[int, ...]:
        return tuple(getattr(self, k) for k in RESOURCE_TYPES)

    def as_dict(self) -> dict[str, int]:
        return {k: getattr(self, k) for k in RESOURCE_TYPES}

    def __iter__(self) -> Iterator[int]:
        return iter(self.as_tuple())

    def __add__(self, other: ResourceVector) -> ResourceVector:
        return ResourceVector(*(a + b for a, b in zip(self, other)))

    def __le__(self, other: ResourceVector) -> bool:
        return all(a <= b for a, b in zip(self, other))

    def __ge__(self, other: ResourceVector) -> bool:
        return other <= self

    def minus_clamped(self, other: ResourceVector) -> ResourceVector:
        return ResourceVector(*(max(0, a - b) for a, b in zip(self, other)))

    def is_zero(self) -> bool:
        return not any(self)


def sum_resources(vectors: Iterable[ResourceVector]) -> ResourceVector:
    total = [0] * len(RESOURCE_TYPES)
    for v in vectors:
        for i, x in enumerate(v):
            total[i] += x
    return ResourceVector(*total)


ZERO = ResourceVector()


@dataclass(frozen=True)
class Task:
    name: str
    area: ResourceVector = ZERO
    fixed_slot: Coord | None = None
    group: str | None = None

    @property
    def hbm_required(self) -> int:
        return self.area.hbm_ch


@dataclass(frozen=True)
class Channel:
    id: str
    src: str
    dst: str
    width: int = 32
    capacity: int = 2
    lat: int = 0
    balance: int = 0
    # expert override of pipeline stages per slot boundary for this channel
    per_crossing: int | None = None


@dataclass(frozen=True)
class TaskGraph:
    tasks: tuple[Task, ...] = ()
    channels: tuple[Channel, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "tasks", tuple(self.tasks))
        object.__setattr__(self, "channels", tuple(self.channels))

    @property
    def task_names(self) -> list[str]:
        return [t.name for t in self.tasks]

    def task(self, name: str) -> Task:
        for t in self.tasks:
            if t.name == name:
                return t
        raise KeyError(name)

    def task_map(self) -> dict[str, Task]:
        return {t.name: t for t in self.tasks}

    def channel_map(self) -> dict[str, Channel]:
        return {c.id: c for c in self.channels}

    def total_area(self) -> ResourceVector:
        return sum_resources(t.area for t in self.tasks)

    def with_channels(self, channels: Iterable[Channel]) -> TaskGraph:
        return replace(self, channels=tuple(channels))

    def with_tasks(self, tasks: Iterable[Task]) -> TaskGraph:
        return replace(self, tasks=tuple(tasks))


def validate_graph(graph: TaskGraph) -> list[str]:
    """Return every structural violation; an empty list means the graph is ok."""
    problems = []
    seen: set[str] = set()
    for t in graph.tasks:
        if t.name in seen:
            problems.append(f"duplicate task name: {t.name}")
        seen.add(t.name)
    ids: set[str] = set()
    for c in graph.channels:
        if c.id in ids:
            problems.append(f"duplicate channel id: {c.id}")
        ids.add(c.id)
        for end in (c.src, c.dst):
            if end not in seen:
                problems.append(f"unknown endpoint: channel {c.id} names missing task {end}")
        if c.src == c.dst:
            problems.append(f"self-loop: channel {c.id} connects {c.src} to itself")
        if c.width < 1:
            problems.append(f"zero width: channel {c.id} has width {c.width}")
        if c.capacity < 1:
            problems.append(f"bad capacity: channel {c.id} has capacity {c.capacity}")
        if c.lat < 0 or c.balance < 0:
            problems.append(f"negative latency: channel {c.id}")
        if c.per_crossing is not None and c.per_crossing < 0:
            problems.append(f"negative per_crossing: channel {c.id}")
    return problems


class Axis(str, Enum):
    HORIZONTAL = "H"  # splits rows
    VERTICAL = "V"  # splits columns


@dataclass(frozen=True)
class PartitionDirective:
    axis: Axis
    split: tuple[int, int] = (1, 1)

    def __post_init__(self):
        object.__setattr__(self, "axis", Axis(self.axis))
        a, b = self.split
        if a < 1 or b < 1:
            raise ValueError(f"split ratio must be positive, got {self.split}")
        object.__setattr__(self, "split", (int(a), int(b)))

    @classmethod
    def parse(cls, text: str) -> PartitionDirective:
        """Parse ``"H"``, ``"V"`` or ``"H2:1"``."""
        text = text.strip()
        axis, ratio = text[0].upper(), text[1:]
        if ratio:
            a, b = ratio.split(":")
            return cls(Axis(axis), (int(a), int(b)))
        return cls(Axis(axis))

    def __str__(self) -> str:
        a, b = self.split
        return self.axis.value if (a, b) == (1, 1) else f"{self.axis.value}{a}:{b}"


def _util_tuple(max_util: float | Mapping[str, float]) -> tuple[float, ...]:
    if isinstance(max_util, Mapping):
        unknown = set(max_util) - set(RESOURCE_TYPES)
        if unknown:
            raise InvalidInputError(f"unknown resource types in max_util: {sorted(unknown)}")
        return tuple(float(max_util.get(k, DEFAULT_MAX_UTIL)) for k in RESOURCE_TYPES)
    return (float(max_util),) * len(RESOURCE_TYPES)


def budget(capacity: ResourceVector, max_util: float | Mapping[str, float]) -> ResourceVector:
    """Usable resources of one slot at ``max_util``.

    HBM channels are discrete ports and are not derated.
    """
    utils = _util_tuple(max_util)
    for u in utils:
        if not 0.0 < u <= 1.0:
            raise InvalidInputError(f"max_util must lie in (0, 1], got {u}")
    out = []
    for k, cap, u in zip(RESOURCE_TYPES, capacity, utils):
        out.append(cap if k == "hbm_ch" else math.floor(cap * u + 1e-9))
    return ResourceVector(*out)


@dataclass(frozen=True)
class Slot:
    row: int
    col: int
    capacity: ResourceVector
    max_util: float | tuple[tuple[str, float], ...] = DEFAULT_MAX_UTIL
    hbm_channels: tuple[int, ...] = ()
    region: str | None = None  # downstream tool region, e.g. a clock-region range

    def __post_init__(self):
        if isinstance(self.max_util, Mapping):
            object.__setattr__(self, "max_util", tuple(sorted(self.max_util.items())))
        for u in _util_tuple(self.util_spec):
            if not 0.0 < u <= 1.0:
                raise InvalidInputError(f"slot ({self.row},{self.col}): max_util {u} outside (0, 1]")
        object.__setattr__(self, "hbm_channels", tuple(self.hbm_channels))
        if self.hbm_channels and len(self.hbm_channels) != self.capacity.hbm_ch:
            raise InvalidInputError(
                f"slot ({self.row},{self.col}): {len(self.hbm_channels)} HBM channel ids "
                f"but hbm_ch capacity {self.capacity.hbm_ch}"
            )

    @property
    def util_spec(self) -> float | dict[str, float]:
        return dict(self.max_util) if isinstance(self.max_util, tuple) else self.max_util

    def budget(self, max_util: float | Mapping[str, float] | None = None) -> ResourceVector:
        return budget(self.capacity, self.util_spec if max_util is None else max_util)


@dataclass(frozen=True)
class DeviceGrid:
    rows: int
    cols: int
    slots: tuple[Slot, ...]
    schedule: tuple[PartitionDirective, ...]
    hbm_groups: tuple[tuple[int, ...], ...] = ()
    name: str = "custom"

    def __post_init__(self):
        object.__setattr__(self, "slots", tuple(sorted(self.slots, key=lambda s: (s.row, s.col))))
        object.__setattr__(self, "schedule", tuple(self.schedule))
        object.__setattr__(self, "hbm_groups", tuple(tuple(g) for g in self.hbm_groups))
        coords = [(s.row, s.col) for s in self.slots]
        expected = [(r, c) for r in range(self.rows) for c in range(self.cols)]
        if coords != expected:
            raise InvalidInputError(f"device {self.name}: slot array is not a complete {self.rows}x{self.cols} grid")
        leaves = leaf_regions(self.rows, self.cols, self.schedule)
        if len(leaves) != self.rows * self.cols:
            raise InvalidInputError(
                f"device {self.name}: schedule {[str(d) for d in self.schedule]} yields "
                f"{len(leaves)} regions, expected {self.rows * self.cols}"
            )

    def slot(self, row: int, col: int) -> Slot:
        return self.slots[row * self.cols + col]

    def coords(self) -> list[Coord]:
        return [(s.row, s.col) for s in self.slots]

    def with_max_util(self, max_util: float | Mapping[str, float]) -> DeviceGrid:
        return replace(self, slots=tuple(replace(s, max_util=max_util) for s in self.slots))

    def channel_slot(self) -> dict[int, Coord]:
        return {ch: (s.row, s.col) for s in self.slots for ch in s.hbm_channels}


# A region is a half-open rectangle of leaf slots: (row0, row1, col0, col1).
Region = tuple[int, int, int, int]


def split_region(region: Region, directive: PartitionDirective) -> tuple[Region, Region] | None:
    """Children of ``region`` under ``directive``, or None if it cannot be split that way."""
    r0, r1, c0, c1 = region
    a, b = directive.split
    lo, hi = (r0, r1) if directive.axis is Axis.HORIZONTAL else (c0, c1)
    extent = hi - lo
    if extent % (a + b):
        return None
    mid = lo + extent * a // (a + b)
    if directive.axis is Axis.HORIZONTAL:
        return (r0, mid, c0, c1), (mid, r1, c0, c1)
    return (r0, r1, c0, mid), (r0, r1, mid, c1)


def leaf_regions(rows: int, cols: int, schedule: Sequence[PartitionDirective]) -> list[Region]:
    regions: list[Region] = [(0, rows, 0, cols)]
    for d in schedule:
        nxt = []
        for reg in regions:
            kids = split_region(reg, d)
            nxt.extend(kids if kids else (reg,))
        regions = nxt
    if any(r1 - r0 != 1 or c1 - c0 != 1 for r0, r1, c0, c1 in regions):
        return []
    return regions


@dataclass(frozen=True)
class Floorplan:
    assignment: Mapping[str, Coord]
    cost: int
    util: Mapping[Coord, ResourceVector] = field(default_factory=dict)

    def slot_of(self, task: str) -> Coord:
        return self.assignment[task]


def _coords_of(graph: TaskGraph, assignment: Mapping[str, Coord]) -> dict[str, Coord]:
    missing = [t.name for t in graph.tasks if t.name not in assignment]
    if missing:
        raise InvalidInputError(f"incomplete floorplan: unassigned tasks {missing}")
    return {name: tuple(assignment[name]) for name in graph.task_names}


def manhattan(a: Coord, b: Coord) -> int:
    return abs(a[0] - b[0]) + abs(a[1] - b[1])


def crossing_cost(graph: TaskGraph, fp: Floorplan | Mapping[str, Coord]) -> int:
    """Bitwidth-weighted Manhattan slot distance summed over channels."""
    assignment = fp.assignment if isinstance(fp, Floorplan) else fp
    pos = _coords_of(graph, assignment)
    return sum(c.width * manhattan(pos[c.src], pos[c.dst]) for c in graph.channels)


def slot_utilization(
    graph: TaskGraph, fp: Floorplan | Mapping[str, Coord], device: DeviceGrid | None = None
) -> dict[Coord, ResourceVector]:
    """Per-slot sum of task areas; every device slot is listed when ``device`` is given."""
    assignment = fp.assignment if isinstance(fp, Floorplan) else fp
    pos = _coords_of(graph, assignment)
    acc: dict[Coord, list[int]] = {}
    if device is not None:
        acc = {xy: [0] * len(RESOURCE_TYPES) for xy in device.coords()}
    for t in graph.tasks:
        row = acc.setdefault(pos[t.name], [0] * len(RESOURCE_TYPES))
        for i, x in enumerate(t.area):
            row[i] += x
    return {xy: ResourceVector(*v) for xy, v in sorted(acc.items())}


def make_floorplan(graph: TaskGraph, assignment: Mapping[str, Coord], device: DeviceGrid | None = None) -> Floorplan:
    assignment = {k: tuple(v) for k, v in assignment.items()}
    return Floorplan(assignment, crossing_cost(graph, assignment), slot_utilization(graph, assignment, device))


def capacity_violations(
    fp: Floorplan, device: DeviceGrid, max_util: float | Mapping[str, float] | None = None
) -> list[str]:
    """Slots whose consumed resources exceed their budget, as readable messages."""
    out = []
    for xy, used in fp.util.items():
        slot = device.slot(*xy)
        limit = slot.budget(max_util)
        for k, u, b in zip(RESOURCE_TYPES, used, limit):
            if u > b:
                out.append(f"slot {xy}: {k} {u} > {b}")
    return out


def max_slot_util(fp: Floorplan, device: DeviceGrid) -> float:
    """Largest used/capacity ratio over all slots and resource types."""
    best = 0.0
    for xy, used in fp.util.items():
        cap = device.slot(*xy).capacity
        for u, c in zip(used, cap):
            if c:
                best = max(best, u / c)
            elif u:
                return math.inf
    return best
