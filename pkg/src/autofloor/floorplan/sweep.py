"""Multi-candidate floorplanning over a range of utilization caps."""

from __future__ import annotations

import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from typing import Iterable, Sequence

from ..ilp import DEFAULT_TIME_LIMIT
from ..model import AutofloorError, DeviceGrid, Floorplan, InfeasibleError, TaskGraph, max_slot_util
from .partition import floorplan

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class SweepCandidate:
    max_util: float
    floorplan: Floorplan
    cost: int
    max_slot_util: float


@dataclass(frozen=True)
class SweepAttempt:
    max_util: float
    candidate: SweepCandidate | None
    error: str | None = None


def _attempt(args) -> SweepAttempt:
    graph, device, util, groups, time_limit = args
    try:
        fp = floorplan(graph, device, util, groups, time_limit)
    except AutofloorError as exc:
        return SweepAttempt(util, None, str(exc))
    return SweepAttempt(util, SweepCandidate(util, fp, fp.cost, max_slot_util(fp, device)))


def sweep_attempts(
    graph: TaskGraph,
    device: DeviceGrid,
    util_range: Sequence[float],
    same_slot_groups: Iterable[Iterable[str]] = (),
    time_limit: float | None = DEFAULT_TIME_LIMIT,
    jobs: int = 1,
) -> list[SweepAttempt]:
    """One floorplan attempt per utilization cap, in input order."""
    for u in util_range:
        if not 0.0 < u <= 1.0:
            raise ValueError(f"max_util values must lie in (0, 1], got {u}")
    groups = tuple(tuple(g) for g in same_slot_groups)
    work = [(graph, device, float(u), groups, time_limit) for u in util_range]
    if jobs > 1 and len(work) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            attempts = list(pool.map(_attempt, work))
    else:
        attempts = [_attempt(w) for w in work]
    for a in attempts:
        if a.error:
            log.warning("max_util %.3f: %s", a.max_util, a.error)
    return attempts


def pareto_front(candidates: Iterable[SweepCandidate]) -> list[SweepCandidate]:
    """Drop duplicate assignments and dominated points; sort by (cost, max_slot_util)."""
    unique: dict[tuple, SweepCandidate] = {}
    for c in sorted(candidates, key=lambda c: c.max_util):
        key = tuple(sorted(c.floorplan.assignment.items()))
        unique.setdefault(key, c)
    pool = list(unique.values())
    front = [
        c for c in pool
        if not any(
            o.cost <= c.cost and o.max_slot_util <= c.max_slot_util
            and (o.cost < c.cost or o.max_slot_util < c.max_slot_util)
            for o in pool
        )
    ]
    return sorted(front, key=lambda c: (c.cost, c.max_slot_util, c.max_util))


def sweep_candidates(
    graph: TaskGraph,
    device: DeviceGrid,
    util_range: Sequence[float],
    same_slot_groups: Iterable[Iterable[str]] = (),
    time_limit: float | None = DEFAULT_TIME_LIMIT,
    jobs: int = 1,
) -> list[SweepCandidate]:
    attempts = sweep_attempts(graph, device, util_range, same_slot_groups, time_limit, jobs)
    found = [a.candidate for a in attempts if a.candidate is not None]
    if not found:
        raise InfeasibleError("no feasible candidate: " + "; ".join(f"{a.max_util}: {a.error}" for a in attempts))
    return pareto_front(found)
