"""Pipeline latency for slot-crossing channels."""

from __future__ import annotations

from dataclasses import replace
from typing import Mapping

from .model import Channel, Coord, Floorplan, InvalidInputError, TaskGraph, manhattan

DEFAULT_PER_CROSSING = 2


def pipeline_depth(edge: Channel, fp: Floorplan | Mapping[str, Coord], per_crossing: int = DEFAULT_PER_CROSSING) -> int:
    """Register stages for ``edge``: ``per_crossing`` per slot boundary crossed.

    A channel-level ``per_crossing`` override wins over the global value.
    """
    assignment = fp.assignment if isinstance(fp, Floorplan) else fp
    levels = per_crossing if edge.per_crossing is None else edge.per_crossing
    return levels * manhattan(assignment[edge.src], assignment[edge.dst])


def apply_pipelining(graph: TaskGraph, fp: Floorplan | Mapping[str, Coord],
                     per_crossing: int = DEFAULT_PER_CROSSING) -> TaskGraph:
    """Copy of ``graph`` with every channel's ``lat`` set from the floorplan."""
    assignment = fp.assignment if isinstance(fp, Floorplan) else fp
    missing = [n for n in graph.task_names if n not in assignment]
    if missing:
        raise InvalidInputError(f"incomplete floorplan: unassigned tasks {missing}")
    if per_crossing < 0:
        raise ValueError("per_crossing must be non-negative")
    return graph.with_channels(
        replace(ch, lat=pipeline_depth(ch, assignment, per_crossing), balance=0) for ch in graph.channels
    )
