"""Synthetic designs for stress tests and demos."""

from __future__ import annotations

import random
from typing import Sequence

from .model import Channel, ResourceVector, Task, TaskGraph

PE_AREA = ResourceVector(lut=4000, ff=6000, bram18k=2, dsp=16)
DRAIN_AREA = ResourceVector(lut=500, ff=800)
FEEDER_AREA = ResourceVector(lut=1200, ff=1500, bram18k=8)
IO_AREA = ResourceVector(lut=3000, ff=5000, bram18k=16)
TAIL_AREA = ResourceVector(lut=800, ff=1200, dsp=2)


def cnn_grid(rows: int = 13, cols: int = 16, tail: int = 29, tail_skips: int = 19,
             io_slots: Sequence[tuple[int, int]] = ((0, 0), (0, 1), (3, 0))) -> TaskGraph:
    """Systolic CNN-style design: a rows x cols PE array with a drain network.

    Structure: PEs pass data right and down; every PE hands results to its
    drain module, drains chain down each column into a per-column collector.
    Row and column feeders are chained off two loaders, collectors chain into
    a writer, and the writer feeds a post-processing chain of ``tail`` tasks
    with ``tail_skips`` skip connections. The loaders and the writer are pinned
    to ``io_slots`` like memory-controller-adjacent IO modules.

    The defaults give 493 tasks and 925 channels.
    """
    tasks: list[Task] = []
    chans: list[Channel] = []

    def edge(src, dst, width=32):
        chans.append(Channel(f"c{len(chans):04d}", src, dst, width=width))

    load_a, load_b, writer = "load_a", "load_b", "writer"
    tasks += [Task(load_a, IO_AREA, fixed_slot=io_slots[0]), Task(load_b, IO_AREA, fixed_slot=io_slots[1]),
              Task(writer, IO_AREA, fixed_slot=io_slots[2])]
    for r in range(rows):
        tasks.append(Task(f"feed_a{r}", FEEDER_AREA))
        edge(load_a if r == 0 else f"feed_a{r - 1}", f"feed_a{r}", 256)
    for c in range(cols):
        tasks.append(Task(f"feed_b{c}", FEEDER_AREA))
        edge(load_b if c == 0 else f"feed_b{c - 1}", f"feed_b{c}", 256)
    for r in range(rows):
        for c in range(cols):
            pe, dr = f"pe_{r}_{c}", f"drain_{r}_{c}"
            tasks += [Task(pe, PE_AREA), Task(dr, DRAIN_AREA)]
            edge(f"feed_a{r}" if c == 0 else f"pe_{r}_{c - 1}", pe, 128)
            edge(f"feed_b{c}" if r == 0 else f"pe_{r - 1}_{c}", pe, 128)
            edge(pe, dr, 32)
            if r:
                edge(f"drain_{r - 1}_{c}", dr, 32)
    for c in range(cols):
        tasks.append(Task(f"collect{c}", FEEDER_AREA))
        edge(f"drain_{rows - 1}_{c}", f"collect{c}", 32)
        if c:
            edge(f"collect{c - 1}", f"collect{c}", 64)
    edge(f"collect{cols - 1}", writer, 64)
    prev = writer
    for i in range(tail):
        tasks.append(Task(f"post{i}", TAIL_AREA))
        edge(prev, f"post{i}", 64)
        prev = f"post{i}"
    for i in range(min(tail_skips, max(0, tail - 2))):
        edge(f"post{i}", f"post{i + 2}", 16)
    return TaskGraph(tuple(tasks), tuple(chans))


def random_dag(rng: random.Random, n: int, p: float = 0.3, max_lat: int = 0,
               widths: Sequence[int] = (1, 2, 4, 8, 16, 32), capacity: int = 2) -> TaskGraph:
    """Random connected-ish DAG on ``t0..t{n-1}`` with edges only from lower to higher index."""
    tasks = [Task(f"t{i}") for i in range(n)]
    chans = []
    for j in range(1, n):
        preds = [i for i in range(j) if rng.random() < p] or [rng.randrange(j)]
        for i in preds:
            chans.append(Channel(f"e{len(chans):03d}", f"t{i}", f"t{j}", width=rng.choice(widths),
                                 capacity=capacity, lat=rng.randint(0, max_lat)))
    return TaskGraph(tuple(tasks), tuple(chans))


def random_areas(rng: random.Random, graph: TaskGraph, scale: ResourceVector) -> TaskGraph:
    """Give each task a random area of up to ``scale`` per resource type (HBM untouched)."""
    out = []
    for t in graph.tasks:
        vals = [rng.randint(0, s) if k < 5 else t.area.hbm_ch for k, s in enumerate(scale)]
        out.append(Task(t.name, ResourceVector(*vals), t.fixed_slot, t.group))
    return graph.with_tasks(out)
