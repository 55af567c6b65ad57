"""Latency balancing of reconvergent paths and the floorplan feedback loop.

Every task gets an integer potential S (the largest pipeline latency between
it and the graph's sinks). A channel i->j then needs ``S_i - S_j - lat``
extra cycles of balancing latency, which must be non-negative; the total
``balance * width`` is minimized. The constraint matrix is a network matrix,
so the LP optimum at a vertex is integral.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace
from typing import Iterable, Mapping, Sequence

import numpy as np
from scipy.optimize import linprog
from scipy.sparse import coo_matrix

from .floorplan import bind_hbm_channels, early_check, floorplan, merge_groups
from .ilp import DEFAULT_TIME_LIMIT
from .model import (
    BudgetExhaustedError,
    DeviceGrid,
    Floorplan,
    InfeasibleError,
    InvalidInputError,
    TaskGraph,
    validate_graph,
)
from .pipeline import DEFAULT_PER_CROSSING, apply_pipelining

log = logging.getLogger(__name__)

DEFAULT_FEEDBACK_ROUNDS = 10


@dataclass(frozen=True)
class SdcSolution:
    potentials: Mapping[str, int]
    balances: Mapping[str, int]
    overhead: int


@dataclass(frozen=True)
class SdcInfeasible:
    """A directed cycle whose channels carry positive total latency."""

    cycle: tuple[str, ...]


class CycleError(InfeasibleError):
    def __init__(self, message: str, cycle: Sequence[str], tasks: Sequence[str] = ()):
        super().__init__(message, tasks=tasks)
        self.cycle = tuple(cycle)


def find_positive_cycle(graph: TaskGraph) -> tuple[str, ...] | None:
    """Bellman-Ford on ``S_dst - S_src <= -lat``; returns channel ids of a positive-latency cycle."""
    names = graph.task_names
    dist = {n: 0 for n in names}
    pred: dict[str, str | None] = {n: None for n in names}
    chans = graph.channel_map()
    last = None
    for _ in range(len(names)):
        last = None
        for ch in graph.channels:
            cand = dist[ch.src] - ch.lat
            if cand < dist[ch.dst]:
                dist[ch.dst] = cand
                pred[ch.dst] = ch.id
                last = ch.dst
        if last is None:
            return None
    # walk back far enough to be certain we are on the cycle
    v = last
    for _ in range(len(names)):
        v = chans[pred[v]].src
    cycle = []
    u = v
    while True:
        cid = pred[u]
        cycle.append(cid)
        u = chans[cid].src
        if u == v:
            break
    return tuple(reversed(cycle))


def _components(graph: TaskGraph) -> list[list[str]]:
    parent = {n: n for n in graph.task_names}

    def find(a):
        while parent[a] != a:
            parent[a] = parent[parent[a]]
            a = parent[a]
        return a

    for ch in graph.channels:
        a, b = find(ch.src), find(ch.dst)
        if a != b:
            parent[b] = a
    comps: dict[str, list[str]] = {}
    for n in graph.task_names:
        comps.setdefault(find(n), []).append(n)
    return list(comps.values())


def _lp(c, rows, b_ub, eq_rows, b_eq, bounds):
    n = len(c)

    def mat(rs):
        if not rs:
            return None
        data, ri, ci = [], [], []
        for r, terms in enumerate(rs):
            for j, a in terms:
                data.append(a)
                ri.append(r)
                ci.append(j)
        return coo_matrix((data, (ri, ci)), shape=(len(rs), n)).tocsr()

    res = linprog(c, A_ub=mat(rows), b_ub=b_ub or None, A_eq=mat(eq_rows), b_eq=b_eq or None,
                  bounds=bounds, method="highs-ds")
    if res.status != 0:
        raise RuntimeError(f"latency-balancing LP failed: {res.message}")
    return res.x


def solve_sdc(graph: TaskGraph) -> SdcSolution | SdcInfeasible:
    """Overhead-minimal balancing latencies for a pipelined graph.

    Among optimal solutions the balance vector is the lexicographically smallest
    one under sorted channel ids.
    """
    for ch in graph.channels:
        if ch.lat < 0:
            raise InvalidInputError(f"channel {ch.id}: negative latency")
    cycle = find_positive_cycle(graph)
    if cycle is not None:
        return SdcInfeasible(cycle)
    names = graph.task_names
    if not graph.channels:
        return SdcSolution({n: 0 for n in names}, {}, 0)
    idx = {n: i for i, n in enumerate(names)}
    chans = sorted(graph.channels, key=lambda ch: ch.id)

    c = np.zeros(len(names))
    const = 0
    rows, b_ub = [], []
    for ch in chans:
        i, j = idx[ch.src], idx[ch.dst]
        c[i] += ch.width
        c[j] -= ch.width
        const -= ch.width * ch.lat
        # S_j - S_i <= -lat
        rows.append([(j, 1), (i, -1)])
        b_ub.append(-ch.lat)
    bounds = [(None, None)] * len(names)
    for comp in _components(graph):
        bounds[idx[comp[0]]] = (0, 0)

    x = _lp(c, rows, b_ub, [], [], bounds)
    best = int(round(float(c @ x) + const))

    def bal(ch, s):
        return s[idx[ch.src]] - s[idx[ch.dst]] - ch.lat

    # lexicographic refinement: hold the optimum, then push each balance down in id order
    eq_rows, b_eq = [], []
    obj_row = [(k, float(v)) for k, v in enumerate(c) if v]
    rows_opt = rows + [obj_row]
    b_opt = b_ub + [best - const]
    for ch in chans:
        i, j = idx[ch.src], idx[ch.dst]
        if round(bal(ch, x)) > 0:
            unit = np.zeros(len(names))
            unit[i], unit[j] = 1.0, -1.0
            x = _lp(unit, rows_opt, b_opt, eq_rows, b_eq, bounds)
        eq_rows.append([(i, 1), (j, -1)])
        b_eq.append(int(round(bal(ch, x))) + ch.lat)

    s = np.rint(x).astype(int)
    if np.abs(x - s).max() > 1e-6:
        raise RuntimeError("latency-balancing LP returned a fractional vertex")
    potentials = {n: int(s[idx[n]]) for n in names}
    for comp in _components(graph):
        low = min(potentials[n] for n in comp)
        for n in comp:
            potentials[n] -= low
    balances = {ch.id: potentials[ch.src] - potentials[ch.dst] - ch.lat for ch in graph.channels}
    if any(b < 0 for b in balances.values()):
        raise RuntimeError("latency-balancing LP returned an infeasible point")
    overhead = sum(balances[ch.id] * ch.width for ch in graph.channels)
    if overhead != best:
        raise RuntimeError(f"lexicographic refinement changed the optimum ({best} -> {overhead})")
    return SdcSolution(potentials, balances, overhead)


def balance_overhead(graph: TaskGraph) -> int:
    """Balancing area overhead in bits: sum of balance * width."""
    return sum(ch.balance * ch.width for ch in graph.channels)


def balance_latency(graph: TaskGraph) -> TaskGraph:
    """Copy of ``graph`` with every channel's ``balance`` filled in."""
    sol = solve_sdc(graph)
    if isinstance(sol, SdcInfeasible):
        raise _cycle_error(graph, sol.cycle)
    return graph.with_channels(replace(ch, balance=sol.balances[ch.id]) for ch in graph.channels)


def _cycle_error(graph: TaskGraph, cycle: Sequence[str]) -> CycleError:
    chans = graph.channel_map()
    total = sum(chans[c].lat for c in cycle)
    tasks = sorted({chans[c].src for c in cycle})
    return CycleError(f"dependency cycle {' -> '.join(cycle)} carries {total} cycles of pipeline latency",
                      cycle, tasks)


@dataclass(frozen=True)
class CoOptResult:
    floorplan: Floorplan
    graph: TaskGraph
    overhead: int
    rounds: int
    groups: tuple[frozenset[str], ...] = ()
    hbm_binding: Mapping[str, tuple[int, ...]] = field(default_factory=dict)


def co_optimize(
    graph: TaskGraph,
    device: DeviceGrid,
    max_util: float | Mapping[str, float] | None = None,
    per_crossing: int = DEFAULT_PER_CROSSING,
    max_feedback_rounds: int = DEFAULT_FEEDBACK_ROUNDS,
    same_slot_groups: Iterable[Iterable[str]] = (),
    time_limit: float | None = DEFAULT_TIME_LIMIT,
    hbm_partial: Mapping[str, int | Sequence[int]] | None = None,
    hbm_access_groups: Iterable[Iterable[str]] = (),
) -> CoOptResult:
    """Floorplan, pipeline and balance; co-locate tasks of any positive-latency cycle and retry."""
    problems = validate_graph(graph)
    if problems:
        raise InvalidInputError("invalid graph: " + "; ".join(problems))
    groups = [frozenset(g) for g in same_slot_groups]
    for rnd in range(1, max_feedback_rounds + 1):
        fp = floorplan(graph, device, max_util, groups, time_limit)
        piped = apply_pipelining(graph, fp, per_crossing)
        sol = solve_sdc(piped)
        if isinstance(sol, SdcSolution):
            balanced = piped.with_channels(replace(ch, balance=sol.balances[ch.id]) for ch in piped.channels)
            binding = {}
            if any(t.hbm_required for t in graph.tasks):
                binding = bind_hbm_channels(fp, graph, device, hbm_partial, hbm_access_groups)
            log.info("co-optimization converged after %d round(s), overhead %d bits", rnd, sol.overhead)
            return CoOptResult(fp, balanced, sol.overhead, rnd, merge_groups(graph, groups), binding)
        err = _cycle_error(piped, sol.cycle)
        log.info("round %d: %s; constraining %s to one slot", rnd, err, ", ".join(err.tasks))
        groups.append(frozenset(err.tasks))
        merged = merge_groups(graph, groups)
        try:
            early_check(graph, device, max_util, merged)
        except InfeasibleError as exc:
            raise CycleError(f"unresolvable cycle: {err}; {exc}", sol.cycle, err.tasks) from exc
    raise BudgetExhaustedError(f"feedback budget exhausted after {max_feedback_rounds} rounds")
