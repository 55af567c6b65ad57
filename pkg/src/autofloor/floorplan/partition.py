"""Top-down iterative bipartitioning of a task graph onto a device grid.

Every iteration splits all current regions along one axis at once and solves
a single 0/1 ILP that decides the side of every movable task, so connections
that leave a region are accounted for. Coordinates live on the current coarse
grid: a task's row (column) is the rank of its region's first leaf row
(column) among all region starts on that axis. For uniform 1:1 splits this is
the familiar ``prev * 2 + side`` doubling; for uneven splits it follows the
explicit child extents.
"""

from __future__ import annotations

import logging
from bisect import bisect_left
from dataclasses import dataclass, field
from typing import Iterable, Iterator, Mapping, Sequence

from ..ilp import DEFAULT_TIME_LIMIT, EQ, LE, IlpProblem, Status, solve
from ..model import (
    RESOURCE_TYPES,
    Axis,
    BudgetExhaustedError,
    Coord,
    DeviceGrid,
    Floorplan,
    InfeasibleError,
    InvalidInputError,
    PartitionDirective,
    Region,
    ResourceVector,
    TaskGraph,
    make_floorplan,
    split_region,
    sum_resources,
    validate_graph,
)

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class PartitionState:
    coords: Mapping[str, Coord]
    region_of: Mapping[str, Region]
    leaf_budget: Mapping[Coord, ResourceVector]
    row_starts: tuple[int, ...] = (0,)
    col_starts: tuple[int, ...] = (0,)
    iteration: int = 0
    groups: tuple[frozenset[str], ...] = ()
    fixed: Mapping[str, Coord] = field(default_factory=dict)
    # every region of the grid at this depth, occupied or not
    grid_regions: tuple[Region, ...] = ()

    def region_budget(self, region: Region) -> ResourceVector:
        r0, r1, c0, c1 = region
        return sum_resources(self.leaf_budget[(r, c)] for r in range(r0, r1) for c in range(c0, c1))

    @property
    def regions(self) -> dict[Region, tuple[ResourceVector, tuple[str, ...]]]:
        members: dict[Region, list[str]] = {}
        for name, reg in self.region_of.items():
            members.setdefault(reg, []).append(name)
        return {reg: (self.region_budget(reg), tuple(m)) for reg, m in sorted(members.items())}


def initial_state(
    graph: TaskGraph,
    device: DeviceGrid,
    max_util: float | Mapping[str, float] | None = None,
    same_slot_groups: Iterable[Iterable[str]] = (),
) -> PartitionState:
    names = graph.task_names
    whole: Region = (0, device.rows, 0, device.cols)
    fixed = {}
    for t in graph.tasks:
        if t.fixed_slot is not None:
            r, c = t.fixed_slot
            if not (0 <= r < device.rows and 0 <= c < device.cols):
                raise InvalidInputError(f"task {t.name}: fixed slot {t.fixed_slot} is outside the device")
            fixed[t.name] = (r, c)
    leaf_budget = {(s.row, s.col): s.budget(max_util) for s in device.slots}
    return PartitionState(
        coords={n: (0, 0) for n in names},
        region_of={n: whole for n in names},
        leaf_budget=leaf_budget,
        groups=merge_groups(graph, same_slot_groups),
        fixed=fixed,
        grid_regions=(whole,),
    )


def merge_groups(graph: TaskGraph, extra: Iterable[Iterable[str]] = ()) -> tuple[frozenset[str], ...]:
    """Union-find over declared task groups and explicit same-slot sets."""
    known = set(graph.task_names)
    parent = {n: n for n in known}

    def find(a):
        while parent[a] != a:
            parent[a] = parent[parent[a]]
            a = parent[a]
        return a

    def union(members):
        members = list(members)
        for m in members:
            if m not in known:
                raise InvalidInputError(f"same-slot group names unknown task {m}")
        for m in members[1:]:
            ra, rb = find(members[0]), find(m)
            if ra != rb:
                parent[max(ra, rb)] = min(ra, rb)

    by_label: dict[str, list[str]] = {}
    for t in graph.tasks:
        if t.group is not None:
            by_label.setdefault(t.group, []).append(t.name)
    for members in by_label.values():
        union(members)
    for members in extra:
        union(members)
    sets: dict[str, set[str]] = {}
    for n in graph.task_names:
        sets.setdefault(find(n), set()).add(n)
    return tuple(frozenset(s) for s in sets.values() if len(s) > 1)


def _var(task: str) -> str:
    return f"d:{task}"


@dataclass(frozen=True)
class _Plan:
    """Geometry of one partitioning iteration, shared by the builder and the updater."""

    axis: Axis
    children: Mapping[Region, tuple[Region, Region]]
    starts: tuple[int, ...]
    grid_regions: tuple[Region, ...]

    def rank(self, region: Region) -> int:
        start = region[0] if self.axis is Axis.HORIZONTAL else region[2]
        return bisect_left(self.starts, start)


def _plan(state: PartitionState, directive: PartitionDirective) -> _Plan:
    children = {}
    grid = []
    for reg in state.grid_regions:
        kids = split_region(reg, directive)
        if kids is None:
            grid.append(reg)
        else:
            children[reg] = kids
            grid.extend(kids)
    k = 0 if directive.axis is Axis.HORIZONTAL else 2
    starts = tuple(sorted({reg[k] for reg in grid}))
    return _Plan(directive.axis, children, starts, tuple(grid))


def _leaf_in(region: Region, leaf: Coord) -> bool:
    r0, r1, c0, c1 = region
    return r0 <= leaf[0] < r1 and c0 <= leaf[1] < c1


def build_bipartition_ilp(
    state: PartitionState,
    directive: PartitionDirective,
    graph: TaskGraph,
    time_limit: float | None = DEFAULT_TIME_LIMIT,
) -> IlpProblem:
    """ILP deciding, for every task in a splittable region, which child it moves to.

    ``d:<task> = 1`` selects the child with the higher row (column) index.
    """
    plan = _plan(state, directive)
    axis_idx = 0 if directive.axis is Axis.HORIZONTAL else 1
    movable = [n for n in graph.task_names if state.region_of[n] in plan.children]
    problem = IlpProblem(vars=[_var(n) for n in movable], time_limit=time_limit)

    # position on the split axis: base + step * d
    base: dict[str, int] = {}
    step: dict[str, int] = {}
    for n in graph.task_names:
        reg = state.region_of[n]
        if reg in plan.children:
            lo, hi = plan.children[reg]
            base[n], step[n] = plan.rank(lo), plan.rank(hi) - plan.rank(lo)
        else:
            base[n], step[n] = plan.rank(reg), 0

    for n in movable:
        leaf = state.fixed.get(n)
        if leaf is not None:
            lo, hi = plan.children[state.region_of[n]]
            side = 1 if _leaf_in(hi, leaf) else 0
            problem.add({_var(n): 1}, EQ, side, name=f"fixed:{n}")
    for group in state.groups:
        members = [n for n in graph.task_names if n in group]
        head = members[0]
        for m in members[1:]:
            if state.region_of[m] != state.region_of[head]:
                raise InfeasibleError(f"same-slot group {sorted(group)} already spans two regions",
                                      iteration=state.iteration + 1, tasks=sorted(group))
            if step[head]:
                problem.add({_var(head): 1, _var(m): -1}, EQ, 0, name=f"group:{head}={m}")

    by_region: dict[Region, list[str]] = {}
    for n in movable:
        by_region.setdefault(state.region_of[n], []).append(n)
    areas = graph.task_map()
    for reg, members in by_region.items():
        lo, hi = plan.children[reg]
        lo_budget, hi_budget = state.region_budget(lo), state.region_budget(hi)
        tag = "x".join(map(str, reg))
        for k, res in enumerate(RESOURCE_TYPES):
            demand = {n: areas[n].area.as_tuple()[k] for n in members}
            total = sum(demand.values())
            if total == 0:
                continue
            coeffs = {_var(n): a for n, a in demand.items() if a}
            # high child: sum(a * d) <= budget_hi ; low child: sum(a * (1 - d)) <= budget_lo
            if total > hi_budget.as_tuple()[k]:
                problem.add(coeffs, LE, hi_budget.as_tuple()[k], name=f"cap:{tag}:hi:{res}")
            if total > lo_budget.as_tuple()[k]:
                problem.add({v: -a for v, a in coeffs.items()}, LE, lo_budget.as_tuple()[k] - total,
                            name=f"cap:{tag}:lo:{res}")

    # objective: sum of width * |distance| on the post-split grid
    order = {n: i for i, n in enumerate(graph.task_names)}
    offset = 0
    pair_vals: dict[tuple[str, ...], list[int]] = {}
    for ch in graph.channels:
        a, b = ch.src, ch.dst
        other = 1 - axis_idx
        offset += ch.width * abs(state.coords[a][other] - state.coords[b][other])
        va = [base[a], base[a] + step[a]] if step[a] else [base[a]]
        vb = [base[b], base[b] + step[b]] if step[b] else [base[b]]
        if a == b:
            continue
        if len(va) == 1 and len(vb) == 1:
            offset += ch.width * abs(va[0] - vb[0])
            continue
        if len(va) == 1 or len(vb) == 1:
            mover, fixed_pos, vals = (b, va[0], vb) if len(va) == 1 else (a, vb[0], va)
            f = pair_vals.setdefault((mover,), [0, 0])
            f[0] += ch.width * abs(vals[0] - fixed_pos)
            f[1] += ch.width * abs(vals[1] - fixed_pos)
            continue
        i, j = sorted((a, b), key=order.__getitem__)
        vi, vj = (va, vb) if i == a else (vb, va)
        f = pair_vals.setdefault((i, j), [0, 0, 0, 0])
        for xi in (0, 1):
            for xj in (0, 1):
                f[2 * xi + xj] += ch.width * abs(vi[xi] - vj[xj])

    objective: dict[str, int] = {}

    def add_term(v, c):
        if c:
            objective[v] = objective.get(v, 0) + c

    aux = []
    for key, f in pair_vals.items():
        if len(key) == 1:
            offset += f[0]
            add_term(_var(key[0]), f[1] - f[0])
            continue
        i, j = key
        f00, f01, f10, f11 = f
        offset += f00
        add_term(_var(i), f10 - f00)
        add_term(_var(j), f01 - f00)
        q = f11 - f10 - f01 + f00
        if q:
            # z = d_i * d_j, linearized only on the side the objective pushes against
            z = f"z:{i}|{j}"
            aux.append(z)
            objective[z] = q
            if q < 0:
                problem.add({z: 1, _var(i): -1}, LE, 0, name=f"and:{i}|{j}")
                problem.add({z: 1, _var(j): -1}, LE, 0, name=f"and:{j}|{i}")
            else:
                problem.add({_var(i): 1, _var(j): 1, z: -1}, LE, 1, name=f"and:{i}&{j}")
    problem.vars.extend(aux)
    problem.implied_binary = frozenset(aux)
    problem.objective = {v: c for v, c in objective.items() if c}
    problem.offset = offset
    return problem


def _advance(state: PartitionState, directive: PartitionDirective, sides: Mapping[str, int]) -> PartitionState:
    plan = _plan(state, directive)
    region_of = {}
    for n, reg in state.region_of.items():
        if reg in plan.children:
            region_of[n] = plan.children[reg][sides[n]]
        else:
            region_of[n] = reg
    coords = {}
    for n, reg in region_of.items():
        r, c = state.coords[n]
        if directive.axis is Axis.HORIZONTAL:
            coords[n] = (plan.rank(reg), c)
        else:
            coords[n] = (r, plan.rank(reg))
    rows = plan.starts if directive.axis is Axis.HORIZONTAL else state.row_starts
    cols = plan.starts if directive.axis is Axis.VERTICAL else state.col_starts
    return PartitionState(coords, region_of, state.leaf_budget, rows, cols, state.iteration + 1,
                          state.groups, state.fixed, plan.grid_regions)


def _diagnose(state: PartitionState, directive: PartitionDirective, graph: TaskGraph) -> list[str]:
    """Fixed tasks sitting in a region whose split has no feasible assignment."""
    problem = build_bipartition_ilp(state, directive, graph, time_limit=30)
    culprits = []
    for reg, (_, members) in state.regions.items():
        names = {_var(m) for m in members}
        sub = IlpProblem(
            vars=[v for v in problem.vars if v in names],
            constraints=[c for c in problem.constraints if set(c.coeffs) <= names and c.coeffs],
            time_limit=30,
        )
        if sub.vars and solve(sub).status is Status.INFEASIBLE:
            culprits.extend(m for m in members if m in state.fixed)
            if not any(m in state.fixed for m in members):
                culprits.extend(members)
    return culprits


def partition_step(
    state: PartitionState,
    directive: PartitionDirective,
    graph: TaskGraph,
    time_limit: float | None = DEFAULT_TIME_LIMIT,
    engine: str = "auto",
) -> tuple[PartitionState, int]:
    """Apply one directive; returns the new state and the iteration's optimal cost."""
    problem = build_bipartition_ilp(state, directive, graph, time_limit)
    outcome = solve(problem, engine)
    it = state.iteration + 1
    if outcome.status is Status.TIMED_OUT:
        raise BudgetExhaustedError(
            f"iteration {it} ({directive}): ILP not solved within {time_limit}s; "
            "raise the time limit or use a coarser schedule", iteration=it)
    if outcome.status is Status.INFEASIBLE:
        culprits = _diagnose(state, directive, graph)
        raise InfeasibleError(
            f"iteration {it} ({directive}): no split satisfies the resource constraints"
            + (f"; tasks involved: {', '.join(culprits)}" if culprits else ""),
            iteration=it, tasks=culprits)
    sides = {n: outcome.assignment[_var(n)] for n in graph.task_names if _var(n) in outcome.assignment}
    log.info("iteration %d (%s): %d movable tasks, cost %d [%s]", it, directive, len(sides),
             outcome.objective_value, outcome.engine)
    return _advance(state, directive, sides), outcome.objective_value


def early_check(graph: TaskGraph, device: DeviceGrid, max_util=None, groups: Sequence[frozenset[str]] = ()) -> None:
    """Raise InfeasibleError when plain area arithmetic already rules out a floorplan."""
    total = graph.total_area()
    capacity = sum_resources(s.budget(max_util) for s in device.slots)
    if not total <= capacity:
        over = [k for k, a, b in zip(RESOURCE_TYPES, total, capacity) if a > b]
        raise InfeasibleError(f"design too large at this max_util: {', '.join(over)} exceed the device budget")
    largest = [max(vals) for vals in zip(*(s.budget(max_util) for s in device.slots))]
    areas = graph.task_map()
    for t in graph.tasks:
        if t.fixed_slot is not None:
            if not t.area <= device.slot(*t.fixed_slot).budget(max_util):
                raise InfeasibleError(f"task {t.name} does not fit its fixed slot {t.fixed_slot}", tasks=[t.name])
        elif any(a > m for a, m in zip(t.area, largest)):
            raise InfeasibleError(f"task {t.name} does not fit in any slot", tasks=[t.name])
    for g in groups:
        need = sum_resources(areas[n].area for n in g)
        pins = {areas[n].fixed_slot for n in g if areas[n].fixed_slot is not None}
        if len(pins) > 1:
            raise InfeasibleError(f"same-slot group {sorted(g)} has members fixed to different slots",
                                  tasks=sorted(g))
        slots = [device.slot(*p) for p in pins] or device.slots
        if not any(need <= s.budget(max_util) for s in slots):
            raise InfeasibleError(f"same-slot group {sorted(g)} exceeds the capacity of every slot",
                                  tasks=sorted(g))


def partition_trace(
    graph: TaskGraph,
    device: DeviceGrid,
    max_util: float | Mapping[str, float] | None = None,
    same_slot_groups: Iterable[Iterable[str]] = (),
    time_limit: float | None = DEFAULT_TIME_LIMIT,
    engine: str = "auto",
) -> Iterator[tuple[PartitionState, int]]:
    """Yield ``(state, iteration_cost)`` for the initial state and after every directive."""
    problems = validate_graph(graph)
    if problems:
        raise InvalidInputError("invalid graph: " + "; ".join(problems))
    state = initial_state(graph, device, max_util, same_slot_groups)
    early_check(graph, device, max_util, state.groups)
    yield state, 0
    for directive in device.schedule:
        state, cost = partition_step(state, directive, graph, time_limit, engine)
        yield state, cost


def floorplan(
    graph: TaskGraph,
    device: DeviceGrid,
    max_util: float | Mapping[str, float] | None = None,
    same_slot_groups: Iterable[Iterable[str]] = (),
    time_limit: float | None = DEFAULT_TIME_LIMIT,
    engine: str = "auto",
) -> Floorplan:
    """Assign every task to a device slot by applying the device's partition schedule."""
    state = None
    for state, _ in partition_trace(graph, device, max_util, same_slot_groups, time_limit, engine):
        pass
    assignment = {n: (reg[0], reg[2]) for n, reg in state.region_of.items()}
    fp = make_floorplan(graph, assignment, device)
    for n, leaf in state.fixed.items():
        assert assignment[n] == leaf, (n, assignment[n], leaf)
    return fp
