"""HBM channel binding on top of an existing floorplan."""

from __future__ import annotations

from typing import Iterable, Mapping, Sequence

from ..ilp import EQ, LE, IlpProblem, Status, solve
from ..model import BudgetExhaustedError, DeviceGrid, Floorplan, InfeasibleError, InvalidInputError, TaskGraph


def _normalize_partial(partial: Mapping[str, int | Sequence[int]]) -> dict[str, tuple[int, ...]]:
    out = {}
    for task, chans in partial.items():
        out[task] = (int(chans),) if isinstance(chans, int) else tuple(int(c) for c in chans)
    return out


def bind_hbm_channels(
    fp: Floorplan,
    graph: TaskGraph,
    device: DeviceGrid,
    partial: Mapping[str, int | Sequence[int]] | None = None,
    access_groups: Iterable[Iterable[str]] = (),
    time_limit: float | None = 60.0,
) -> dict[str, tuple[int, ...]]:
    """Pick physical HBM channels for every task that drives HBM.

    Channels come from the task's own slot. Pinned entries in ``partial`` are
    kept verbatim, tasks of one ``access_groups`` entry share a hardware
    crossbar group, and remaining ties go to the lowest channel ids in task
    order.
    """
    partial = _normalize_partial(partial or {})
    tasks = {t.name: t for t in graph.tasks}
    needy = [t.name for t in graph.tasks if t.hbm_required > 0]
    where = device.channel_slot()

    seen: dict[int, str] = {}
    for task, chans in partial.items():
        if task not in tasks:
            raise InvalidInputError(f"partial HBM binding names unknown task {task}")
        if len(chans) > tasks[task].hbm_required:
            raise InvalidInputError(f"task {task} pins {len(chans)} HBM channels but needs {tasks[task].hbm_required}")
        for ch in chans:
            if ch not in where:
                raise InvalidInputError(f"partial HBM binding for {task}: no channel {ch} on device {device.name}")
            if ch in seen:
                raise InvalidInputError(f"HBM channel {ch} pinned to both {seen[ch]} and {task}")
            seen[ch] = task
            if where[ch] != tuple(fp.assignment[task]):
                raise InfeasibleError(
                    f"partial binding conflicts with floorplan: {task} sits in slot {fp.assignment[task]} "
                    f"but channel {ch} belongs to slot {where[ch]}", tasks=[task])

    per_slot: dict[tuple[int, int], list[str]] = {}
    for name in needy:
        per_slot.setdefault(tuple(fp.assignment[name]), []).append(name)
    for xy, members in per_slot.items():
        have = len(device.slot(*xy).hbm_channels)
        need = sum(tasks[m].hbm_required for m in members)
        if need > have:
            raise InfeasibleError(f"channel exhausted in slot {xy}: {need} channels needed, {have} available",
                                  tasks=members)

    groups = [list(g) for g in access_groups]
    hw_of = {ch: h for h, grp in enumerate(device.hbm_groups) for ch in grp}
    grouped = {}
    for gi, g in enumerate(groups):
        for name in g:
            if name not in tasks or tasks[name].hbm_required == 0:
                raise InvalidInputError(f"HBM access group lists {name}, which drives no HBM channel")
            grouped[name] = gi

    problem = IlpProblem(vars=[], time_limit=time_limit)
    objective: dict[str, int] = {}
    chan_users: dict[int, list[str]] = {}
    meaning: dict[str, tuple[str, int]] = {}
    n_tasks = len(needy)
    for idx, name in enumerate(needy):
        chans = device.slot(*fp.assignment[name]).hbm_channels
        row = {}
        for rank, ch in enumerate(sorted(chans)):
            if ch in seen and seen[ch] != name:
                continue
            if name in grouped and ch not in hw_of:
                continue
            v = f"y:{name}:{ch}"
            problem.vars.append(v)
            meaning[v] = (name, ch)
            row[v] = 1
            chan_users.setdefault(ch, []).append(v)
            # lower ids first, and earlier tasks before later ones
            objective[v] = rank * (n_tasks - idx)
            if ch in partial.get(name, ()):
                problem.add({v: 1}, EQ, 1, name=f"pin:{name}:{ch}")
            if name in grouped:
                g = f"g:{grouped[name]}:{hw_of[ch]}"
                if g not in problem.vars:
                    problem.vars.append(g)
                problem.add({v: 1, g: -1}, LE, 0, name=f"ingroup:{name}:{ch}")
        problem.add(row, EQ, tasks[name].hbm_required, name=f"need:{name}")
    for ch, users in chan_users.items():
        if len(users) > 1:
            problem.add({v: 1 for v in users}, LE, 1, name=f"excl:{ch}")
    for gi in range(len(groups)):
        gvars = {v: 1 for v in problem.vars if v.startswith(f"g:{gi}:")}
        if gvars:
            problem.add(gvars, EQ, 1, name=f"onegroup:{gi}")
    problem.objective = objective
    if not problem.vars:
        return {}

    out = solve(problem)
    if out.status is Status.TIMED_OUT:
        raise BudgetExhaustedError("HBM binding ILP timed out")
    if out.status is Status.INFEASIBLE:
        if groups:
            raise InfeasibleError("group unsatisfiable: declared HBM access groups do not fit inside "
                                  "single hardware channel groups")
        raise InfeasibleError("channel exhausted in slot: no injective channel assignment exists")
    binding: dict[str, list[int]] = {}
    for v, (name, ch) in meaning.items():
        if out.assignment[v]:
            binding.setdefault(name, []).append(ch)
    return {name: tuple(sorted(binding[name])) for name in needy}
