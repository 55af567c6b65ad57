"""Exact 0/1 integer linear programming.

Two engines share one contract (exact optimum, deterministic output):

* ``native``: depth-first implicit enumeration with bound propagation. Branches
  on variables in declaration order trying 0 before 1 and only replaces the
  incumbent on strict improvement, so the optimum it returns is the
  lexicographically smallest one.
* ``highs``: the HiGHS branch-and-cut solver through :func:`scipy.optimize.milp`,
  used for problems too large for plain enumeration.
"""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field
from enum import Enum
from typing import Mapping

import numpy as np

log = logging.getLogger(__name__)

DEFAULT_TIME_LIMIT = 300.0
NATIVE_MAX_VARS = 24

LE, GE, EQ = "<=", ">=", "=="


@dataclass(frozen=True)
class Constraint:
    coeffs: Mapping[str, int]
    sense: str
    rhs: int
    name: str = ""

    def __post_init__(self):
        if self.sense not in (LE, GE, EQ):
            raise ValueError(f"bad relation {self.sense!r}")

    def satisfied_by(self, x: Mapping[str, int]) -> bool:
        lhs = sum(c * x[v] for v, c in self.coeffs.items())
        if self.sense == LE:
            return lhs <= self.rhs
        if self.sense == GE:
            return lhs >= self.rhs
        return lhs == self.rhs


@dataclass
class IlpProblem:
    vars: list[str]
    constraints: list[Constraint] = field(default_factory=list)
    objective: dict[str, int] = field(default_factory=dict)
    offset: int = 0
    time_limit: float | None = DEFAULT_TIME_LIMIT
    # 0/1 at every optimum once the other variables are binary (e.g. a product
    # pushed against its linearization by the objective); HiGHS may relax them
    implied_binary: frozenset[str] = frozenset()

    def __post_init__(self):
        declared = set(self.vars)
        if len(declared) != len(self.vars):
            raise ValueError("duplicate variable ids")
        for con in self.constraints:
            self._check(con.coeffs, declared, con.name or "constraint")
            if not isinstance(con.rhs, (int, np.integer)):
                raise TypeError(f"{con.name}: bound must be an integer")
        self._check(self.objective, declared, "objective")
        if not set(self.implied_binary) <= declared:
            raise ValueError("implied_binary names undeclared variables")

    @staticmethod
    def _check(coeffs, declared, where):
        for v, c in coeffs.items():
            if v not in declared:
                raise ValueError(f"{where}: undeclared variable {v!r}")
            if not isinstance(c, (int, np.integer)):
                raise TypeError(f"{where}: coefficient of {v!r} must be an integer")

    def add(self, coeffs: Mapping[str, int], sense: str, rhs: int, name: str = "") -> None:
        coeffs = {v: int(c) for v, c in coeffs.items() if c}
        self.constraints.append(Constraint(coeffs, sense, int(rhs), name))

    def evaluate(self, x: Mapping[str, int]) -> int:
        return self.offset + sum(c * x[v] for v, c in self.objective.items())

    def is_feasible(self, x: Mapping[str, int]) -> bool:
        return all(con.satisfied_by(x) for con in self.constraints)


class Status(str, Enum):
    OPTIMAL = "Optimal"
    INFEASIBLE = "Infeasible"
    TIMED_OUT = "TimedOut"


@dataclass(frozen=True)
class IlpOutcome:
    status: Status
    assignment: dict[str, int] | None = None
    objective_value: int | None = None
    engine: str = ""


class _Timeout(Exception):
    pass


def _as_rows(problem: IlpProblem, index: dict[str, int]) -> list[tuple[list[tuple[int, int]], int]]:
    """Every constraint as one or two rows ``sum(a_j x_j) <= b``."""
    rows = []
    for con in problem.constraints:
        terms = [(index[v], int(c)) for v, c in con.coeffs.items() if c]
        if con.sense in (LE, EQ):
            rows.append((terms, con.rhs))
        if con.sense in (GE, EQ):
            rows.append(([(j, -a) for j, a in terms], -con.rhs))
    return rows


def _solve_native(problem: IlpProblem) -> IlpOutcome:
    n = len(problem.vars)
    index = {v: i for i, v in enumerate(problem.vars)}
    rows = _as_rows(problem, index)
    cost = [0] * n
    for v, c in problem.objective.items():
        cost[index[v]] += int(c)
    var_rows: list[list[tuple[int, int]]] = [[] for _ in range(n)]
    for r, (terms, _) in enumerate(rows):
        for j, a in terms:
            var_rows[j].append((r, a))
    rhs = [b for _, b in rows]
    # minimum achievable row activity given the current partial assignment
    min_act = [sum(min(0, a) for _, a in terms) for terms, _ in rows]
    value = [-1] * n
    free_neg = sum(min(0, c) for c in cost)
    state = {"fixed_cost": 0, "free_neg": free_neg}
    best: dict = {"obj": None, "x": None}
    deadline = None if problem.time_limit is None else time.monotonic() + problem.time_limit
    counter = [0]

    def assign(j, val, trail):
        value[j] = val
        trail.append(j)
        state["fixed_cost"] += cost[j] * val
        state["free_neg"] -= min(0, cost[j])
        ok = True
        for r, a in var_rows[j]:
            min_act[r] += a * val - min(0, a)
            if min_act[r] > rhs[r]:
                ok = False
        return ok

    def undo(trail, upto):
        while len(trail) > upto:
            j = trail.pop()
            val = value[j]
            for r, a in var_rows[j]:
                min_act[r] -= a * val - min(0, a)
            state["fixed_cost"] -= cost[j] * val
            state["free_neg"] += min(0, cost[j])
            value[j] = -1

    def propagate(trail, start):
        # fix free variables whose other value would break a row
        queue = trail[start:]
        rows_todo = {r for j in queue for r, _ in var_rows[j]}
        while rows_todo:
            r = rows_todo.pop()
            slack = rhs[r] - min_act[r]
            for j, a in rows[r][0]:
                if value[j] != -1:
                    continue
                if a > 0 and a > slack:
                    forced = 0
                elif a < 0 and -a > slack:
                    forced = 1
                else:
                    continue
                if not assign(j, forced, trail):
                    return False
                rows_todo.update(rr for rr, _ in var_rows[j])
                slack = rhs[r] - min_act[r]
        return True

    def dfs(trail, pos):
        counter[0] += 1
        if deadline is not None and counter[0] % 2048 == 0 and time.monotonic() > deadline:
            raise _Timeout
        while pos < n and value[pos] != -1:
            pos += 1
        bound = state["fixed_cost"] + state["free_neg"]
        if best["obj"] is not None and bound >= best["obj"]:
            return
        if pos == n:
            best["obj"] = state["fixed_cost"]
            best["x"] = list(value)
            return
        for val in (0, 1):
            mark = len(trail)
            if assign(pos, val, trail) and propagate(trail, mark):
                dfs(trail, pos + 1)
            undo(trail, mark)

    trail: list[int] = []
    try:
        if all(m <= b for m, b in zip(min_act, rhs)):
            dfs(trail, 0)
    except _Timeout:
        return IlpOutcome(Status.TIMED_OUT, engine="native")
    if best["x"] is None:
        return IlpOutcome(Status.INFEASIBLE, engine="native")
    x = {v: best["x"][i] for v, i in index.items()}
    return IlpOutcome(Status.OPTIMAL, x, problem.evaluate(x), engine="native")


def _solve_highs(problem: IlpProblem) -> IlpOutcome:
    from scipy.optimize import Bounds, LinearConstraint, milp
    from scipy.sparse import coo_matrix

    n = len(problem.vars)
    index = {v: i for i, v in enumerate(problem.vars)}
    c = np.zeros(n)
    for v, a in problem.objective.items():
        c[index[v]] += a
    data, ri, ci, lo, hi = [], [], [], [], []
    for r, con in enumerate(problem.constraints):
        for v, a in con.coeffs.items():
            data.append(a)
            ri.append(r)
            ci.append(index[v])
        lo.append(-np.inf if con.sense == LE else con.rhs)
        hi.append(np.inf if con.sense == GE else con.rhs)
    constraints = []
    if problem.constraints:
        A = coo_matrix((data, (ri, ci)), shape=(len(problem.constraints), n)).tocsr()
        constraints = [LinearConstraint(A, lo, hi)]
    options = {"disp": False, "mip_rel_gap": 0.0}
    if problem.time_limit is not None:
        options["time_limit"] = float(problem.time_limit)
    integrality = np.array([0 if v in problem.implied_binary else 1 for v in problem.vars])
    res = milp(c, constraints=constraints, integrality=integrality, bounds=Bounds(0, 1), options=options)
    if res.status == 2:
        return IlpOutcome(Status.INFEASIBLE, engine="highs")
    if res.status == 1 or res.x is None:
        if res.status not in (0, 1):
            raise RuntimeError(f"HiGHS failed: {res.message}")
        return IlpOutcome(Status.TIMED_OUT, engine="highs")
    xs = np.rint(res.x).astype(int)
    x = {v: int(xs[i]) for v, i in index.items()}
    if not problem.is_feasible(x):
        raise RuntimeError("HiGHS returned an assignment violating a constraint")
    return IlpOutcome(Status.OPTIMAL, x, problem.evaluate(x), engine="highs")


def solve(problem: IlpProblem, engine: str = "auto") -> IlpOutcome:
    """Minimize ``problem.objective`` over binary assignments.

    ``engine`` is ``"native"``, ``"highs"`` or ``"auto"`` (native up to
    :data:`NATIVE_MAX_VARS` variables).
    """
    if engine == "auto":
        engine = "native" if len(problem.vars) <= NATIVE_MAX_VARS else "highs"
    if not problem.vars:
        ok = problem.is_feasible({})
        return IlpOutcome(Status.OPTIMAL if ok else Status.INFEASIBLE, {} if ok else None,
                          problem.offset if ok else None, engine)
    t0 = time.monotonic()
    out = _solve_native(problem) if engine == "native" else _solve_highs(problem)
    log.debug("ilp %s: %d vars, %d constraints -> %s in %.3fs", engine, len(problem.vars),
              len(problem.constraints), out.status.value, time.monotonic() - t0)
    return out


def to_lp_text(problem: IlpProblem) -> str:
    """Render the instance in CPLEX LP format for cross-checking with other solvers."""

    def expr(coeffs: Mapping[str, int]) -> str:
        terms = [f"{'-' if c < 0 else '+'} {abs(c)} {_lp_name(v)}" for v, c in coeffs.items() if c]
        if not terms:
            return f"0 {_lp_name(problem.vars[0])}" if problem.vars else "0"
        text = " ".join(terms)
        return text[2:] if text.startswith("+ ") else text

    lines = [f"\\ constant offset {problem.offset}", "Minimize", " obj: " + expr(problem.objective), "Subject To"]
    for i, con in enumerate(problem.constraints):
        sense = "=" if con.sense == EQ else con.sense
        lines.append(f" c{i}_{_lp_name(con.name)}: {expr(con.coeffs)} {sense} {con.rhs}")
    lines.append("Binary")
    lines.extend(" " + _lp_name(v) for v in problem.vars)
    lines.append("End")
    return "\n".join(lines) + "\n"


def _lp_name(v: str) -> str:
    return "".join(ch if ch.isalnum() or ch in "_." else "_" for ch in v)


def unsatisfied(problem: IlpProblem, x: Mapping[str, int]) -> list[str]:
    """Names of the constraints ``x`` violates."""
    return [con.name or str(i) for i, con in enumerate(problem.constraints) if not con.satisfied_by(x)]
