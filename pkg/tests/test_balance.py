import random

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from autofloor.balance import (
    CycleError,
    SdcInfeasible,
    SdcSolution,
    balance_latency,
    balance_overhead,
    co_optimize,
    find_positive_cycle,
    solve_sdc,
)
from autofloor.model import BudgetExhaustedError, Channel, InvalidInputError, ResourceVector, Task, TaskGraph
from autofloor.synth import random_dag
from conftest import chain, diamond
from oracles import basis_sdc, brute_force_sdc, path_balance_violations


def test_single_edge_needs_no_balance():
    sol = solve_sdc(chain(2, lats={0: 3}))
    assert sol.balances == {"e0": 0} and sol.overhead == 0


def test_figure6(fig6):
    sol = solve_sdc(fig6)
    assert isinstance(sol, SdcSolution)
    assert sol.overhead == 7
    expected = {c.id: 0 for c in fig6.channels}
    expected.update(e12=1, e47=2, e57=2, e67=2)
    assert dict(sol.balances) == expected


def test_figure6_overhead_via_balance_latency(fig6):
    g = balance_latency(fig6)
    assert balance_overhead(g) == 1 * 1 + 3 * (2 * 1)


def test_diamond_tie_break():
    sol = solve_sdc(diamond(lat={"ab": 2}))
    assert sol.overhead == 2
    # ac sorts before cd, so the lexicographically smallest vector puts the balance on cd
    assert sol.balances == {"ab": 0, "ac": 0, "bd": 0, "cd": 2}


def test_chain_never_balanced():
    sol = solve_sdc(chain(5, lats={0: 2, 2: 7, 3: 1}))
    assert all(b == 0 for b in sol.balances.values())


def test_zero_latency_cycle_is_feasible():
    g = TaskGraph((Task("a"), Task("b")), (Channel("x", "a", "b"), Channel("y", "b", "a")))
    sol = solve_sdc(g)
    assert isinstance(sol, SdcSolution) and sol.overhead == 0


def test_positive_cycle_witness():
    g = TaskGraph(
        (Task("a"), Task("b"), Task("c"), Task("d")),
        (Channel("x", "a", "b", lat=2), Channel("y", "b", "c"), Channel("z", "c", "a"), Channel("w", "c", "d")),
    )
    sol = solve_sdc(g)
    assert isinstance(sol, SdcInfeasible)
    assert sorted(sol.cycle) == ["x", "y", "z"]
    with pytest.raises(CycleError) as exc:
        balance_latency(g)
    assert set(exc.value.cycle) == {"x", "y", "z"}


def _walk_cycle(g, cycle):
    chans = g.channel_map()
    for a, b in zip(cycle, cycle[1:] + cycle[:1]):
        assert chans[a].dst == chans[b].src
    return sum(chans[c].lat for c in cycle)


@given(st.integers(0, 2**32))
@settings(max_examples=60, deadline=None)
def test_witness_is_genuine_positive_cycle(seed):
    rng = random.Random(seed)
    n = rng.randint(2, 8)
    chans = []
    for k in range(rng.randint(1, 14)):
        a, b = rng.sample(range(n), 2)
        chans.append(Channel(f"c{k:02d}", f"t{a}", f"t{b}", lat=rng.randint(0, 2)))
    g = TaskGraph(tuple(Task(f"t{i}") for i in range(n)), tuple(chans))
    sol = solve_sdc(g)
    if isinstance(sol, SdcInfeasible):
        assert _walk_cycle(g, list(sol.cycle)) > 0
    else:
        for c in g.channels:
            assert sol.potentials[c.src] - sol.potentials[c.dst] - c.lat == sol.balances[c.id] >= 0
        assert find_positive_cycle(g) is None


def test_negative_latency_rejected():
    g = TaskGraph((Task("a"), Task("b")), (Channel("x", "a", "b", lat=-1),))
    with pytest.raises(InvalidInputError):
        solve_sdc(g)


@pytest.mark.parametrize("seed", range(40))
def test_matches_exhaustive_oracles(seed):
    rng = random.Random(seed)
    g = random_dag(rng, rng.randint(2, 8), p=0.35, max_lat=3)
    sol = solve_sdc(g)
    best, _ = basis_sdc(g)
    assert sol.overhead == best
    assert path_balance_violations(balance_latency(g)) == []


@pytest.mark.parametrize("seed", range(20))
def test_basis_oracle_agrees_with_grid_search(seed):
    rng = random.Random(1000 + seed)
    g = random_dag(rng, rng.randint(2, 5), p=0.5, max_lat=2)
    assert basis_sdc(g)[0] == brute_force_sdc(g) == solve_sdc(g).overhead


def test_naive_cutset_upper_bound(fig6):
    # balancing each edge against its longest parallel path is feasible but never better
    g = fig6
    names = g.task_names
    longest = {n: 0 for n in names}
    for _ in names:
        for c in g.channels:
            longest[c.src] = max(longest[c.src], longest[c.dst] + c.lat)
    naive = sum((longest[c.src] - longest[c.dst] - c.lat) * c.width for c in g.channels)
    assert solve_sdc(g).overhead <= naive


@given(st.integers(0, 2**32))
@settings(max_examples=40, deadline=None)
def test_zero_latency_identity(seed):
    g = random_dag(random.Random(seed), 7, p=0.4, max_lat=0)
    sol = solve_sdc(g)
    assert sol.overhead == 0 and all(b == 0 for b in sol.balances.values())


def test_potentials_anchored_per_component():
    g = TaskGraph(tuple(Task(n) for n in "abcd"),
                  (Channel("x", "a", "b", lat=2), Channel("y", "c", "d", lat=5)))
    sol = solve_sdc(g)
    assert sol.potentials == {"a": 2, "b": 0, "c": 5, "d": 0}


# ---------------------------------------------------------------- feedback loop

IO = ResourceVector(lut=20_000)


def two_task_cycle(area=IO):
    return TaskGraph(
        (Task("a", area), Task("b", area), Task("io_a", IO, fixed_slot=(0, 0)), Task("io_b", IO, fixed_slot=(3, 1))),
        (Channel("ab", "a", "b", width=1), Channel("ba", "b", "a", width=1),
         Channel("ia", "io_a", "a", width=512), Channel("bo", "b", "io_b", width=512)),
    )


def test_acyclic_converges_in_one_round(device, fig5):
    res = co_optimize(fig5, device)
    assert res.rounds == 1
    assert path_balance_violations(res.graph) == []


def test_cycle_feedback_two_rounds(device):
    res = co_optimize(two_task_cycle(), device)
    assert res.rounds == 2
    assert res.floorplan.assignment["a"] == res.floorplan.assignment["b"]
    lat = {c.id: (c.lat, c.balance) for c in res.graph.channels}
    assert lat["ab"] == (0, 0) and lat["ba"] == (0, 0)
    assert frozenset({"a", "b"}) in res.groups


def test_oversized_cycle_is_unresolvable(device):
    big = ResourceVector(lut=int(0.6 * 151_200))
    with pytest.raises(CycleError, match="unresolvable cycle"):
        co_optimize(two_task_cycle(big), device)


def test_feedback_budget(device):
    with pytest.raises(BudgetExhaustedError, match="feedback budget exhausted"):
        co_optimize(two_task_cycle(), device, max_feedback_rounds=1)
