import pytest

from autofloor.devices import u250
from autofloor.model import Channel, ResourceVector, Task, TaskGraph

# Each figure-5 vertex needs 130K LUTs; a U250 slot allows 0.7 * 216000 = 151200,
# so every region of k slots holds at most k vertices (5 * 130K > 4 * 151200) and
# the final 8-way split puts exactly one vertex in every slot.
FIG5_AREA = ResourceVector(lut=130_000)

# (src, dst, width). v5 is the IO module pinned to the bottom-right slot.
FIG5_EDGES = [
    ("v2", "v6", 64), ("v1", "v3", 64), ("v2", "v3", 16), ("v6", "v1", 16),
    ("v4", "v7", 64), ("v5", "v8", 64), ("v7", "v8", 16), ("v4", "v5", 16),
    ("v1", "v4", 16), ("v3", "v7", 16),
]

FIG5_FINAL = {
    "v2": (3, 0), "v6": (3, 1), "v1": (2, 1), "v3": (2, 0),
    "v4": (1, 1), "v7": (1, 0), "v5": (0, 1), "v8": (0, 0),
}

# (id, src, dst, lat, width): three lat-1 channels and one width-2 channel
FIG6_EDGES = [
    ("e12", 1, 2, 0, 1), ("e13", 1, 3, 1, 1), ("e14", 1, 4, 0, 2), ("e15", 1, 5, 0, 1),
    ("e16", 1, 6, 0, 1), ("e23", 2, 3, 0, 1), ("e27", 2, 7, 1, 1), ("e37", 3, 7, 1, 1),
    ("e45", 4, 5, 0, 1), ("e47", 4, 7, 0, 1), ("e56", 5, 6, 0, 1), ("e57", 5, 7, 0, 1),
    ("e67", 6, 7, 0, 1),
]


def figure5_graph() -> TaskGraph:
    tasks = [Task(f"v{i}", FIG5_AREA, fixed_slot=(0, 1) if i == 5 else None) for i in range(1, 9)]
    chans = [Channel(f"{s}_{d}", s, d, width=w) for s, d, w in FIG5_EDGES]
    return TaskGraph(tuple(tasks), tuple(chans))


def figure6_graph() -> TaskGraph:
    tasks = [Task(f"v{i}") for i in range(1, 8)]
    chans = [Channel(cid, f"v{s}", f"v{d}", width=w, lat=lat) for cid, s, d, lat, w in FIG6_EDGES]
    return TaskGraph(tuple(tasks), tuple(chans))


def chain(n=3, capacity=4, lats=None, width=32) -> TaskGraph:
    lats = lats or {}
    tasks = [Task(f"a{i}") for i in range(n)]
    chans = [Channel(f"e{i}", f"a{i}", f"a{i + 1}", width=width, capacity=capacity, lat=lats.get(i, 0))
             for i in range(n - 1)]
    return TaskGraph(tuple(tasks), tuple(chans))


def diamond(capacity=2, lat=None, balance=None, width=1) -> TaskGraph:
    lat, balance = lat or {}, balance or {}
    edges = [("ab", "a", "b"), ("ac", "a", "c"), ("bd", "b", "d"), ("cd", "c", "d")]
    return TaskGraph(
        tuple(Task(n) for n in "abcd"),
        tuple(Channel(i, s, d, width=width, capacity=capacity, lat=lat.get(i, 0), balance=balance.get(i, 0))
              for i, s, d in edges),
    )


@pytest.fixture
def device():
    return u250()


@pytest.fixture
def fig5():
    return figure5_graph()


@pytest.fixture
def fig6():
    return figure6_graph()


# ---------------------------------------------------------------- acceptance report

ACCEPTANCE: dict[int, tuple[str, str]] = {}


@pytest.fixture
def criterion(request):
    """Records one acceptance criterion's outcome for the end-of-run summary."""
    marker = request.node.get_closest_marker("criterion")
    number, title = marker.args
    yield
    rep = getattr(request.node, "rep_call", None)
    ok = rep is not None and rep.passed
    ACCEPTANCE[number] = ("PASS" if ok else "FAIL", title)


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    if rep.when == "call":
        item.rep_call = rep


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(number, title): acceptance criterion")


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE):
        status, title = ACCEPTANCE[n]
        terminalreporter.write_line(f"criterion {n:2d}: {status}  {title}")
