"""Cycle-accurate simulation of a pipelined unit-rate dataflow graph, plus the
runtime burst detector model.

Channel model. A channel with ``L = lat + balance`` register stages is an
almost-full FIFO of physical depth ``capacity + grace``. With the delay line
full the flag trips at ``capacity`` queued tokens, and the ``grace`` slots
absorb the tokens still travelling through the registers. Flow control is
credit based: the producer holds one credit per physical slot, spends it on a
write and gets it back when the consumer pops the token, so a slowed-down
channel can use grace slots its delay line is not occupying. A token written
in cycle t is readable in cycle ``t + 1 + L``.

Actor model. A firing consumes one token from every input and produces one
token on every output ``latency`` cycles later. An actor fires when all
inputs are non-empty, every output has a free credit (tokens it has
already committed but not yet written hold theirs), ``ii`` cycles have passed since its
previous firing and it has firings left. All actors decide on the state at
the start of the cycle, then commit together.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field
from enum import Enum
from typing import Iterable, Mapping

from .model import InvalidInputError, TaskGraph, validate_graph

DEFAULT_TIMEOUT_THRESHOLD = 16


class ActorKind(str, Enum):
    JOINED = "joined"
    DETACHED = "detached"


@dataclass(frozen=True)
class ActorSpec:
    ii: int = 1
    latency: int = 0
    firings: int | None = None  # None: run until an input reaches end-of-transaction
    kind: ActorKind = ActorKind.JOINED

    def __post_init__(self):
        object.__setattr__(self, "kind", ActorKind(self.kind))
        if self.ii < 1 or self.latency < 0:
            raise ValueError(f"bad actor spec {self}")
        if self.firings is not None and self.firings < 0:
            raise ValueError(f"bad actor spec {self}")


@dataclass
class ChannelState:
    capacity: int  # physical depth
    grace: int
    delay: int
    queue: int = 0
    # (write cycle, arrival cycle) of tokens committed but not yet queued
    inflight: deque = field(default_factory=deque)
    produced: int = 0
    consumed: int = 0
    closed_at: int | None = None  # cycle the end-of-transaction marker becomes visible
    max_occupancy: int = 0

    @property
    def almost_full_threshold(self) -> int:
        """Queued tokens at which the flag trips while the delay line is full."""
        return self.capacity - self.grace

    @property
    def credits(self) -> int:
        return self.capacity - self.queue - len(self.inflight)


@dataclass(frozen=True)
class SimResult:
    total_cycles: int
    delivered: Mapping[str, int]
    max_occupancy: Mapping[str, int]
    firings: Mapping[str, int]
    deadlock: bool = False
    timed_out: bool = False


def _default_specs(graph: TaskGraph, specs: Mapping[str, ActorSpec]) -> dict[str, ActorSpec]:
    missing = [n for n in graph.task_names if n not in specs]
    if missing:
        raise InvalidInputError(f"no actor spec for tasks {missing}")
    return {n: specs[n] for n in graph.task_names}


def simulate(
    graph: TaskGraph,
    specs: Mapping[str, ActorSpec],
    max_cycles: int = 1_000_000,
    grace: Mapping[str, int] | int | None = None,
    audit: bool = False,
) -> SimResult:
    """Run the graph until every joined actor finishes, it deadlocks, or ``max_cycles`` pass.

    ``grace`` defaults to each channel's ``lat + balance``. With ``audit`` the
    token-conservation and no-overflow invariants are asserted every cycle.
    """
    problems = validate_graph(graph)
    if problems:
        raise InvalidInputError("invalid graph: " + "; ".join(problems))
    specs = _default_specs(graph, specs)
    names = graph.task_names
    chans: dict[str, ChannelState] = {}
    for ch in graph.channels:
        delay = ch.lat + ch.balance
        g = delay if grace is None else (grace if isinstance(grace, int) else grace.get(ch.id, delay))
        chans[ch.id] = ChannelState(capacity=ch.capacity + g, grace=g, delay=delay)
    ins = {n: [] for n in names}
    outs = {n: [] for n in names}
    for ch in graph.channels:
        outs[ch.src].append(ch.id)
        ins[ch.dst].append(ch.id)
    for n in names:
        s = specs[n]
        if not ins[n] and s.firings is None and s.kind is ActorKind.JOINED:
            raise InvalidInputError(f"source {n} needs a firing count or must be detached")

    fired = {n: 0 for n in names}
    last_fire = {n: None for n in names}
    finish: dict[str, int] = {}  # cycle after which the actor is done
    delivered = {n: 0 for n in names if not outs[n]}

    def done_firing(n, now):
        s = specs[n]
        if s.firings is not None and fired[n] >= s.firings:
            return True
        # end of transaction on any input that has fully drained
        return any(
            chans[c].closed_at is not None and chans[c].closed_at <= now and chans[c].queue == 0
            and not chans[c].inflight for c in ins[n]
        )

    def close_outputs(n, when):
        for c in outs[n]:
            st = chans[c]
            arrival = st.inflight[-1][1] if st.inflight else when
            st.closed_at = max(when, arrival)

    joined = [n for n in names if specs[n].kind is ActorKind.JOINED]
    t = 0
    last_activity = 0
    timed_out = deadlock = False
    while True:
        for st in chans.values():
            while st.inflight and st.inflight[0][1] <= t:
                st.inflight.popleft()
                st.queue += 1
            st.max_occupancy = max(st.max_occupancy, st.queue)
        for n in names:
            if n not in finish and done_firing(n, t):
                end = t if last_fire[n] is None else max(t, last_fire[n] + specs[n].latency + 1)
                finish[n] = end
                close_outputs(n, end)
        if all(n in finish for n in joined):
            break
        if t >= max_cycles:
            timed_out = True
            break

        ready = []
        for n in names:
            if n in finish:
                continue
            s = specs[n]
            if last_fire[n] is not None and t - last_fire[n] < s.ii:
                continue
            if any(chans[c].queue == 0 for c in ins[n]):
                continue
            if any(chans[c].credits <= 0 for c in outs[n]):
                continue
            ready.append(n)
        for n in ready:
            for c in ins[n]:
                chans[c].queue -= 1
                chans[c].consumed += 1
            write = t + specs[n].latency
            for c in outs[n]:
                st = chans[c]
                st.inflight.append((write, write + 1 + st.delay))
                st.produced += 1
            fired[n] += 1
            last_fire[n] = t
            if n in delivered:
                delivered[n] += 1
        if ready:
            last_activity = t
        if audit:
            for cid, st in chans.items():
                assert st.produced == st.consumed + st.queue + len(st.inflight), cid
                assert st.queue <= st.capacity, f"overflow on {cid}"
                assert st.queue + len(st.inflight) <= st.capacity, cid
        if not ready:
            pending = [st.inflight[0][1] for st in chans.values() if st.inflight]
            waits = [last_fire[n] + specs[n].ii for n in names
                     if n not in finish and last_fire[n] is not None and last_fire[n] + specs[n].ii > t]
            nxt = min(pending + waits, default=None)
            if nxt is None:
                # nothing in flight and nobody can fire: either done-by-EoT next cycle or stuck
                if any(n not in finish and done_firing(n, t + 1) for n in names):
                    t += 1
                    continue
                deadlock = True
                t = last_activity + 1
                break
            t = max(t + 1, nxt)
            continue
        t += 1

    if deadlock:
        total = t
    elif timed_out:
        total = max_cycles
    else:
        total = max((finish[n] for n in joined), default=0)
    return SimResult(
        total_cycles=total,
        delivered=delivered,
        max_occupancy={cid: st.max_occupancy for cid, st in chans.items()},
        firings=fired,
        deadlock=deadlock,
        timed_out=timed_out,
    )


@dataclass(frozen=True)
class ThroughputComparison:
    cycles_before: int
    cycles_after: int
    ratio: float


def _topology(graph: TaskGraph):
    return sorted(graph.task_names), sorted((c.id, c.src, c.dst, c.width, c.capacity) for c in graph.channels)


def compare_throughput(
    before: TaskGraph,
    after: TaskGraph,
    specs: Mapping[str, ActorSpec],
    max_cycles: int = 1_000_000,
) -> ThroughputComparison:
    """Simulate both graphs; ``ratio = cycles_after / cycles_before``."""
    if _topology(before) != _topology(after):
        raise InvalidInputError("topology mismatch: graphs may differ only in lat/balance")
    a = simulate(before, specs, max_cycles)
    b = simulate(after, specs, max_cycles)
    for label, r in (("before", a), ("after", b)):
        if r.deadlock or r.timed_out:
            raise InvalidInputError(f"{label} simulation did not complete (deadlock={r.deadlock})")
    return ThroughputComparison(a.total_cycles, b.total_cycles, b.total_cycles / a.total_cycles)


@dataclass(frozen=True)
class Burst:
    addr: int
    len: int


@dataclass
class BurstDetector:
    """Merges consecutive addresses into bursts; flushes after ``timeout_threshold`` idle cycles."""

    timeout_threshold: int = DEFAULT_TIMEOUT_THRESHOLD
    base_addr: int | None = None
    length_counter: int = 0
    last_addr: int | None = None
    idle_cycles: int = 0

    @property
    def open(self) -> bool:
        return self.length_counter > 0

    def _take(self) -> Burst:
        out = Burst(self.base_addr, self.length_counter)
        self.base_addr, self.last_addr, self.length_counter = None, None, 0
        return out

    def step(self, addr: int | None) -> Burst | None:
        if addr is None:
            if not self.open:
                return None
            self.idle_cycles += 1
            return self._take() if self.idle_cycles >= self.timeout_threshold else None
        self.idle_cycles = 0
        if self.open and addr == self.last_addr + 1:
            self.length_counter += 1
            self.last_addr = addr
            return None
        out = self._take() if self.open else None
        self.base_addr = self.last_addr = addr
        self.length_counter = 1
        return out


def burst_step(d: BurstDetector, addr: int | None) -> Burst | None:
    return d.step(addr)


@dataclass(frozen=True)
class EmittedBurst:
    emit_cycle: int
    addr: int
    len: int


def burst_run(trace: Iterable[tuple[int, int]], timeout_threshold: int = DEFAULT_TIMEOUT_THRESHOLD) -> list[EmittedBurst]:
    """Fold the detector over ``(cycle, addr)`` requests, then idle until the last burst flushes."""
    if timeout_threshold < 1:
        raise ValueError("timeout_threshold must be at least 1")
    d = BurstDetector(timeout_threshold)
    out: list[EmittedBurst] = []
    now = None
    for cycle, addr in trace:
        if now is not None:
            if cycle < now:
                raise ValueError(f"trace goes back in time at cycle {cycle}")
            for idle in range(now + 1, cycle):
                b = d.step(None)
                if b:
                    out.append(EmittedBurst(idle, b.addr, b.len))
        b = d.step(addr)
        if b:
            out.append(EmittedBurst(cycle, b.addr, b.len))
        now = cycle
    while d.open:
        now += 1
        b = d.step(None)
        if b:
            out.append(EmittedBurst(now, b.addr, b.len))
    return out
