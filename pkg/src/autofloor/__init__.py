"""Floorplan-aware pipelining for task-parallel HLS dataflow designs."""

from .balance import (
    CoOptResult,
    CycleError,
    SdcInfeasible,
    SdcSolution,
    balance_latency,
    balance_overhead,
    co_optimize,
    find_positive_cycle,
    solve_sdc,
)
from .devices import preset
from .floorplan import bind_hbm_channels, floorplan, partition_step, partition_trace, sweep_candidates
from .model import (
    DEFAULT_MAX_UTIL,
    AutofloorError,
    BudgetExhaustedError,
    Channel,
    DeviceGrid,
    Floorplan,
    InfeasibleError,
    InvalidInputError,
    PartitionDirective,
    ResourceVector,
    Slot,
    Task,
    TaskGraph,
    crossing_cost,
    slot_utilization,
    validate_graph,
)
from .pipeline import apply_pipelining, pipeline_depth
from .sim import ActorKind, ActorSpec, BurstDetector, burst_run, burst_step, compare_throughput, simulate

__version__ = "0.1.0"
