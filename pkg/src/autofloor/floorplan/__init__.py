from .hbm import bind_hbm_channels
from .partition import (
    PartitionState,
    build_bipartition_ilp,
    early_check,
    floorplan,
    initial_state,
    merge_groups,
    partition_step,
    partition_trace,
)
from .sweep import SweepAttempt, SweepCandidate, pareto_front, sweep_attempts, sweep_candidates

__all__ = [
    "PartitionState",
    "SweepAttempt",
    "SweepCandidate",
    "bind_hbm_channels",
    "build_bipartition_ilp",
    "early_check",
    "floorplan",
    "initial_state",
    "merge_groups",
    "pareto_front",
    "partition_step",
    "partition_trace",
    "sweep_attempts",
    "sweep_candidates",
]
