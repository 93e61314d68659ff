"""Stackelberg scheduling for federated learning over a constrained wireless uplink.

Leader: AoU-weighted device selection. Follower: per-pair polyblock resource
allocation plus exchange-stable sub-channel matching.
"""

from stackfl.system import (
    ChannelMatrix,
    Device,
    SystemConfig,
    draw_channels,
    is_infeasible_pair,
    place_devices,
)
from stackfl.allocation import AllocationResult, PairProblem, build_gamma, solve_allocation
from stackfl.matching import U_MAX, Matching, stable_match, verify_2es
from stackfl.selection import AoUState, SelectionOutcome, priority_list, select_devices_aou

__version__ = "0.1.0"

__all__ = [
    "AllocationResult",
    "AoUState",
    "ChannelMatrix",
    "Device",
    "Matching",
    "PairProblem",
    "SelectionOutcome",
    "SystemConfig",
    "U_MAX",
    "build_gamma",
    "draw_channels",
    "is_infeasible_pair",
    "place_devices",
    "priority_list",
    "select_devices_aou",
    "solve_allocation",
    "stable_match",
    "verify_2es",
]
