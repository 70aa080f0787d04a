"""Joint NOMA clustering, RB allocation and power control for uplink edge offloading."""
from .channel import ChannelMatrix, ChannelParams, channel_gains, generate_scenario
from .heuristic import run_heuristic
from .model import Assignment, SystemConfig, TaskSpec, audit_constraints, evaluate
from .power import solve_all, solve_cluster, verify_exact

__version__ = "0.1.0"

__all__ = [
    "Assignment",
    "ChannelMatrix",
    "ChannelParams",
    "SystemConfig",
    "TaskSpec",
    "audit_constraints",
    "channel_gains",
    "evaluate",
    "generate_scenario",
    "run_heuristic",
    "solve_all",
    "solve_cluster",
    "verify_exact",
]
