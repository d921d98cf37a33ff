"""Importance-weighted task allocation for on-edge multi-task learning."""

from .core import (
    AllocationMatrix,
    DeviceSet,
    EdgeDevice,
    Feasibility,
    MeritReport,
    Task,
    TaskSet,
    allocation_objective,
    check_feasible,
    overall_merit,
    task_importance,
    weighted_mtl_objective,
)

__version__ = "0.1.0"

__all__ = [
    "AllocationMatrix",
    "DeviceSet",
    "EdgeDevice",
    "Feasibility",
    "MeritReport",
    "Task",
    "TaskSet",
    "allocation_objective",
    "check_feasible",
    "overall_merit",
    "task_importance",
    "weighted_mtl_objective",
    "__version__",
]
