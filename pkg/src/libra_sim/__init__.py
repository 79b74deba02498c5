"""Deadline- and budget-driven cluster scheduling (Libra) with a FIFO baseline simulator."""

from .domain import (
    AllocationMode,
    ClusterConfig,
    Job,
    JobProgress,
    PricingParams,
    SelectionRule,
    ValidationError,
    absolute_deadline,
    validate_job,
)
from .engine import SimResult, run
from .policy import Decision, FifoPolicy, LibraPolicy, Outcome
from .pricing import CostQuote, admit_budget, cost
from .workload import PRESETS, WorkloadSpec, generate, load_trace, preset, save_trace

__version__ = "0.1.0"

__all__ = [
    "AllocationMode",
    "ClusterConfig",
    "CostQuote",
    "Decision",
    "FifoPolicy",
    "Job",
    "JobProgress",
    "LibraPolicy",
    "Outcome",
    "PRESETS",
    "PricingParams",
    "SelectionRule",
    "SimResult",
    "ValidationError",
    "WorkloadSpec",
    "absolute_deadline",
    "admit_budget",
    "cost",
    "generate",
    "load_trace",
    "preset",
    "run",
    "save_trace",
    "validate_job",
]
