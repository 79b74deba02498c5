"""Core value types shared across the simulator."""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass


class ValidationError(ValueError):
    """A job or configuration field holds an illegal value."""

    def __init__(self, field: str, value: object, reason: str = "out of range") -> None:
        self.field = field
        self.value = value
        super().__init__(f"invalid {field}={value!r}: {reason}")


class AllocationMode(str, enum.Enum):
    DEADLINE_EXACT = "deadline-exact"
    PROPORTIONAL_SCALEUP = "proportional-scaleup"
    EQUAL_QUANTIZED = "equal-quantized"


class SelectionRule(str, enum.Enum):
    MAX_LOADFREE = "max-loadfree"
    MIN_LOADFREE = "min-loadfree"


@dataclass(frozen=True)
class Job:
    """A batch job as submitted.

    ``length`` is the work in MI. ``deadline`` is relative to ``arrival``.
    The standalone runtime is not stored; it depends on the node rating and
    is obtained with :meth:`estimate`.
    """

    id: int
    arrival: float
    length: float
    deadline: float
    budget: float

    def estimate(self, capacity: float) -> float:
        return self.length / capacity

    @property
    def absolute_deadline(self) -> float:
        return absolute_deadline(self)


@dataclass(frozen=True)
class JobProgress:
    """Snapshot of a running job's accounting."""

    cpu_done: float = 0.0
    wall_elapsed: float = 0.0
    share: float = 0.0


@dataclass(frozen=True)
class PricingParams:
    alpha: float = 1.0
    beta: float = 100.0

    def __post_init__(self) -> None:
        for name in ("alpha", "beta"):
            v = getattr(self, name)
            if not math.isfinite(v) or v < 0:
                raise ValidationError(name, v, "must be finite and >= 0")
        if self.alpha == 0 and self.beta == 0:
            raise ValidationError("beta", self.beta, "alpha and beta cannot both be zero")


@dataclass(frozen=True)
class ClusterConfig:
    node_count: int = 10
    node_capacity: float = 100.0

    def __post_init__(self) -> None:
        if isinstance(self.node_count, bool) or not isinstance(self.node_count, int) or self.node_count < 1:
            raise ValidationError("node_count", self.node_count, "must be an integer >= 1")
        if not math.isfinite(self.node_capacity) or self.node_capacity <= 0:
            raise ValidationError("node_capacity", self.node_capacity, "must be > 0")


def validate_job(job: Job) -> Job:
    """Return ``job`` unchanged or raise :class:`ValidationError` naming the bad field."""
    checks = (
        ("arrival", job.arrival, lambda v: v >= 0),
        ("length", job.length, lambda v: v > 0),
        ("deadline", job.deadline, lambda v: v > 0),
        ("budget", job.budget, lambda v: v >= 0),
    )
    for name, value, ok in checks:
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ValidationError(name, value, "must be a number")
        if not math.isfinite(value) or not ok(value):
            raise ValidationError(name, value)
    return job


def absolute_deadline(job: Job) -> float:
    return job.arrival + job.deadline


class JobState(str, enum.Enum):
    PENDING = "pending"
    RUNNING = "running"
    COMPLETED = "completed"
    REJECTED = "rejected"


# legal lifecycle moves; anything else is a simulator bug
TRANSITIONS = {
    JobState.PENDING: {JobState.RUNNING, JobState.REJECTED},
    JobState.RUNNING: {JobState.COMPLETED},
    JobState.COMPLETED: set(),
    JobState.REJECTED: set(),
}


class StateError(RuntimeError):
    pass


def check_transition(old: JobState, new: JobState) -> JobState:
    if new not in TRANSITIONS[old]:
        raise StateError(f"illegal job state transition {old.value} -> {new.value}")
    return new
