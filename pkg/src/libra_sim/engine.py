"""Discrete-event simulation of a cluster under a scheduling policy.

Shares only change at events, so each node's next completion is computed
exactly instead of stepping time. A node holds at most one live completion
event; older ones are invalidated by a per-node version counter and skipped
when popped.
"""

from __future__ import annotations

import enum
import heapq
import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence

from .domain import (
    ClusterConfig,
    Job,
    JobState,
    ValidationError,
    absolute_deadline,
    check_transition,
    validate_job,
)
from .node_ledger import NodeState, dispatch, next_completion_time
from .policy import (
    Decision,
    FifoPolicy,
    LibraPolicy,
    Outcome,
    PolicyKind,
    meets,
    on_completion,
    schedule_fifo,
    schedule_libra,
)
from .pricing import CostQuote, admit_budget


class ConfigError(ValueError):
    pass


class InvariantError(RuntimeError):
    """The simulation reached a state that should be impossible."""


class EventKind(enum.IntEnum):
    # value doubles as the tie-break priority at equal timestamps
    COMPLETION = 0
    ARRIVAL = 1
    HORIZON = 2


@dataclass(frozen=True, order=True)
class Event:
    time: float
    kind: EventKind
    sequence: int
    job_id: int | None = field(default=None, compare=False)
    node_id: int | None = field(default=None, compare=False)
    version: int = field(default=0, compare=False)


@dataclass
class JobRecord:
    job: Job
    state: JobState = JobState.PENDING
    decision: Decision | None = None
    node_id: int | None = None
    dispatch_time: float | None = None
    completion_time: float | None = None
    quote: CostQuote | None = None

    def move(self, new: JobState) -> None:
        self.state = check_transition(self.state, new)

    @property
    def absolute_deadline(self) -> float:
        return absolute_deadline(self.job)

    @property
    def accepted(self) -> bool:
        return self.decision is not None and self.decision.accepted

    @property
    def met_deadline(self) -> bool | None:
        if self.completion_time is None:
            return None
        return meets(self.completion_time, self.absolute_deadline)

    @property
    def time_to_complete(self) -> float | None:
        if self.completion_time is None:
            return None
        return self.completion_time - self.job.arrival

    @property
    def time_remaining_to_deadline(self) -> float | None:
        if self.completion_time is None:
            return None
        return self.absolute_deadline - self.completion_time


@dataclass(frozen=True)
class UtilizationSample:
    time: float
    node_id: int
    utilization: float


@dataclass
class SimResult:
    cluster: ClusterConfig
    policy: PolicyKind
    records: list[JobRecord]
    samples: list[UtilizationSample] = field(default_factory=list)
    event_times: list[float] = field(default_factory=list)
    # per node: MI delivered, first dispatch time, clock at the end of the run
    delivered: dict[int, float] = field(default_factory=dict)
    first_dispatch: dict[int, float | None] = field(default_factory=dict)
    last_event: float = 0.0
    exact_estimates: bool = True

    def count(self, outcome: Outcome) -> int:
        return sum(1 for r in self.records if r.decision is not None and r.decision.outcome is outcome)

    @property
    def accepted(self) -> int:
        return self.count(Outcome.ASSIGNED)

    @property
    def rejected_budget(self) -> int:
        return self.count(Outcome.REJECTED_BUDGET)

    @property
    def rejected_deadline(self) -> int:
        return self.count(Outcome.REJECTED_DEADLINE)

    @property
    def completed_by_deadline(self) -> int:
        return sum(1 for r in self.records if r.met_deadline)

    @property
    def deadline_misses(self) -> int:
        return sum(1 for r in self.records if r.met_deadline is False)

    def counts(self) -> dict[str, int]:
        return {
            "total": len(self.records),
            "accepted": self.accepted,
            "rejected_budget": self.rejected_budget,
            "rejected_deadline": self.rejected_deadline,
            "completed_by_deadline": self.completed_by_deadline,
        }

    def share_violations(self, tol: float = 1e-9) -> list[UtilizationSample]:
        return [s for s in self.samples if s.utilization > 1.0 + tol]

    def audit(self) -> list[str]:
        """Check the result's structural invariants; returns human-readable problems."""
        problems = []
        c = self.counts()
        if c["accepted"] + c["rejected_budget"] + c["rejected_deadline"] != c["total"]:
            problems.append(f"outcome counts do not add up: {c}")
        if c["completed_by_deadline"] > c["accepted"]:
            problems.append(f"more jobs met deadlines than were accepted: {c}")
        for r in self.records:
            if r.state not in (JobState.COMPLETED, JobState.REJECTED):
                problems.append(f"job {r.job.id} ended in state {r.state.value}")
            if self.exact_estimates and r.met_deadline is False:
                problems.append(
                    f"job {r.job.id} missed its deadline: done {r.completion_time!r} > {r.absolute_deadline!r}"
                )
        for s in self.share_violations():
            problems.append(f"node {s.node_id} shares sum to {s.utilization!r} at t={s.time!r}")
        if any(b < a for a, b in zip(self.event_times, self.event_times[1:])):
            problems.append("event timestamps went backwards")
        return problems


def _check_config(cluster: ClusterConfig, policy: PolicyKind) -> None:
    if not isinstance(cluster, ClusterConfig):
        raise ConfigError(f"expected ClusterConfig, got {type(cluster).__name__}")
    if not isinstance(policy, (LibraPolicy, FifoPolicy)):
        raise ConfigError(f"unknown policy {policy!r}")


def _check_trace(trace: Sequence[Job]) -> None:
    seen = set()
    prev = -math.inf
    for job in trace:
        try:
            validate_job(job)
        except ValidationError as exc:
            raise ConfigError(f"job {job.id}: {exc}") from exc
        if job.id in seen:
            raise ConfigError(f"duplicate job id {job.id}")
        if job.arrival < prev:
            raise ConfigError(f"trace not sorted by arrival at job {job.id}")
        seen.add(job.id)
        prev = job.arrival


def run(
    trace: Iterable[Job],
    cluster: ClusterConfig,
    policy: PolicyKind,
    estimate_error: float = 1.0,
) -> SimResult:
    """Simulate ``trace`` on ``cluster`` under ``policy``.

    ``estimate_error`` scales every job's true length relative to the length
    the scheduler is told (1.0 means estimates are exact).
    """
    trace = list(trace)
    _check_config(cluster, policy)
    _check_trace(trace)
    if not (estimate_error > 0 and math.isfinite(estimate_error)):
        raise ConfigError(f"estimate_error must be positive, got {estimate_error}")

    nodes = [NodeState(i, cluster.node_capacity) for i in range(cluster.node_count)]
    records = {job.id: JobRecord(job) for job in trace}
    result = SimResult(cluster, policy, list(records.values()), exact_estimates=estimate_error == 1.0)
    versions = [0] * len(nodes)
    heap: list[Event] = []
    seq = 0

    def push(ev_time: float, kind: EventKind, **kw) -> None:
        nonlocal seq
        heapq.heappush(heap, Event(ev_time, kind, seq, **kw))
        seq += 1

    def actual(job: Job) -> float:
        return job.length * estimate_error

    def schedule_next(node: NodeState, now: float) -> None:
        versions[node.node_id] += 1
        result.samples.append(UtilizationSample(now, node.node_id, node.utilization()))
        nxt = next_completion_time(node)
        if nxt is not None:
            job_id, when = nxt
            push(when, EventKind.COMPLETION, job_id=job_id, node_id=node.node_id, version=versions[node.node_id])

    def started(job: Job, node: NodeState, now: float) -> None:
        rec = records[job.id]
        rec.move(JobState.RUNNING)
        rec.dispatch_time = now
        node.running[job.id].actual_length = actual(job)

    for job in trace:
        push(job.arrival, EventKind.ARRIVAL, job_id=job.id)
    if trace:
        push(trace[-1].arrival, EventKind.HORIZON)

    libra = isinstance(policy, LibraPolicy)
    while heap:
        ev = heapq.heappop(heap)
        now = ev.time
        if ev.kind is EventKind.COMPLETION:
            if ev.version != versions[ev.node_id]:
                continue
            result.event_times.append(now)
            node = nodes[ev.node_id]
            node.advance_to(now)
            # jobs that ran dry together are all retired at this event
            done = sorted(j for j, rj in node.running.items() if rj.actual_remaining == 0.0)
            if ev.job_id not in done:
                raise InvariantError(
                    f"node {node.node_id}: job {ev.job_id} due at t={now!r} still has "
                    f"{node.running[ev.job_id].actual_remaining!r} MI left"
                )
            for job_id in done:
                for nxt in on_completion(policy, node, job_id, now):
                    started(nxt, node, now)
                rec = records[job_id]
                rec.move(JobState.COMPLETED)
                rec.completion_time = now
            schedule_next(node, now)

        elif ev.kind is EventKind.ARRIVAL:
            batch = [records[ev.job_id].job]
            while heap and heap[0].kind is EventKind.ARRIVAL and heap[0].time == now:
                batch.append(records[heapq.heappop(heap).job_id].job)
            result.event_times.append(now)
            touched: set[int] = set()
            for job in batch:
                rec = records[job.id]
                decision = schedule_libra(job, nodes, now, policy) if libra else schedule_fifo(job, nodes, now, policy)
                rec.decision = decision
                rec.quote = decision.quote or admit_budget(job, policy.pricing, cluster.node_capacity)
                if not decision.accepted:
                    rec.move(JobState.REJECTED)
                    continue
                rec.node_id = decision.node_id
                node = nodes[decision.node_id]
                if not libra and job.id in node.running:
                    started(job, node, now)
                    touched.add(node.node_id)
            if libra:
                # every job in the batch is admitted before any of them is dispatched
                for job in batch:
                    rec = records[job.id]
                    if rec.accepted:
                        node = nodes[rec.node_id]
                        dispatch(node, job, now, policy.allocation_mode, actual(job))
                        rec.move(JobState.RUNNING)
                        rec.dispatch_time = now
                        touched.add(node.node_id)
            for node_id in sorted(touched):
                schedule_next(nodes[node_id], now)

        else:
            result.event_times.append(now)

    for node in nodes:
        if node.running or node.queue or node.reservations:
            raise InvariantError(f"node {node.node_id} still busy after the event queue drained")
        result.delivered[node.node_id] = node.delivered
        result.first_dispatch[node.node_id] = node.first_dispatch
    result.last_event = result.event_times[-1] if result.event_times else 0.0
    return result
