"""Per-node bookkeeping for proportional-share scheduling.

A node tracks the jobs it runs, the CPU share promised to jobs that were
admitted but not yet dispatched (the reservation), and the share each running
job currently receives. Shares are recomputed only when something happens on
the node, so progress between two events is linear and completion times can be
computed exactly.
"""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass, field

from .domain import AllocationMode, Job, JobProgress, absolute_deadline

SHARE_TOL = 1e-9
# remaining work below this fraction of the job length counts as finished
WORK_TOL = 1e-9

INFEASIBLE = math.inf


class LedgerError(RuntimeError):
    """Base class for protocol violations on a node ledger. These are bugs, not bad input."""


class ReservationOverflow(LedgerError):
    pass


class MissingReservation(LedgerError):
    pass


class QuantizedInfeasible(LedgerError):
    pass


def min_share(remaining_work: float, capacity: float, time_to_deadline: float) -> float:
    """Smallest CPU fraction that finishes ``remaining_work`` MI by the deadline.

    Returns 0 for finished work and ``INFEASIBLE`` (inf) when work remains but
    the deadline has already passed.
    """
    if capacity <= 0:
        raise ValueError(f"capacity must be positive, got {capacity}")
    if remaining_work <= 0:
        return 0.0
    if time_to_deadline <= 0:
        return INFEASIBLE
    return (remaining_work / capacity) / time_to_deadline


class RunningJob:
    """Mutable accounting for one job on a node."""

    __slots__ = ("job", "dispatch_time", "deadline", "done", "actual_length", "cpu_done", "share")

    def __init__(self, job: Job, now: float, actual_length: float | None = None) -> None:
        self.job = job
        self.dispatch_time = now
        self.deadline = absolute_deadline(job)
        self.done = 0.0
        self.actual_length = job.length if actual_length is None else actual_length
        self.cpu_done = 0.0
        self.share = 0.0

    @property
    def believed_remaining(self) -> float:
        """Work left according to the user's estimate."""
        rem = self.job.length - self.done
        return 0.0 if rem <= WORK_TOL * self.job.length else rem

    @property
    def actual_remaining(self) -> float:
        rem = self.actual_length - self.done
        return 0.0 if rem <= WORK_TOL * self.actual_length else rem

    def min_share(self, capacity: float, now: float) -> float:
        return min_share(self.believed_remaining, capacity, self.deadline - now)

    def progress(self, now: float) -> JobProgress:
        return JobProgress(cpu_done=self.cpu_done, wall_elapsed=now - self.dispatch_time, share=self.share)


@dataclass(frozen=True)
class ShareAssignment:
    shares: dict[int, float]
    mode: str
    timestamp: float

    @property
    def total(self) -> float:
        return math.fsum(self.shares.values())


@dataclass(frozen=True)
class Acceptance:
    """A node's answer to an admission query."""

    accepted: bool
    projected_loadfree: float
    required_share: float


@dataclass
class NodeState:
    node_id: int
    capacity: float
    running: dict[int, RunningJob] = field(default_factory=dict)
    reservations: dict[int, float] = field(default_factory=dict)
    # FIFO baseline only: jobs waiting for the node
    queue: deque = field(default_factory=deque)
    clock: float = 0.0
    assignment: ShareAssignment | None = None
    delivered: float = 0.0
    first_dispatch: float | None = None

    @property
    def reserved_load(self) -> float:
        return math.fsum(self.reservations.values())

    def advance_to(self, now: float) -> None:
        if now == self.clock:
            return
        if now < self.clock:
            raise LedgerError(f"node {self.node_id}: cannot move clock back from {self.clock} to {now}")
        advance(self, now - self.clock)
        # pin to the event time so repeated small steps cannot drift
        self.clock = now

    def min_shares(self, now: float) -> dict[int, float]:
        self.advance_to(now)
        return {jid: rj.min_share(self.capacity, now) for jid, rj in self.running.items()}

    def min_share_values(self, now: float) -> list[float]:
        """Running jobs' minimum shares at ``now``; the hot path of admission queries."""
        self.advance_to(now)
        cap = self.capacity
        out = []
        for rj in self.running.values():
            length = rj.job.length
            rem = length - rj.done
            if rem <= WORK_TOL * length:
                out.append(0.0)
                continue
            ttd = rj.deadline - now
            out.append(INFEASIBLE if ttd <= 0 else rem / cap / ttd)
        return out

    def utilization(self) -> float:
        return self.assignment.total if self.assignment else 0.0


def loadfree(node: NodeState, now: float) -> float:
    """Idle share left after every running job's minimum and all reservations.

    Can only go negative if estimates were wrong; it is reported, not clamped.
    """
    node.advance_to(now)
    return 1.0 - math.fsum(node.min_share_values(now)) - node.reserved_load


def can_accept(node: NodeState, job: Job, now: float, mode: AllocationMode | str | None = None) -> Acceptance:
    """Would the node still meet every deadline if ``job`` joined it now?

    The sum of minimum shares (running, reserved and the new job) must not
    exceed 1. Under equal-quantized allocation each job gets 1/n of the CPU, so
    additionally every minimum share must fit under 1/n.
    """
    node.advance_to(now)
    need = min_share(job.length, node.capacity, job.arrival + job.deadline - now)
    current = node.min_share_values(now) if node.running else []
    reserved = node.reserved_load if node.reservations else 0.0
    total = math.fsum(current) + reserved + need
    projected = 1.0 - total
    ok = total <= 1.0 + SHARE_TOL
    if ok and mode == AllocationMode.EQUAL_QUANTIZED:
        n = len(node.running) + len(node.reservations) + 1
        biggest = max([need, *current, *node.reservations.values()])
        ok = biggest <= 1.0 / n + SHARE_TOL
    return Acceptance(accepted=ok, projected_loadfree=projected, required_share=need)


def reserve(node: NodeState, job: Job, now: float) -> NodeState:
    """Promise ``job``'s current minimum share on this node until it is dispatched."""
    if job.id in node.reservations or job.id in node.running:
        raise LedgerError(f"node {node.node_id}: job {job.id} already reserved or running")
    node.advance_to(now)
    need = min_share(job.length, node.capacity, absolute_deadline(job) - now)
    committed = math.fsum(node.min_share_values(now)) + node.reserved_load + need
    if committed > 1.0 + SHARE_TOL:
        raise ReservationOverflow(
            f"node {node.node_id}: reserving {need:.6g} for job {job.id} would commit {committed:.12g} > 1"
        )
    node.reservations[job.id] = need
    return node


def dispatch(
    node: NodeState,
    job: Job,
    now: float,
    mode: AllocationMode | str = AllocationMode.PROPORTIONAL_SCALEUP,
    actual_length: float | None = None,
) -> NodeState:
    """Turn a reservation into a running job and recompute the node's shares."""
    if job.id not in node.reservations:
        raise MissingReservation(f"node {node.node_id}: job {job.id} dispatched without a reservation")
    node.advance_to(now)
    del node.reservations[job.id]
    node.running[job.id] = RunningJob(job, now, actual_length)
    if node.first_dispatch is None:
        node.first_dispatch = now
    reallocate(node, now, mode)
    return node


def reallocate(node: NodeState, now: float, mode: AllocationMode | str) -> ShareAssignment:
    """Recompute every running job's CPU share and store it on the node.

    deadline-exact gives each job its minimum; proportional-scaleup stretches
    the minimums so the whole CPU is used; equal-quantized splits the CPU into
    1/n slices. Jobs that outran their estimate (or their deadline) have no
    meaningful minimum and share whatever slack the others leave.
    """
    mode = AllocationMode(mode)
    node.advance_to(now)
    mins = node.min_shares(now)
    bounded = {j: m for j, m in mins.items() if 0.0 < m < INFEASIBLE}
    unbounded = [j for j in mins if j not in bounded]
    committed = math.fsum(bounded.values())
    if committed > 1.0 + SHARE_TOL:
        raise LedgerError(f"node {node.node_id}: running minimum shares sum to {committed:.12g} > 1 at t={now}")

    shares: dict[int, float] = {}
    if mode is AllocationMode.EQUAL_QUANTIZED:
        if mins:
            slice_ = 1.0 / len(mins)
            for j, m in bounded.items():
                if m > slice_ + SHARE_TOL:
                    raise QuantizedInfeasible(
                        f"node {node.node_id}: job {j} needs {m:.6g} but equal split gives {slice_:.6g}"
                    )
            shares = {j: slice_ for j in mins}
    elif mode is AllocationMode.PROPORTIONAL_SCALEUP and not unbounded and committed > 0:
        shares = {j: m / committed for j, m in bounded.items()}
    else:
        shares = dict(bounded)
        if unbounded:
            slack = max(0.0, 1.0 - committed)
            for j in unbounded:
                shares[j] = slack / len(unbounded)

    for j, rj in node.running.items():
        rj.share = shares.get(j, 0.0)
    node.assignment = ShareAssignment(shares=shares, mode=mode.value, timestamp=now)
    return node.assignment


def assign_exclusive(node: NodeState, now: float) -> ShareAssignment:
    """Give the single running job the whole CPU (FIFO baseline)."""
    if len(node.running) > 1:
        raise LedgerError(f"node {node.node_id}: exclusive assignment with {len(node.running)} jobs")
    node.advance_to(now)
    shares = {j: 1.0 for j in node.running}
    for j, rj in node.running.items():
        rj.share = 1.0
    node.assignment = ShareAssignment(shares=shares, mode="exclusive", timestamp=now)
    return node.assignment


def start_exclusive(node: NodeState, job: Job, now: float, actual_length: float | None = None) -> NodeState:
    node.advance_to(now)
    node.running[job.id] = RunningJob(job, now, actual_length)
    if node.first_dispatch is None:
        node.first_dispatch = now
    assign_exclusive(node, now)
    return node


def advance(node: NodeState, dt: float, assignment: ShareAssignment | None = None) -> NodeState:
    """Run the node for ``dt`` seconds at the given (or current) shares."""
    if dt < 0:
        raise LedgerError(f"negative time step {dt}")
    if dt == 0:
        return node
    if assignment is None:
        assignment = node.assignment
    if assignment is not None and node.running:
        shares = assignment.shares
        cap = node.capacity
        for jid, rj in node.running.items():
            s = shares.get(jid, 0.0)
            if s:
                work = s * cap * dt
                rj.done += work
                rj.cpu_done += s * dt
                node.delivered += work
    node.clock += dt
    return node


def complete(node: NodeState, job_id: int, now: float) -> RunningJob:
    """Remove a finished job. Its remaining work must be (numerically) zero."""
    node.advance_to(now)
    rj = node.running.pop(job_id)
    leftover = rj.actual_length - rj.done
    if leftover > WORK_TOL * rj.actual_length:
        node.running[job_id] = rj
        raise LedgerError(f"node {node.node_id}: job {job_id} completed with {leftover:.6g} MI left")
    # book the rounding residue so delivered work matches the job length exactly
    node.delivered += leftover
    rj.done = rj.actual_length
    return rj


def next_completion_time(node: NodeState, assignment: ShareAssignment | None = None) -> tuple[int, float] | None:
    """Earliest (job id, time) at which a running job runs out of work, or None."""
    shares = (assignment or node.assignment).shares if (assignment or node.assignment) else {}
    best = None
    for jid, rj in node.running.items():
        s = shares.get(jid, 0.0)
        if s <= 0:
            continue
        t = node.clock + rj.actual_remaining / (s * node.capacity)
        if best is None or t < best[1] or (t == best[1] and jid < best[0]):
            best = (jid, t)
    return best


def drain_time(node: NodeState, now: float) -> float:
    """When a FIFO node will have worked off its running job and queue, going by estimates."""
    node.advance_to(now)
    busy = math.fsum(rj.believed_remaining for rj in node.running.values()) / node.capacity
    queued = math.fsum(job.length for job in node.queue) / node.capacity
    return now + busy + queued
