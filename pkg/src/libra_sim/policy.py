"""Admission and placement policies: Libra and the FIFO baseline."""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Sequence, Union

from .domain import AllocationMode, Job, PricingParams, SelectionRule, absolute_deadline
from .node_ledger import (
    NodeState,
    assign_exclusive,
    can_accept,
    complete,
    drain_time,
    reallocate,
    reserve,
    start_exclusive,
)
from .pricing import CostQuote, admit_budget


class Outcome(str, enum.Enum):
    ASSIGNED = "assigned"
    REJECTED_BUDGET = "rejected_budget"
    REJECTED_DEADLINE = "rejected_deadline"


@dataclass(frozen=True)
class NodeResponse:
    node_id: int
    accepted: bool
    loadfree: float


@dataclass(frozen=True)
class Decision:
    job_id: int
    outcome: Outcome
    decided_at: float
    node_id: int | None = None
    projected_loadfree: float | None = None
    shortfall: float = 0.0
    quote: CostQuote | None = None
    # every node consulted, in query order; empty when the budget gate refused
    queried: tuple[NodeResponse, ...] = ()
    # FIFO only: when the job is expected to start
    projected_start: float | None = None

    @property
    def accepted(self) -> bool:
        return self.outcome is Outcome.ASSIGNED


@dataclass(frozen=True)
class LibraPolicy:
    pricing: PricingParams = field(default_factory=PricingParams)
    selection_rule: SelectionRule = SelectionRule.MAX_LOADFREE
    allocation_mode: AllocationMode = AllocationMode.PROPORTIONAL_SCALEUP

    def __post_init__(self) -> None:
        object.__setattr__(self, "selection_rule", SelectionRule(self.selection_rule))
        object.__setattr__(self, "allocation_mode", AllocationMode(self.allocation_mode))

    @property
    def name(self) -> str:
        return "libra"


@dataclass(frozen=True)
class FifoPolicy:
    pricing: PricingParams = field(default_factory=PricingParams)
    apply_budget_gate: bool = True

    @property
    def name(self) -> str:
        return "fifo"


PolicyKind = Union[LibraPolicy, FifoPolicy]

# slack allowed when comparing a projected finish against a deadline
TIME_TOL = 1e-9


def meets(finish: float, deadline: float) -> bool:
    return finish <= deadline + TIME_TOL * max(1.0, abs(deadline))


def _pick(responses: list[NodeResponse], rule: SelectionRule) -> NodeResponse:
    # ties go to the lowest node id
    if rule is SelectionRule.MAX_LOADFREE:
        return min(responses, key=lambda r: (-r.loadfree, r.node_id))
    return min(responses, key=lambda r: (r.loadfree, r.node_id))


def schedule_libra(job: Job, nodes: Sequence[NodeState], now: float, policy: LibraPolicy) -> Decision:
    """Budget gate, then ask every node, then reserve on the chosen one.

    A job refused here is refused for good; resubmitting is up to the user.
    """
    quote = admit_budget(job, policy.pricing, nodes[0].capacity)
    if not quote.accepted:
        return Decision(job.id, Outcome.REJECTED_BUDGET, now, shortfall=quote.shortfall, quote=quote)

    responses = []
    for node in nodes:
        ans = can_accept(node, job, now, policy.allocation_mode)
        responses.append(NodeResponse(node.node_id, ans.accepted, ans.projected_loadfree))
    willing = [r for r in responses if r.accepted]
    if not willing:
        return Decision(job.id, Outcome.REJECTED_DEADLINE, now, quote=quote, queried=tuple(responses))

    best = _pick(willing, policy.selection_rule)
    target = next(n for n in nodes if n.node_id == best.node_id)
    reserve(target, job, now)
    return Decision(
        job.id,
        Outcome.ASSIGNED,
        now,
        node_id=best.node_id,
        projected_loadfree=best.loadfree,
        quote=quote,
        queried=tuple(responses),
    )


def schedule_fifo(job: Job, nodes: Sequence[NodeState], now: float, policy: FifoPolicy) -> Decision:
    """Queue the job on the node that frees up first, if it can still make its deadline there.

    Each node runs one job at a time at full CPU. Accepted jobs either start
    immediately on an idle node or join that node's queue.
    """
    capacity = nodes[0].capacity
    quote = admit_budget(job, policy.pricing, capacity)
    if policy.apply_budget_gate and not quote.accepted:
        return Decision(job.id, Outcome.REJECTED_BUDGET, now, shortfall=quote.shortfall, quote=quote)

    starts = [(drain_time(node, now), node.node_id) for node in nodes]
    start, node_id = min(starts)
    queried = tuple(
        NodeResponse(nid, meets(s + job.estimate(capacity), absolute_deadline(job)), 0.0) for s, nid in starts
    )
    if not meets(start + job.estimate(capacity), absolute_deadline(job)):
        return Decision(job.id, Outcome.REJECTED_DEADLINE, now, quote=quote, queried=queried, projected_start=start)

    node = next(n for n in nodes if n.node_id == node_id)
    if not node.running and not node.queue:
        start_exclusive(node, job, now)
    else:
        node.queue.append(job)
    return Decision(
        job.id, Outcome.ASSIGNED, now, node_id=node_id, quote=quote, queried=queried, projected_start=start
    )


def on_completion(policy: PolicyKind, node: NodeState, job_id: int, now: float) -> list[Job]:
    """Retire a finished job and let the node carry on.

    Libra recomputes the remaining jobs' shares. FIFO starts the head of the
    queue at full share. Returns the jobs that started as a result.
    """
    complete(node, job_id, now)
    if isinstance(policy, LibraPolicy):
        reallocate(node, now, policy.allocation_mode)
        return []
    started = []
    if not node.running and node.queue:
        nxt = node.queue.popleft()
        start_exclusive(node, nxt, now)
        started.append(nxt)
    elif not node.running:
        # keep an empty assignment so utilization reads 0
        assign_exclusive(node, now)
    return started
