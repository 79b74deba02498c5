"""Job cost function and the budget admission gate."""

from __future__ import annotations

from dataclasses import dataclass

from .domain import Job, PricingParams


class PricingDomainError(ValueError):
    pass


@dataclass(frozen=True)
class CostQuote:
    cost: float
    accepted: bool
    shortfall: float = 0.0


def cost(estimate: float, deadline: float, params: PricingParams) -> float:
    """Price a job: ``alpha*E`` for the CPU time plus ``beta*E/D`` for urgency.

    Tighter deadlines cost more for the same runtime.
    """
    if deadline == 0:
        raise PricingDomainError("deadline must be non-zero")
    if estimate <= 0 or deadline < 0:
        raise PricingDomainError(f"estimate and deadline must be positive (E={estimate}, D={deadline})")
    return params.alpha * estimate + params.beta * (estimate / deadline)


def admit_budget(job: Job, params: PricingParams, capacity: float) -> CostQuote:
    """Check the job's budget against its cost. A budget equal to the cost passes."""
    c = cost(job.estimate(capacity), job.deadline, params)
    if c <= job.budget:
        return CostQuote(cost=c, accepted=True)
    return CostQuote(cost=c, accepted=False, shortfall=c - job.budget)
