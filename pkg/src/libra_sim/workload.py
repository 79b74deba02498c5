"""Synthetic workloads and JSON Lines trace files.

Random numbers come from numpy's PCG64 bit generator (``numpy.random.Generator``)
seeded with the workload's 64-bit seed. Draw order is fixed: arrivals, lengths,
deadlines, the non-base budgets, then one permutation of the budget column.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from .domain import Job, ValidationError, validate_job

TRACE_FORMAT_VERSION = 1


class SpecError(ValueError):
    pass


class TraceParseError(ValueError):
    def __init__(self, line: int, message: str) -> None:
        self.line = line
        super().__init__(f"line {line}: {message}")


@dataclass(frozen=True)
class WorkloadSpec:
    job_count: int
    arrival_range: tuple[float, float]
    length_range: tuple[float, float]
    base_budget: float
    base_budget_fraction: float
    budget_range: tuple[float, float]
    deadline_range: tuple[float, float]
    seed: int = 0

    def validate(self) -> WorkloadSpec:
        if isinstance(self.job_count, bool) or not isinstance(self.job_count, int) or self.job_count < 0:
            raise SpecError(f"job_count must be a non-negative integer, got {self.job_count!r}")
        if not 0.0 <= self.base_budget_fraction <= 1.0:
            raise SpecError(f"base_budget_fraction must be in [0, 1], got {self.base_budget_fraction}")
        for name in ("arrival_range", "length_range", "budget_range", "deadline_range"):
            lo, hi = getattr(self, name)
            if not (math.isfinite(lo) and math.isfinite(hi)) or lo > hi:
                raise SpecError(f"{name} must be a finite [low, high] with low <= high, got {(lo, hi)}")
        if self.arrival_range[0] < 0:
            raise SpecError("arrival_range must be non-negative")
        if self.length_range[0] < 1:
            raise SpecError("length_range must start at 1 MI or more")
        if self.deadline_range[0] <= 0:
            raise SpecError("deadline_range must be positive")
        if self.base_budget < 0 or self.budget_range[0] < 0:
            raise SpecError("budgets must be non-negative")
        if not 0 <= self.seed < 2**64:
            raise SpecError(f"seed must fit in 64 bits, got {self.seed}")
        return self

    def with_seed(self, seed: int) -> WorkloadSpec:
        return WorkloadSpec(**{**asdict(self), "seed": seed})

    def to_dict(self) -> dict:
        d = asdict(self)
        for k, v in d.items():
            if isinstance(v, tuple):
                d[k] = list(v)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> WorkloadSpec:
        try:
            kw = dict(d)
            for k in ("arrival_range", "length_range", "budget_range", "deadline_range"):
                kw[k] = tuple(float(x) for x in kw[k])
            return cls(**kw).validate()
        except (KeyError, TypeError) as exc:
            raise SpecError(f"bad workload spec: {exc}") from exc


def _batch(n: int, horizon: float) -> WorkloadSpec:
    return WorkloadSpec(
        job_count=n,
        arrival_range=(1.0, horizon),
        length_range=(1000.0, 10900.0),
        base_budget=1000.0,
        base_budget_fraction=0.8,
        budget_range=(1000.0, 12000.0),
        deadline_range=(1.0, 1200.0),
    )


PRESETS: dict[str, WorkloadSpec] = {
    "paper-batch-100": _batch(100, 102.0),
    "paper-batch-200": _batch(200, 208.0),
}


def preset(name: str, seed: int = 0) -> WorkloadSpec:
    try:
        return PRESETS[name].with_seed(seed)
    except KeyError:
        raise SpecError(f"unknown preset {name!r}; valid presets: {', '.join(sorted(PRESETS))}") from None


def base_budget_count(n: int, fraction: float) -> int:
    # half-up rounding, not Python's banker's rounding
    return int(math.floor(fraction * n + 0.5))


def generate(spec: WorkloadSpec) -> list[Job]:
    """Draw a trace from ``spec``. Output is sorted by arrival and ids follow that order."""
    spec.validate()
    n = spec.job_count
    rng = np.random.Generator(np.random.PCG64(spec.seed))
    arrivals = rng.uniform(*spec.arrival_range, size=n)
    lengths = np.maximum(1.0, np.rint(rng.uniform(*spec.length_range, size=n)))
    deadlines = rng.uniform(*spec.deadline_range, size=n)
    k = base_budget_count(n, spec.base_budget_fraction)
    budgets = np.concatenate([np.full(k, float(spec.base_budget)), rng.uniform(*spec.budget_range, size=n - k)])
    budgets = budgets[rng.permutation(n)]

    order = sorted(range(n), key=lambda i: (arrivals[i], i))
    return [
        Job(
            id=new_id,
            arrival=float(arrivals[i]),
            length=float(lengths[i]),
            deadline=float(deadlines[i]),
            budget=float(budgets[i]),
        )
        for new_id, i in enumerate(order)
    ]


def dumps_trace(jobs: list[Job], spec: WorkloadSpec | None = None) -> str:
    header = {
        "format_version": TRACE_FORMAT_VERSION,
        "spec": spec.to_dict() if spec else None,
        "seed": spec.seed if spec else None,
    }
    lines = [json.dumps(header, sort_keys=True)]
    for j in jobs:
        lines.append(
            json.dumps(
                {"id": j.id, "arrival": j.arrival, "length_mi": j.length, "deadline": j.deadline, "budget": j.budget},
                sort_keys=True,
            )
        )
    return "\n".join(lines) + "\n"


def save_trace(jobs: list[Job], path: str | Path, spec: WorkloadSpec | None = None) -> Path:
    path = Path(path)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(dumps_trace(jobs, spec))
    return path


_JOB_FIELDS = ("id", "arrival", "length_mi", "deadline", "budget")


def load_trace(path: str | Path) -> list[Job]:
    """Read a trace written by :func:`save_trace`. The header line is optional."""
    jobs: list[Job] = []
    seen: set[int] = set()
    with open(path, encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            if not raw.strip():
                continue
            try:
                rec = json.loads(raw)
            except json.JSONDecodeError as exc:
                raise TraceParseError(lineno, f"invalid JSON ({exc.msg})") from None
            if not isinstance(rec, dict):
                raise TraceParseError(lineno, "expected a JSON object")
            if "format_version" in rec:
                if lineno != 1:
                    raise TraceParseError(lineno, "header must be the first line")
                if rec["format_version"] != TRACE_FORMAT_VERSION:
                    raise TraceParseError(lineno, f"unsupported format_version {rec['format_version']!r}")
                continue
            missing = [f for f in _JOB_FIELDS if f not in rec]
            if missing:
                raise TraceParseError(lineno, f"missing field(s) {', '.join(missing)}")
            if isinstance(rec["id"], bool) or not isinstance(rec["id"], int):
                raise TraceParseError(lineno, f"id must be an integer, got {rec['id']!r}")
            try:
                job = validate_job(
                    Job(
                        id=rec["id"],
                        arrival=rec["arrival"],
                        length=rec["length_mi"],
                        deadline=rec["deadline"],
                        budget=rec["budget"],
                    )
                )
            except ValidationError as exc:
                raise TraceParseError(lineno, str(exc)) from None
            if job.id in seen:
                raise TraceParseError(lineno, f"duplicate job id {job.id}")
            if jobs and job.arrival < jobs[-1].arrival:
                raise TraceParseError(lineno, "jobs must be sorted by arrival")
            seen.add(job.id)
            jobs.append(job)
    return jobs
