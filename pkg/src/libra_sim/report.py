"""Run configuration, per-job/summary output files and the multi-seed comparison sweep."""

from __future__ import annotations

import csv
import io
import json
import logging
import statistics
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Sequence

from .domain import AllocationMode, ClusterConfig, Job, PricingParams, SelectionRule, ValidationError
from .engine import ConfigError, SimResult, run
from .policy import FifoPolicy, LibraPolicy, PolicyKind
from .workload import PRESETS, generate, load_trace, preset

log = logging.getLogger(__name__)

REPORT_FORMAT_VERSION = 1

JOB_COLUMNS = [
    "job_id",
    "arrival",
    "decision",
    "node",
    "dispatch_time",
    "completion_time",
    "absolute_deadline",
    "time_to_complete",
    "time_remaining_to_deadline",
    "cost",
    "budget",
]

COUNT_COLUMNS = ["accepted", "rejected_budget", "rejected_deadline", "completed_by_deadline"]


@dataclass
class RunConfig:
    trace: str | None = None
    preset: str | None = "paper-batch-100"
    seed: int = 0
    node_count: int = 10
    node_capacity: float = 100.0
    policy: str = "libra"
    alpha: float = 1.0
    beta: float = 100.0
    selection_rule: str = SelectionRule.MAX_LOADFREE.value
    allocation_mode: str = AllocationMode.PROPORTIONAL_SCALEUP.value
    apply_budget_gate: bool = True
    estimate_error: float = 1.0
    out: str = "out"

    @classmethod
    def from_dict(cls, d: dict) -> RunConfig:
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"unknown config key(s): {', '.join(sorted(unknown))}")
        return cls(**d)

    def cluster(self) -> ClusterConfig:
        try:
            return ClusterConfig(int(self.node_count), float(self.node_capacity))
        except ValidationError as exc:
            raise ConfigError(str(exc)) from exc

    def build_policy(self) -> PolicyKind:
        try:
            pricing = PricingParams(float(self.alpha), float(self.beta))
            if self.policy == "libra":
                return LibraPolicy(pricing, SelectionRule(self.selection_rule), AllocationMode(self.allocation_mode))
            if self.policy == "fifo":
                return FifoPolicy(pricing, bool(self.apply_budget_gate))
        except (ValidationError, ValueError) as exc:
            raise ConfigError(str(exc)) from exc
        raise ConfigError(f"unknown policy {self.policy!r} (expected libra or fifo)")

    def load_jobs(self) -> list[Job]:
        if self.trace:
            return load_trace(self.trace)
        if not self.preset:
            raise ConfigError("either a trace path or a preset name is required")
        return generate(preset(self.preset, self.seed))


def parse_policy(label: str, pricing: PricingParams) -> PolicyKind:
    """Turn a label like ``libra``, ``libra:min-loadfree:deadline-exact`` or ``fifo:nogate`` into a policy."""
    name, *opts = label.split(":")
    if name == "libra":
        kw: dict = {}
        for opt in opts:
            if opt in {r.value for r in SelectionRule}:
                kw["selection_rule"] = SelectionRule(opt)
            elif opt in {m.value for m in AllocationMode}:
                kw["allocation_mode"] = AllocationMode(opt)
            else:
                raise ConfigError(f"unknown libra option {opt!r} in {label!r}")
        return LibraPolicy(pricing, **kw)
    if name == "fifo":
        gate = True
        for opt in opts:
            if opt not in ("gate", "nogate"):
                raise ConfigError(f"unknown fifo option {opt!r} in {label!r}")
            gate = opt == "gate"
        return FifoPolicy(pricing, gate)
    raise ConfigError(f"unknown policy {label!r}")


def _fmt(x) -> str:
    if x is None:
        return ""
    return repr(float(x)) if isinstance(x, float) else str(x)


def job_rows(result: SimResult) -> list[dict[str, str]]:
    rows = []
    for r in result.records:
        rows.append(
            {
                "job_id": str(r.job.id),
                "arrival": _fmt(r.job.arrival),
                "decision": r.decision.outcome.value if r.decision else "",
                "node": _fmt(r.node_id),
                "dispatch_time": _fmt(r.dispatch_time),
                "completion_time": _fmt(r.completion_time),
                "absolute_deadline": _fmt(r.absolute_deadline),
                "time_to_complete": _fmt(r.time_to_complete),
                "time_remaining_to_deadline": _fmt(r.time_remaining_to_deadline),
                "cost": _fmt(r.quote.cost if r.quote else None),
                "budget": _fmt(float(r.job.budget)),
            }
        )
    return rows


def write_csv(path: Path, columns: Sequence[str], rows: Sequence[dict]) -> None:
    buf = io.StringIO()
    writer = csv.DictWriter(buf, fieldnames=list(columns), lineterminator="\r\n")
    writer.writeheader()
    for row in rows:
        writer.writerow({k: row.get(k, "") for k in columns})
    path.write_bytes(buf.getvalue().encode("utf-8"))


def write_json(path: Path, payload: dict) -> None:
    path.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def policy_dict(policy: PolicyKind) -> dict:
    d = {"name": policy.name, "alpha": policy.pricing.alpha, "beta": policy.pricing.beta}
    if isinstance(policy, LibraPolicy):
        d.update(selection_rule=policy.selection_rule.value, allocation_mode=policy.allocation_mode.value)
    else:
        d.update(apply_budget_gate=policy.apply_budget_gate)
    return d


def summary(result: SimResult) -> dict:
    return {
        "format_version": REPORT_FORMAT_VERSION,
        "cluster": asdict(result.cluster),
        "policy": policy_dict(result.policy),
        "counts": result.counts(),
        "deadline_misses": result.deadline_misses,
        "max_node_utilization": max((s.utilization for s in result.samples), default=0.0),
        "share_violations": len(result.share_violations()),
        "delivered_mi": {str(k): v for k, v in sorted(result.delivered.items())},
        "audit_problems": result.audit(),
    }


def write_run(result: SimResult, out: Path) -> dict[str, Path]:
    out.mkdir(parents=True, exist_ok=True)
    paths = {"jobs": out / "jobs.csv", "summary": out / "summary.json", "utilization": out / "utilization.csv"}
    write_csv(paths["jobs"], JOB_COLUMNS, job_rows(result))
    write_json(paths["summary"], summary(result))
    write_csv(
        paths["utilization"],
        ["time", "node", "utilization"],
        [{"time": _fmt(s.time), "node": str(s.node_id), "utilization": _fmt(s.utilization)} for s in result.samples],
    )
    return paths


# --- comparison sweep --------------------------------------------------------


@dataclass(frozen=True, order=True)
class Cell:
    job_count: int
    source: str
    node_count: int
    policy: str


@dataclass
class ComparisonTable:
    rows: list[dict] = field(default_factory=list)
    partial: bool = False
    error: str | None = None

    def summary_rows(self) -> list[dict]:
        groups: dict[tuple, list[dict]] = {}
        for row in self.rows:
            key = (row["job_count"], row["source"], row["node_count"], row["policy"])
            groups.setdefault(key, []).append(row)
        out = []
        for key in sorted(groups):
            grp = groups[key]
            row = dict(zip(("job_count", "source", "node_count", "policy"), key))
            row["seeds"] = len(grp)
            for col in COUNT_COLUMNS:
                vals = [g[col] for g in grp]
                row[f"{col}_mean"] = statistics.fmean(vals)
                row[f"{col}_std"] = statistics.stdev(vals) if len(vals) > 1 else 0.0
            out.append(row)
        return out

    def to_json(self) -> dict:
        return {
            "format_version": REPORT_FORMAT_VERSION,
            "partial": self.partial,
            "error": self.error,
            "rows": self.rows,
            "summary": self.summary_rows(),
        }


ROW_COLUMNS = ["source", "job_count", "node_count", "policy", "seed", "total", *COUNT_COLUMNS]


def _run_cell(args: tuple) -> dict:
    source, seed, node_count, capacity, label, pricing, estimate_error = args
    jobs = load_trace(source) if source not in PRESETS else generate(preset(source, seed))
    policy = parse_policy(label, pricing)
    res = run(jobs, ClusterConfig(node_count, capacity), policy, estimate_error)
    problems = res.audit()
    if problems:
        raise RuntimeError(f"{source}/{node_count}/{label}/seed {seed}: {problems[0]}")
    c = res.counts()
    return {
        "source": source,
        "job_count": c["total"],
        "node_count": node_count,
        "policy": label,
        "seed": seed,
        **c,
    }


def compare(
    sources: Sequence[str],
    node_counts: Sequence[int],
    policies: Sequence[str],
    seeds: Sequence[int],
    capacity: float = 100.0,
    pricing: PricingParams | None = None,
    workers: int = 1,
    estimate_error: float = 1.0,
) -> ComparisonTable:
    """Run every (source, nodes, policy, seed) combination.

    ``sources`` are preset names or trace paths; a trace ignores the seed
    for generation but the seed still labels the row. Rows come back sorted by
    cell and then seed no matter how many workers ran them.
    """
    if not seeds:
        raise ConfigError("seed list must not be empty")
    pricing = pricing or PricingParams()
    for label in policies:
        parse_policy(label, pricing)
    tasks = [
        (src, seed, n, capacity, label, pricing, estimate_error)
        for src in sources
        for n in node_counts
        for label in policies
        for seed in seeds
    ]
    table = ComparisonTable()
    try:
        if workers > 1:
            with ProcessPoolExecutor(max_workers=workers) as pool:
                for row in pool.map(_run_cell, tasks):
                    table.rows.append(row)
        else:
            for t in tasks:
                table.rows.append(_run_cell(t))
                log.debug("done %s", table.rows[-1])
    except Exception as exc:
        table.partial = True
        table.error = f"{type(exc).__name__}: {exc}"
        raise PartialResults(table) from exc
    finally:
        table.rows.sort(key=lambda r: (r["job_count"], r["source"], r["node_count"], r["policy"], r["seed"]))
    return table


class PartialResults(RuntimeError):
    def __init__(self, table: ComparisonTable) -> None:
        self.table = table
        super().__init__(table.error)


def write_comparison(table: ComparisonTable, out: Path) -> dict[str, Path]:
    out.mkdir(parents=True, exist_ok=True)
    paths = {
        "rows": out / "comparison.csv",
        "summary": out / "comparison_summary.csv",
        "json": out / "comparison.json",
    }
    write_csv(paths["rows"], ROW_COLUMNS, [{k: _fmt(v) for k, v in r.items()} for r in table.rows])
    summ = table.summary_rows()
    cols = ["job_count", "source", "node_count", "policy", "seeds"] + [
        f"{c}_{s}" for c in COUNT_COLUMNS for s in ("mean", "std")
    ]
    write_csv(paths["summary"], cols, [{k: _fmt(v) for k, v in r.items()} for r in summ])
    write_json(paths["json"], table.to_json())
    if table.partial:
        (out / "PARTIAL").write_text((table.error or "") + "\n", encoding="utf-8")
    return paths


def render(payload: dict) -> str:
    """Plain-text table for a summary.json or comparison.json payload."""
    lines = []
    if "summary" in payload and "rows" in payload:
        sw = max([18, *(len(r["source"]) for r in payload["summary"])])
        pw = max([12, *(len(r["policy"]) for r in payload["summary"])])
        hdr = f"{'jobs':>5} {'source':<{sw}} {'nodes':>5} {'policy':<{pw}} {'seeds':>5} {'accepted':>16} {'rej.budget':>11} {'rej.deadline':>13}"
        lines.append(hdr)
        lines.append("-" * len(hdr))
        for r in payload["summary"]:
            acc = f"{r['accepted_mean']:.2f} ± {r['accepted_std']:.2f}"
            lines.append(
                f"{r['job_count']:>5} {r['source']:<{sw}} {r['node_count']:>5} {r['policy']:<{pw}} {r['seeds']:>5} "
                f"{acc:>16} {r['rejected_budget_mean']:>11.2f} {r['rejected_deadline_mean']:>13.2f}"
            )
        if payload.get("partial"):
            lines.append(f"PARTIAL RESULTS: {payload.get('error')}")
    elif "counts" in payload:
        pol = payload["policy"]
        lines.append(f"policy: {pol['name']}  cluster: {payload['cluster']['node_count']} x {payload['cluster']['node_capacity']} MIPS")
        for k, v in payload["counts"].items():
            lines.append(f"  {k:<22} {v}")
        lines.append(f"  {'deadline_misses':<22} {payload['deadline_misses']}")
        lines.append(f"  {'max_node_utilization':<22} {payload['max_node_utilization']:.6f}")
    else:
        raise ConfigError("not a summary.json or comparison.json document")
    return "\n".join(lines)
