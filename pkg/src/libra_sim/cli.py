"""Command-line entry point: ``libra-sim {generate,run,compare,report}``."""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from dataclasses import asdict
from pathlib import Path

from .domain import AllocationMode, PricingParams, SelectionRule, ValidationError
from .engine import ConfigError, InvariantError
from .engine import run as simulate
from .node_ledger import LedgerError
from .report import (
    PartialResults,
    RunConfig,
    compare,
    render,
    write_comparison,
    write_run,
)
from .workload import (
    PRESETS,
    SpecError,
    TraceParseError,
    WorkloadSpec,
    dumps_trace,
    generate,
    preset,
    save_trace,
)

log = logging.getLogger("libra_sim")

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_IO = 3
EXIT_INVARIANT = 4


def _default_seed() -> int:
    raw = os.environ.get("LIBRA_SEED")
    if raw is None:
        return 0
    try:
        return int(raw)
    except ValueError:
        raise ConfigError(f"LIBRA_SEED must be an integer, got {raw!r}") from None


def _int_list(text: str) -> list[int]:
    """Parse ``1,2,5`` or a range ``0-24``."""
    out = []
    for part in text.split(","):
        part = part.strip()
        if "-" in part[1:]:
            lo, hi = part.split("-", 1)
            out.extend(range(int(lo), int(hi) + 1))
        elif part:
            out.append(int(part))
    return out


def cmd_generate(args: argparse.Namespace) -> int:
    seed = args.seed if args.seed is not None else _default_seed()
    if args.spec:
        spec = WorkloadSpec.from_dict(json.loads(Path(args.spec).read_text(encoding="utf-8"))).with_seed(seed)
    else:
        spec = preset(args.preset, seed)
    jobs = generate(spec)
    if args.out == "-":
        sys.stdout.write(dumps_trace(jobs, spec))
    else:
        save_trace(jobs, args.out, spec)
        log.info("wrote %d jobs to %s", len(jobs), args.out)
    return EXIT_OK


_RUN_OVERRIDES = (
    "trace",
    "preset",
    "seed",
    "node_count",
    "node_capacity",
    "policy",
    "alpha",
    "beta",
    "selection_rule",
    "allocation_mode",
    "apply_budget_gate",
    "estimate_error",
    "out",
)


def resolve_run_config(args: argparse.Namespace) -> RunConfig:
    base: dict = {}
    if args.config:
        base = json.loads(Path(args.config).read_text(encoding="utf-8"))
        if not isinstance(base, dict):
            raise ConfigError("config file must hold a JSON object")
    cfg = RunConfig.from_dict(base)
    if "seed" not in base:
        cfg.seed = _default_seed()
    for name in _RUN_OVERRIDES:
        val = getattr(args, name, None)
        if val is not None:
            setattr(cfg, name, val)
    if args.trace is not None:
        cfg.preset = None
    if cfg.trace and not Path(cfg.trace).exists():
        raise FileNotFoundError(cfg.trace)
    return cfg


def cmd_run(args: argparse.Namespace) -> int:
    cfg = resolve_run_config(args)
    if args.print_config:
        print(json.dumps(asdict(cfg), indent=2, sort_keys=True))
        return EXIT_OK
    jobs = cfg.load_jobs()
    result = simulate(jobs, cfg.cluster(), cfg.build_policy(), cfg.estimate_error)
    paths = write_run(result, Path(cfg.out))
    c = result.counts()
    log.info("accepted %d / %d (budget %d, deadline %d)", c["accepted"], c["total"], c["rejected_budget"], c["rejected_deadline"])
    for p in paths.values():
        print(p)
    problems = result.audit()
    if problems:
        for p in problems[:20]:
            log.error("invariant: %s", p)
        return EXIT_INVARIANT
    return EXIT_OK


def cmd_compare(args: argparse.Namespace) -> int:
    seeds = _int_list(args.seeds) if args.seeds else [_default_seed()]
    sources = list(args.preset or []) + list(args.trace or [])
    if not sources:
        sources = sorted(PRESETS)
    for s in sources:
        if s not in PRESETS and not Path(s).exists():
            raise ConfigError(f"{s!r} is neither a preset ({', '.join(sorted(PRESETS))}) nor an existing trace")
    pricing = PricingParams(args.alpha, args.beta)
    out = Path(args.out)
    if args.print_config:
        print(
            json.dumps(
                {
                    "sources": sources,
                    "node_counts": args.nodes,
                    "policies": args.policies,
                    "seeds": seeds,
                    "node_capacity": args.capacity,
                    "alpha": args.alpha,
                    "beta": args.beta,
                    "jobs": args.jobs,
                    "out": str(out),
                },
                indent=2,
                sort_keys=True,
            )
        )
        return EXIT_OK
    try:
        table = compare(sources, args.nodes, args.policies, seeds, args.capacity, pricing, args.jobs)
    except PartialResults as exc:
        write_comparison(exc.table, out)
        log.error("sweep aborted, partial results in %s: %s", out, exc)
        cause = exc.__cause__
        if isinstance(cause, (ConfigError, ValidationError, SpecError, TraceParseError)):
            return EXIT_CONFIG
        if isinstance(cause, OSError):
            return EXIT_IO
        return EXIT_INVARIANT
    paths = write_comparison(table, out)
    for p in paths.values():
        print(p)
    return EXIT_OK


def cmd_report(args: argparse.Namespace) -> int:
    payload = json.loads(Path(args.path).read_text(encoding="utf-8"))
    print(render(payload))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="libra-sim", description="Deadline/budget cluster scheduling simulator")
    parser.add_argument("-v", "--verbose", action="store_true", help="debug logging on stderr")
    sub = parser.add_subparsers(dest="command", required=True)

    g = sub.add_parser("generate", help="write a synthetic workload trace")
    src = g.add_mutually_exclusive_group()
    src.add_argument("--preset", default="paper-batch-100", help=f"one of: {', '.join(sorted(PRESETS))}")
    src.add_argument("--spec", help="JSON file holding a WorkloadSpec")
    g.add_argument("--seed", type=int, default=None, help="defaults to $LIBRA_SEED or 0")
    g.add_argument("--out", default="-", help="output path, '-' for stdout")
    g.set_defaults(func=cmd_generate)

    r = sub.add_parser("run", help="simulate one trace under one policy")
    r.add_argument("--config", help="JSON run config; flags below override it")
    r.add_argument("--trace")
    r.add_argument("--preset")
    r.add_argument("--seed", type=int)
    r.add_argument("--nodes", dest="node_count", type=int)
    r.add_argument("--capacity", dest="node_capacity", type=float, help="MIPS per node")
    r.add_argument("--policy", choices=["libra", "fifo"])
    r.add_argument("--alpha", type=float)
    r.add_argument("--beta", type=float)
    r.add_argument("--selection", dest="selection_rule", choices=[s.value for s in SelectionRule])
    r.add_argument("--mode", dest="allocation_mode", choices=[m.value for m in AllocationMode])
    r.add_argument("--budget-gate", dest="apply_budget_gate", action=argparse.BooleanOptionalAction, default=None)
    r.add_argument("--estimate-error", type=float)
    r.add_argument("--out")
    r.add_argument("--print-config", action="store_true", help="print the resolved config and exit")
    r.set_defaults(func=cmd_run)

    c = sub.add_parser("compare", help="sweep traces x clusters x policies x seeds")
    c.add_argument("--preset", action="append", help="repeatable; default: both batch presets")
    c.add_argument("--trace", action="append", help="repeatable trace path")
    c.add_argument("--nodes", type=_int_list, default=[10, 20], help="e.g. 10,20")
    c.add_argument(
        "--policies",
        type=lambda s: [p for p in s.split(",") if p],
        default=["fifo", "libra"],
        help="comma list, e.g. libra,libra:min-loadfree,fifo:nogate",
    )
    c.add_argument("--seeds", help="e.g. 42 or 0-24 or 1,2,3; default $LIBRA_SEED or 0")
    c.add_argument("--capacity", type=float, default=100.0)
    c.add_argument("--alpha", type=float, default=1.0)
    c.add_argument("--beta", type=float, default=100.0)
    c.add_argument("--jobs", type=int, default=1, help="parallel worker processes")
    c.add_argument("--out", default="compare-out")
    c.add_argument("--print-config", action="store_true")
    c.set_defaults(func=cmd_compare)

    rep = sub.add_parser("report", help="print a summary.json or comparison.json as a table")
    rep.add_argument("path")
    rep.set_defaults(func=cmd_report)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.INFO,
        format="%(levelname)s %(name)s: %(message)s",
        stream=sys.stderr,
    )
    try:
        return args.func(args)
    except (ConfigError, ValidationError, SpecError, TraceParseError, json.JSONDecodeError) as exc:
        log.error("%s", exc)
        return EXIT_CONFIG
    except OSError as exc:
        log.error("%s", exc)
        return EXIT_IO
    except (InvariantError, LedgerError) as exc:
        log.error("internal invariant failure: %s", exc)
        return EXIT_INVARIANT


if __name__ == "__main__":
    sys.exit(main())
