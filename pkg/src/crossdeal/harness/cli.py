"""Command-line entry point: ``crossdeal run|bench|usecase|report``."""

from __future__ import annotations

import argparse
import json
import sys
import time

from ..errors import ConfigError, InvariantViolation
from ..market.auction import ListingType
from .bench import run_sweep, sweep_rows
from .report import emit_report, listing_report
from .runner import ScenarioResult, run_scenario
from .scenario import ScenarioConfig, load_config
from .usecases import USE_CASES, run_use_case

EXIT_PROBE = 2
EXIT_CONFIG = 3


def _print_result(res: ScenarioResult, fmt: str, out) -> None:
    if fmt == "json":
        json.dump(dict(res.summary(), digest=res.digest(), extras=_jsonable(res.extras)), out, indent=2, sort_keys=True)
        out.write("\n")
        return
    out.write(f"seed {res.config.seed}  rounds {res.rounds}  digest {res.digest()[:16]}\n")
    for lid, state in sorted(res.outcomes.items()):
        out.write(f"listing {lid}: {state}\n")
    for name, verdict in sorted(res.probes.items()):
        out.write(f"probe {name}: {verdict}\n")
    for c in res.claims:
        out.write(f"claim {c['claimId']}: {c['kind']} against {c['accused']} -> {c['verdict']}\n")
    for k, v in sorted(res.extras.items()):
        out.write(f"{k}: {_jsonable(v)}\n")


def _jsonable(v):
    return json.loads(json.dumps(v, default=str))


def cmd_run(args) -> int:
    cfg = load_config(args.scenario)
    if args.seed is not None:
        cfg = cfg.with_seed(args.seed)
    res = run_scenario(cfg, raise_on_violation=False)
    _print_result(res, args.format, sys.stdout)
    if args.journal:
        with open(args.journal, "w") as fh:
            fh.write(res.world.export_journal())
    if not res.ok:
        _report_violation(res.violation)
        return EXIT_PROBE
    return 0


def cmd_bench(args) -> int:
    t = ListingType.parse(args.type)
    ns = [int(x) for x in args.n_sweep.split(",") if x.strip()]
    if not ns or min(ns) < 1:
        raise ConfigError("--n-sweep needs positive integers")
    t0 = time.perf_counter()
    results = run_sweep(t, ns, args.bidders, args.chains, args.seed or 0, parallel=args.parallel)
    elapsed = time.perf_counter() - t0
    sys.stdout.write(emit_report(sweep_rows(results), args.format))
    if args.format == "pretty":
        sys.stdout.write(f"sweep of {len(ns)} worlds in {elapsed:.2f}s\n")
    return 0


def cmd_usecase(args) -> int:
    res = run_use_case(args.name, args.seed or 0)
    _print_result(res, args.format, sys.stdout)
    return 0 if res.ok else EXIT_PROBE


def cmd_report(args) -> int:
    cfg = load_config(args.scenario) if args.scenario else ScenarioConfig()
    if args.seed is not None:
        cfg = cfg.with_seed(args.seed)
    res = run_scenario(cfg, raise_on_violation=False)
    sys.stdout.write(emit_report(listing_report(res.world), args.format, with_time=not args.no_time))
    if not res.ok:
        _report_violation(res.violation)
        return EXIT_PROBE
    return 0


def _report_violation(exc: InvariantViolation) -> None:
    print(f"invariant violated: {exc}", file=sys.stderr)
    for line in exc.trace:
        print(f"  {line}", file=sys.stderr)


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="crossdeal", description="Cross-chain marketplace simulator")
    ap.add_argument("--seed", type=int, default=None, help="override the scenario seed")
    sub = ap.add_subparsers(dest="cmd", required=True)

    p = sub.add_parser("run", help="run a scenario file")
    p.add_argument("scenario")
    p.add_argument("--format", choices=("text", "json"), default="text")
    p.add_argument("--journal", help="write the chain journals as JSON lines to this path")
    p.set_defaults(fn=cmd_run)

    p = sub.add_parser("bench", help="bids (and reveals) per chain for a sweep of n")
    p.add_argument("--type", default="open", help="fixed, open, sealed or vickrey")
    p.add_argument("--n-sweep", default="1,2,4,7")
    p.add_argument("--bidders", type=int, default=8)
    p.add_argument("--chains", type=int, default=2)
    p.add_argument("--parallel", action="store_true", help="run the sweep's worlds in worker processes")
    p.add_argument("--format", choices=("csv", "pretty"), default="pretty")
    p.set_defaults(fn=cmd_bench)

    p = sub.add_parser("usecase", help="run a packaged use case")
    p.add_argument("name", choices=USE_CASES)
    p.add_argument("--format", choices=("text", "json"), default="text")
    p.set_defaults(fn=cmd_usecase)

    p = sub.add_parser("report", help="per-step cost table of one listing's life cycle")
    p.add_argument("--format", choices=("csv", "pretty"), default="pretty")
    p.add_argument("--scenario", help="scenario file (default: the built-in sealed auction)")
    p.add_argument("--no-time", action="store_true", help="omit wall-clock columns")
    p.set_defaults(fn=cmd_report)
    return ap


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.fn(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
