"""Command-line runner for the benchmark scenarios.

Exit codes: 0 success, 2 configuration error, 3 a scenario check failed.
"""

from __future__ import annotations

import argparse
import datetime
import logging
import os
import sys
from pathlib import Path
from typing import Optional, Sequence

from .config import ConfigError, ScenarioConfig, load_config, parse_quantity
from .scenarios.results import summary_row, write_results, write_summary
from .scenarios.workloads import SCENARIOS, ScenarioError, describe, list_scenarios, run_scenario

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_FAILED = 3

SEED_ENV = "PARTISAN_SIM_SEED"
DEFAULT_OUT = "results"

log = logging.getLogger("topocluster")


def resolve_seed(flag: Optional[int], config: ScenarioConfig) -> int:
    """--seed beats the config file, which beats the environment; 0 otherwise."""
    if flag is not None:
        return flag
    if config.seed is not None:
        return config.seed
    env = os.environ.get(SEED_ENV)
    if env:
        try:
            return int(env)
        except ValueError:
            raise ConfigError(f"{SEED_ENV} must be an integer, got {env!r}") from None
    return 0


def _header(config: ScenarioConfig, seed: int) -> str:
    stamp = datetime.datetime.now(datetime.timezone.utc).isoformat(timespec="seconds")
    return f"topocluster {config.scenario} seed={seed} generated {stamp}"


def _execute(config: ScenarioConfig, seed: int, out: Path, trace: bool):
    results = run_scenario(config.scenario, config.params, config.context(seed, record_events=trace))
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "results.csv", "w", encoding="utf-8", newline="") as fh:
        write_results(results, fh)
    if trace:
        # every result owns its simulator; one trace file per simulated run
        for i, res in enumerate(results):
            suffix = "" if len(results) == 1 else f"-{i}"
            with open(out / f"trace{suffix}.tsv", "w", encoding="utf-8") as fh:
                fh.write(res.trace_dump)
    return results


def _report(results) -> int:
    status = EXIT_OK
    for res in results:
        failed = res.failed_checks()
        line = f"{res.scenario}: runtime={res.runtime:.6f}s ops={len(res.ops)} trace={res.trace_hash}"
        print(line)
        for name in failed:
            print(f"  check failed: {name}", file=sys.stderr)
            status = EXIT_FAILED
    return status


def cmd_run(args) -> int:
    config = load_config(args.config)
    seed = resolve_seed(args.seed, config)
    out = Path(args.out or config.out or DEFAULT_OUT)
    results = _execute(config, seed, out, args.trace)
    with open(out / "summary.csv", "w", encoding="utf-8", newline="") as fh:
        write_summary([summary_row(r) for r in results], fh,
                      None if args.no_header else _header(config, seed))
    return _report(results)


def cmd_sweep(args) -> int:
    config = load_config(args.config)
    seed = resolve_seed(args.seed, config)
    out = Path(args.out or config.out or DEFAULT_OUT)
    values = [v.strip() for v in args.values.split(",") if v.strip()]
    if not values:
        raise ConfigError("--values needs at least one value")
    for v in values:
        parse_quantity(v)  # sweeps are over numeric parameters
    runs = []
    for raw in values:
        value = parse_quantity(raw)
        variant = config.with_param(args.param, value)
        results = _execute(variant, seed, out / f"{args.param}={raw}", args.trace)
        runs.append((raw, results))
    rows = [summary_row(r, args.param, raw) for raw, results in runs for r in results]
    with open(out / "summary.csv", "w", encoding="utf-8", newline="") as fh:
        write_summary(rows, fh, None if args.no_header else _header(config, seed))
    status = EXIT_OK
    for raw, results in runs:
        print(f"{args.param}={raw}")
        status = max(status, _report(results))
    return status


def cmd_list(args) -> int:
    for name in list_scenarios():
        print(f"{name}\t{SCENARIOS[name].summary}")
    return EXIT_OK


def cmd_describe(args) -> int:
    try:
        print(describe(args.scenario))
    except KeyError:
        print(f"unknown scenario {args.scenario!r}; try `list`", file=sys.stderr)
        return EXIT_CONFIG
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="topocluster", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true", help="log backend warnings")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", required=True, help="scenario config file (TOML)")
        p.add_argument("--seed", type=int, help=f"overrides the config seed and ${SEED_ENV}")
        p.add_argument("--out", help=f"output directory (default: config `out` or {DEFAULT_OUT!r})")
        p.add_argument("--no-header", action="store_true",
                       help="omit the timestamp line so outputs are byte-identical across runs")
        p.add_argument("--trace", action="store_true", help="also write the full event trace")

    run = sub.add_parser("run", help="run one scenario")
    common(run)
    run.set_defaults(func=cmd_run)

    sweep = sub.add_parser("sweep", help="run a scenario once per parameter value")
    common(sweep)
    sweep.add_argument("--param", required=True,
                       help="parameter name: `workers`, `sim.default_rtt`, `topology.mesh.x`, ...")
    sweep.add_argument("--values", required=True, help="comma-separated values, e.g. 1ms,20ms")
    sweep.set_defaults(func=cmd_sweep)

    lst = sub.add_parser("list", help="list scenarios")
    lst.set_defaults(func=cmd_list)

    desc = sub.add_parser("describe", help="show a scenario's parameters and defaults")
    desc.add_argument("scenario")
    desc.set_defaults(func=cmd_describe)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_CONFIG if exc.code else EXIT_OK
    logging.basicConfig(level=logging.WARNING if args.verbose else logging.ERROR,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except ValueError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except ScenarioError as exc:
        print(f"scenario failed: {exc}", file=sys.stderr)
        return EXIT_FAILED


if __name__ == "__main__":
    sys.exit(main())
