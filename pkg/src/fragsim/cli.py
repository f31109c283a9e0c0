"""Command-line entry point: ``fragsim {run,experiment,align,selftest,report}``."""

from __future__ import annotations

import argparse
import contextlib
import csv
import logging
import sys
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from . import experiment as ex
from . import stats
from .metrics import RunResult, aggregate_run
from .traders import GreedyVariant

log = logging.getLogger("fragsim")

EXIT_OK = 0
EXIT_REJECTED = 1
EXIT_USAGE = 2

VARIANTS = [v.value for v in GreedyVariant]


class UsageError(Exception):
    pass


def _positive(text: str) -> int:
    value = int(text)
    if value < 1:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {text}")
    return value


def _seed(text: str) -> int:
    value = int(text)
    if not 0 <= value < 2**64:
        raise argparse.ArgumentTypeError("seed must fit in an unsigned 64-bit integer")
    return value


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="fragsim", description=__doc__)
    parser.add_argument("-v", "--verbose", action="count", default=0, help="more logging (repeatable)")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="one simulation; prints its result row")
    p.add_argument("--env", choices=sorted(ex.ENVIRONMENTS), required=True)
    p.add_argument("--config", choices=ex.MARKETS, required=True, help="market configuration")
    p.add_argument("--latency", type=int, default=0)
    p.add_argument("--variant", choices=VARIANTS, default=GreedyVariant.BESTGUESS.value)
    p.add_argument("--seed", type=_seed, default=0)
    group = p.add_mutually_exclusive_group()
    group.add_argument("--mixture", help="comma-separated strategy numbers 1..11, one per ZI trader")
    group.add_argument("--profile", help="built-in experiment id whose profile the mixture is drawn from")
    p.add_argument("--metrics-exec-time", choices=("all", "zi-only"), default="all")
    p.add_argument("--out", type=Path, help="directory for order, NBBO, series and event-trace logs")
    p.add_argument("--backend", choices=("kernel", "reference"), default="kernel")

    p = sub.add_parser("experiment", help="M mixtures x R runs into a results directory")
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--config", type=Path, help="experiment config file (JSON)")
    src.add_argument("--id", dest="experiment_id", help="built-in experiment id, e.g. env3-2mla-d25")
    p.add_argument("--mixtures", type=_positive)
    p.add_argument("--runs", type=_positive)
    p.add_argument("--out", type=Path, required=True)
    p.add_argument("--jobs", type=_positive, default=1)
    p.add_argument("--seed", type=_seed)
    p.add_argument("--variant", choices=VARIANTS)
    p.add_argument("--metrics-exec-time", choices=("all", "zi-only"))
    p.add_argument("--backend", choices=("kernel", "reference"), default="kernel")

    p = sub.add_parser("align", help="bootstrap alignment of results against target means")
    p.add_argument("results", nargs="+", type=Path)
    p.add_argument("--targets", type=Path, help="targets CSV (default: bundled table)")
    p.add_argument("--boot", type=_positive, default=1000, help="bootstrap samples B")
    p.add_argument("--draw-size", type=_positive, default=500)
    p.add_argument("--seed", type=_seed, default=0)
    p.add_argument("--out", type=Path, help="report CSV (default: stdout)")
    p.add_argument("--gate", action="store_true", help="exit 1 if any row is rejected at 95%%")

    p = sub.add_parser("selftest", help="false-rejection rates of a result set against itself")
    p.add_argument("results", type=Path)
    p.add_argument("--metric", default="zi_surplus")
    p.add_argument("--experiment", help="restrict to one experiment id")
    p.add_argument("--trials", type=_positive, default=1000)
    p.add_argument("--holdout", type=_positive, default=500)
    p.add_argument("--draw-size", type=_positive, default=500)
    p.add_argument("--boot", type=_positive, default=1000)
    p.add_argument("--seed", type=_seed, default=0)
    p.add_argument("--out", type=Path)

    p = sub.add_parser("report", help="mean of every metric per experiment, long format")
    p.add_argument("results", nargs="+", type=Path)
    p.add_argument("--out", type=Path)

    sub.add_parser("list", help="print the built-in experiment ids")
    return parser


def _open_out(path: Optional[Path]):
    if path is None:
        return contextlib.nullcontext(sys.stdout)
    path.parent.mkdir(parents=True, exist_ok=True)
    return open(path, "w", newline="")


def cmd_run(args) -> int:
    env = ex.ENVIRONMENTS[args.env]
    config = ex.market_config(
        env.n_zi, env.arrival_rate, env.kappa, env.horizon, args.config, args.latency, args.variant
    )
    if args.mixture:
        try:
            mixture = np.array([int(x) - 1 for x in args.mixture.split(",")], dtype=np.int64)
        except ValueError:
            raise UsageError("mixture: entries must be integers 1..11") from None
        if len(mixture) != env.n_zi or mixture.min() < 0 or mixture.max() > 10:
            raise UsageError(f"mixture: need {env.n_zi} entries, each in 1..11")
    else:
        profile_id = args.profile or (
            f"env{env.name}-cda" if args.config == "cda" else f"env{env.name}-{args.config}-d{args.latency}"
        )
        profiles = ex.load_profiles()
        if profile_id not in profiles:
            raise UsageError(f"profile: no built-in profile {profile_id!r}; pass --mixture or --profile")
        profile = ex.normalize_profile(profiles[profile_id], profile_id)
        mixture = ex.sample_mixture(profile, env.n_zi, ex.mixture_rng(args.seed, 0))

    meta = {"experiment_id": "run", "env": env.name, "config": args.config, "latency": args.latency, "seed": args.seed}
    if args.out is None:
        result = ex.run_simulation(config, mixture, args.seed, meta, args.backend, args.metrics_exec_time)
    else:
        from .exchange import OrderLog
        from .simulation import run_reference

        args.out.mkdir(parents=True, exist_ok=True)
        orders = OrderLog()
        with open(args.out / "events.txt", "w") as trace:
            ref = run_reference(config, mixture, np.random.default_rng(args.seed), trace=trace, order_log=orders)
        orders.to_csv(args.out / "orders.csv")
        ref.market.sip.to_csv(args.out / "nbbo.csv")
        ref.market.series.to_csv(args.out / "series.csv")
        result = aggregate_run(ref.logs, meta, args.metrics_exec_time)
    writer = csv.writer(sys.stdout, lineterminator="\n")
    writer.writerow(RunResult.columns())
    writer.writerow(result.to_row())
    return EXIT_OK


def cmd_experiment(args) -> int:
    if args.config is not None:
        spec = ex.ExperimentSpec.load(args.config)
    else:
        spec = ex.builtin_spec(args.experiment_id, mixtures=args.mixtures or 500, runs=args.runs or 100)
    overrides = {
        "mixtures": args.mixtures,
        "runs": args.runs,
        "seed": args.seed,
        "variant": args.variant,
        "exec_time_mode": args.metrics_exec_time,
    }
    overrides = {k: v for k, v in overrides.items() if v is not None}
    if overrides:
        spec = ex.ExperimentSpec.from_dict({**spec.to_dict(), **overrides})
    path = ex.run_experiment(spec, args.out, jobs=args.jobs, backend=args.backend)
    log.info("results in %s", path)
    return EXIT_OK


def _load_results(paths: Sequence[Path]) -> list[RunResult]:
    results = []
    for path in paths:
        if path.is_dir():
            path = path / ex.RESULTS_FILE
        if not path.exists():
            raise UsageError(f"results: {path} does not exist")
        results.extend(ex.read_results(path))
    return results


def cmd_align(args) -> int:
    results = _load_results(args.results)
    targets = ex.load_targets(args.targets)
    rows = stats.alignment_rows(results, targets, args.boot, args.draw_size, args.seed, warn=log.warning)
    with _open_out(args.out) as fh:
        stats.write_rows(rows, stats.ALIGN_COLUMNS, fh)
    if args.gate and any(not row["accept95"] for row in rows):
        return EXIT_REJECTED
    return EXIT_OK


def cmd_selftest(args) -> int:
    results = _load_results([args.results])
    if args.experiment:
        results = [r for r in results if r.experiment_id == args.experiment]
    if len({r.experiment_id for r in results}) > 1:
        raise UsageError("selftest: results mix several experiments; pass --experiment")
    if args.metric not in RunResult.columns():
        raise UsageError(f"metric: unknown column {args.metric!r}")
    sample = stats.MixtureGroupedSample.from_results(results, args.metric)
    if len(sample) < args.holdout + args.draw_size:
        raise UsageError(f"selftest: need {args.holdout + args.draw_size} mixtures, have {len(sample)}")
    outcome = stats.self_alignment_experiment(
        sample, args.trials, args.holdout, args.draw_size, args.boot, np.random.default_rng(args.seed)
    )
    rows = [
        {"method": method, "level": level, "trials": outcome.trials, "rejection_rate": rate}
        for (method, level), rate in outcome.rates().items()
    ]
    with _open_out(args.out) as fh:
        stats.write_rows(rows, ["method", "level", "trials", "rejection_rate"], fh)
    return EXIT_OK


def cmd_report(args) -> int:
    rows = stats.aggregate_rows(_load_results(args.results))
    with _open_out(args.out) as fh:
        stats.write_rows(rows, stats.REPORT_COLUMNS, fh)
    return EXIT_OK


def cmd_list(args) -> int:
    for experiment_id in ex.builtin_ids():
        print(experiment_id)
    return EXIT_OK


COMMANDS = {
    "run": cmd_run,
    "experiment": cmd_experiment,
    "align": cmd_align,
    "selftest": cmd_selftest,
    "report": cmd_report,
    "list": cmd_list,
}


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    level = logging.WARNING - 10 * args.verbose
    logging.basicConfig(level=max(level, logging.DEBUG), format="%(levelname)s %(name)s: %(message)s")
    try:
        return COMMANDS[args.command](args)
    except (UsageError, ex.ConfigError, ex.ResumeConflict) as exc:
        print(f"fragsim {args.command}: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except FileNotFoundError as exc:
        print(f"fragsim {args.command}: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
