"""Command-line entry point: ``auditbench {validate,gen-data,run,report}``."""

import argparse
import logging
import os
import sys

from . import harness
from .config import SEED_ENV, load_config
from .dataset import generate_benchmark, write_csv
from .errors import AuditBenchError, ConfigError, MissingResults
from .report import build_report

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_IO = 3
EXIT_DEGENERATE = 4

MAX_SKIPPED_SHARE = 0.5


def _check_against_data(config, table):
    diags = []
    n = len(table.feature_names)
    if any(k > n for k in config.grids.features):
        diags.append(f"grids.features: cannot drop {max(config.grids.features)} of {n} features")
    if config.grids.missingness and config.missing_top_m > n:
        diags.append(f"missing_top_m: exceeds the {n} dataset features")
    if len(table) < 2:
        diags.append("dataset: at least two rows are needed for a split")
    return diags


def prepare(config_path):
    """Load and fully validate a config, including its dataset. Shared by validate and run."""
    config = load_config(config_path)
    table = harness.load_dataset(config)
    diags = _check_against_data(config, table)
    if diags:
        raise ConfigError(diags)
    return config


def _resolve_seed(config, flag):
    if flag is not None:
        return config.with_seed(flag)
    env = os.environ.get(SEED_ENV)
    if env:
        try:
            return config.with_seed(int(env))
        except ValueError:
            raise ConfigError(f"{SEED_ENV}: {env!r} is not an integer") from None
    return config


def cmd_validate(args):
    prepare(args.config)
    print("OK")
    return EXIT_OK


def cmd_gen_data(args):
    config = load_config(args.config)
    if config.dataset.kind != "benchmark":
        raise ConfigError("dataset.kind: gen-data needs a benchmark dataset")
    spec = config.dataset.benchmark
    if args.seed is not None:
        spec = type(spec)(**{**{k: getattr(spec, k) for k in spec.__dataclass_fields__}, "seed": args.seed})
    table = generate_benchmark(spec)
    os.makedirs(args.out, exist_ok=True)
    path = os.path.join(args.out, "dataset.csv")
    write_csv(table, path)
    rates = table.base_rates()
    counts = table.group_counts()
    print(f"wrote {path}")
    print(f"rows: {len(table)}")
    for label in ("privileged", "underprivileged"):
        print(f"base_rate[{label}]: {rates[label]:.4f} (n={counts[label]})")
    return EXIT_OK


def cmd_run(args):
    config = _resolve_seed(prepare(args.config), args.seed)
    result = harness.run(config, jobs=args.jobs)
    os.makedirs(args.out, exist_ok=True)
    harness.write_results_csv(result, os.path.join(args.out, "results.csv"))
    harness.write_summary_csv(harness.aggregate([result]), os.path.join(args.out, "summary.csv"))
    harness.write_provenance(result, os.path.join(args.out, "provenance.txt"))
    share = result.skipped_share()
    print(f"wrote results to {args.out} ({share:.0%} of condition records skipped)")
    if share > MAX_SKIPPED_SHARE:
        print("more than half of the condition records were skipped", file=sys.stderr)
        return EXIT_DEGENERATE
    return EXIT_OK


def cmd_report(args):
    print(build_report(args.in_dir, args.format))
    return EXIT_OK


def _positive_int(text):
    v = int(text)
    if v < 1:
        raise argparse.ArgumentTypeError("must be >= 1")
    return v


def build_parser():
    p = argparse.ArgumentParser(prog="auditbench", description=__doc__)
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    v = sub.add_parser("validate", help="check a config and print diagnostics")
    v.add_argument("config")
    v.set_defaults(func=cmd_validate)

    g = sub.add_parser("gen-data", help="write the benchmark dataset as CSV")
    g.add_argument("config")
    g.add_argument("--out", default=".")
    g.add_argument("--seed", type=int)
    g.set_defaults(func=cmd_gen_data)

    r = sub.add_parser("run", help="run an experiment")
    r.add_argument("config")
    r.add_argument("--out", default="results")
    r.add_argument("--jobs", type=_positive_int, default=1)
    r.add_argument("--seed", type=int, help=f"master seed (overrides {SEED_ENV} and the config)")
    r.set_defaults(func=cmd_run)

    rep = sub.add_parser("report", help="render tables and plot data from a run directory")
    rep.add_argument("in_dir")
    rep.add_argument("--format", choices=("csv", "md"), default="md")
    rep.set_defaults(func=cmd_report)
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except ConfigError as exc:
        for d in exc.diagnostics:
            print(f"error: {d}", file=sys.stderr)
        return EXIT_CONFIG
    except MissingResults as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    except AuditBenchError as exc:
        # malformed dataset contents
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
