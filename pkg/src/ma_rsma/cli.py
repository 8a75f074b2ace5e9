"""Command line front end: run sweeps, summarize rows, validate configs.

Verbosity comes from the MA_RSMA_LOG environment variable (DEBUG, INFO,
WARNING, ERROR); the default is WARNING.
"""

import argparse
import json
import logging
import os
import sys

from .experiment import (ConfigError, config_echo, load_config, read_rows_csv,
                         run_experiment, summarize, summary_csv_text)

log = logging.getLogger(__name__)


def build_parser():
    parser = argparse.ArgumentParser(
        prog="ma-rsma",
        description="Monte Carlo sum-rate sweeps for rate-splitting downlinks "
                    "with movable transmit antennas.")
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run a sweep config and write CSVs")
    p_run.add_argument("--config", required=True, help="JSON or TOML sweep config")
    p_run.add_argument("--out", default=None, help="output directory override")
    p_run.add_argument("--workers", type=int, default=1,
                       help="worker process count (default 1)")
    p_run.add_argument("--trials", type=int, default=None,
                       help="override num_trials from the config")

    p_sum = sub.add_parser("summarize", help="aggregate a rows.csv to stdout")
    p_sum.add_argument("--in", dest="rows_path", required=True,
                       help="rows.csv produced by run")

    p_val = sub.add_parser("validate", help="check a config and echo it resolved")
    p_val.add_argument("--config", required=True)
    return parser


def _configure_logging():
    name = os.environ.get("MA_RSMA_LOG", "WARNING").upper()
    level = getattr(logging, name, None)
    if not isinstance(level, int):
        level = logging.WARNING
    logging.basicConfig(level=level,
                        format="%(asctime)s %(levelname)s %(name)s: %(message)s")


def cmd_run(args):
    cfg = load_config(args.config)
    out = run_experiment(cfg, out_dir=args.out, workers=args.workers,
                         num_trials=args.trials)
    print(out)
    return 0


def cmd_summarize(args):
    rows = read_rows_csv(args.rows_path)
    summary = summarize(rows)
    sys.stdout.write(summary_csv_text(summary))
    return 0


def cmd_validate(args):
    cfg = load_config(args.config)
    print(json.dumps(config_echo(cfg), indent=2))
    return 0


def main(argv=None):
    _configure_logging()
    args = build_parser().parse_args(argv)
    handler = {"run": cmd_run, "summarize": cmd_summarize,
               "validate": cmd_validate}[args.command]
    try:
        return handler(args)
    except (ConfigError, OSError, ValueError) as exc:
        log.error("%s", exc)
        print("error: %s" % exc, file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
