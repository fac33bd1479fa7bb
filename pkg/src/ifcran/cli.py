"""Command-line driver: run a sweep from a JSON config and write CSV."""

import argparse
import logging
import os
import sys

from . import sweep
from .exceptions import ConfigError, ContractError, IfcranError

THREADS_ENV = "IFCRAN_THREADS"

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NUMERIC = 3

log = logging.getLogger("ifcran")


def default_threads():
    """Worker count from ``IFCRAN_THREADS``, else the number of CPUs."""
    env = os.environ.get(THREADS_ENV)
    if env:
        try:
            n = int(env)
        except ValueError:
            raise ConfigError(THREADS_ENV, f"not an integer: {env!r}") from None
        if n < 1:
            raise ConfigError(THREADS_ENV, "must be positive")
        return n
    return os.cpu_count() or 1


def build_parser():
    p = argparse.ArgumentParser(
        prog="ifcran-sweep",
        description="Monte Carlo outage-rate sweep over fronthaul capacity and SNR.")
    p.add_argument("--config", required=True, help="JSON sweep configuration")
    p.add_argument("--out", help="CSV output path (default: the config's output, else stdout)")
    p.add_argument("--seed", type=int, help="override the scenario seed")
    p.add_argument("--threads", type=int,
                   help=f"worker processes (default: ${THREADS_ENV} or CPU count)")
    p.add_argument("--pairs", help="comma-separated source+decoder pairs to keep")
    p.add_argument("-q", "--quiet", action="store_true", help="only log warnings")
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(stream=sys.stderr, level=logging.WARNING if args.quiet else logging.INFO,
                        format="%(asctime)s %(levelname)s %(message)s")
    try:
        with open(args.config) as fh:
            cfg = sweep.parse_config(fh.read())
        if args.seed is not None:
            try:
                cfg.scenario = cfg.scenario.with_(seed=args.seed)
            except ContractError as exc:
                raise ConfigError("--seed", str(exc)) from None
        if args.pairs:
            sweep.filter_pairs(cfg, args.pairs.split(","))
        if args.threads is not None and args.threads < 1:
            raise ConfigError("--threads", "must be positive")
        threads = args.threads or cfg.threads or default_threads()
    except OSError as exc:
        log.error("cannot read config: %s", exc)
        return EXIT_CONFIG
    except ConfigError as exc:
        log.error("config error: %s", exc)
        return EXIT_CONFIG
    out = args.out or cfg.output
    log.info("%d grid points x %d pairs, N=%d, %d worker(s)",
             len(cfg.c_sym_values) * len(cfg.snr_db_values), len(cfg.pairs),
             cfg.scenario.trials, threads)
    try:
        text = sweep.rows_to_csv(sweep.run_sweep(cfg, workers=threads))
    except (IfcranError, ArithmeticError, FloatingPointError) as exc:
        log.error("numeric failure: %s", exc)
        return EXIT_NUMERIC
    if out:
        with open(out, "w", newline="") as fh:
            fh.write(text)
        log.info("wrote %s", out)
    else:
        sys.stdout.write(text)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
