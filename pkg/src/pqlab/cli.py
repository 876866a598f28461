"""Command line driver: ``pqlab <subcommand> [--config PATH] [--key value ...]``.

Exit codes: 0 success, 1 invalid config, 2 solver failure, 3 soundness violation.
"""
from __future__ import annotations

import argparse
import csv
import io
import logging
import sys
from numbers import Integral, Real

import numpy as np

from .experiments import (CONFIG_KEYS, STUDIES, ConfigError, QuadratureError, build_config,
                          parse_config_text)
from .integrand import ConvexityError
from .solver import SolverError

log = logging.getLogger("pqlab")

SUBCOMMANDS = list(STUDIES) + ["check"]


def format_value(x) -> str:
    if isinstance(x, (bool, np.bool_)):
        return "true" if x else "false"
    if isinstance(x, Integral):
        return str(int(x))
    if isinstance(x, Real):
        return "%.17g" % float(x)
    return str(x)


def write_csv(columns, rows, stream):
    w = csv.writer(stream, lineterminator="\n")
    w.writerow(columns)
    for r in rows:
        w.writerow([format_value(r.get(c, "")) for c in columns])


def csv_text(columns, rows) -> str:
    buf = io.StringIO()
    write_csv(columns, rows, buf)
    return buf.getvalue()


def make_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="pqlab", description="Numerical laboratory for (p,q)-growth regularity estimates.")
    ap.add_argument("command", choices=SUBCOMMANDS)
    ap.add_argument("input", nargs="?", help="sample CSV for the lorentz subcommand")
    ap.add_argument("--config", help="flat key = value config file")
    ap.add_argument("-v", "--verbose", action="store_true")
    for key in CONFIG_KEYS:
        if key in ("experiment", "input"):
            continue
        ap.add_argument("--" + key.replace("_", "-"), dest="cfg_" + key, metavar="VALUE")
    return ap


def _raw_config(args) -> dict:
    raw = {}
    if args.config:
        try:
            with open(args.config, encoding="utf-8") as fh:
                raw.update(parse_config_text(fh.read()))
        except OSError as exc:
            raise ConfigError(f"cannot read config: {exc}") from exc
    for name, val in vars(args).items():
        if name.startswith("cfg_") and val is not None:
            raw[name[4:]] = val
    if args.input:
        raw["input"] = args.input
    return raw


def _emit(cfg, columns, rows):
    if cfg.out:
        with open(cfg.out, "w", encoding="utf-8", newline="") as fh:
            write_csv(columns, rows, fh)
    else:
        write_csv(columns, rows, sys.stdout)


def run(argv=None) -> int:
    args = make_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        cfg = build_config(_raw_config(args), args.command)
        if args.command == "check":
            from .acceptance import run_criteria
            results = run_criteria(cfg.criteria)
            cols = ["criterion", "name", "passed", "seconds", "detail"]
            rows = [dict(zip(cols, r)) for r in results]
            _emit(cfg, cols, rows)
            return 0 if all(r["passed"] for r in rows) else 3
        columns, rows, checks = STUDIES[args.command](cfg)
    except (ConfigError, ConvexityError) as exc:
        log.error("invalid config: %s", exc)
        return 1
    except (SolverError, QuadratureError) as exc:
        log.error("solver failure: %s", exc)
        return 2
    _emit(cfg, columns, rows)
    bad = [k for k, ok in checks.items() if not ok]
    if bad:
        log.error("soundness check failed: %s", ", ".join(bad))
        return 3
    return 0


def main():
    sys.exit(run())


if __name__ == "__main__":
    main()
