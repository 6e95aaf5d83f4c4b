"""Command line entry point: ``advgap <experiment> [options]``.

Exit codes: 0 on success, 2 on a configuration error, 3 when any grid point
failed (its row is still written with an ``error:`` status).
"""
from __future__ import annotations

import argparse
import logging
import sys

from .harness import (EXPERIMENTS, ConfigError, build_config, coerce_value, failed_rows,
                      parse_seed_list, read_config_file, run_experiment, write_csv,
                      write_rows)
from .img_lab import synth_corpus, write_corpus

EXIT_OK, EXIT_CONFIG, EXIT_ROWS = 0, 2, 3


def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="advgap", description=(
        "Sweeps for adversarial training of linear classifiers under directed "
        "attacks, and a small image lab with square-mask attacks. Results are CSV."))
    sub = p.add_subparsers(dest="command", required=True)
    for exp in EXPERIMENTS:
        s = sub.add_parser(exp.replace("_", "-"))
        s.add_argument("--config", help="flat key = value file")
        s.add_argument("--out", help="CSV path (default: stdout)")
        s.add_argument("--seed-list", help="e.g. 0,1,2 or 0-4")
        s.add_argument("--paper-scale", action="store_true",
                       help="use the full-size problem settings instead of desk defaults")
        s.add_argument("--mc", type=int, help="Monte Carlo test samples (0 = exact)")
        s.add_argument("--workers", type=int, help="parallel grid points")
        s.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                       help="override one config key; repeatable")
        if exp == "image_lab":
            s.add_argument("--export-corpus", metavar="DIR",
                           help="also write the first seed's training corpus as PGM files")
            s.add_argument("--weights-dir", metavar="DIR",
                           help="save min-max weight maps as PGM files")
    return p


def _overrides(args) -> dict:
    values = read_config_file(args.config) if args.config else {}
    for item in args.set:
        if "=" not in item:
            raise ConfigError(f"--set expects KEY=VALUE, got {item!r}")
        key, value = (s.strip() for s in item.split("=", 1))
        values[key] = coerce_value(key, value)
    if args.seed_list:
        values["seeds"] = parse_seed_list(args.seed_list)
    if args.mc is not None:
        values["n_mc"] = args.mc
    if args.workers is not None:
        values["workers"] = args.workers
    if getattr(args, "weights_dir", None):
        values["weights_dir"] = args.weights_dir
    return values


def main(argv=None) -> int:
    logging.basicConfig(level=logging.WARNING, format="%(levelname)s %(message)s")
    args = _parser().parse_args(argv)
    experiment = args.command.replace("-", "_")
    try:
        cfg = build_config(experiment, _overrides(args), args.paper_scale)
    except (ConfigError, TypeError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    if getattr(args, "export_corpus", None):
        write_corpus(args.export_corpus, synth_corpus(cfg.n, cfg.h, cfg.w, cfg.seeds[0]))
    rows = run_experiment(cfg)
    if args.out:
        write_rows(args.out, rows)
    else:
        write_csv(sys.stdout, rows)
    bad = failed_rows(rows)
    print(f"{len(rows)} rows, {len(bad)} failed", file=sys.stderr)
    return EXIT_ROWS if bad else EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
