"""Command line entry point: ``owofmtl run|sweep|check <config>``."""

from __future__ import annotations

import argparse
import logging
import sys
from dataclasses import replace

from .experiment import (
    ConfigError,
    cmd_run,
    cmd_sweep,
    format_checks,
    load_config,
    loglog_slope,
    run_checks,
    summarize,
)


def _load(args):
    cfg = load_config(args.config)
    if args.seed is not None:
        cfg = replace(cfg, env=replace(cfg.env, seed=args.seed),
                      sweep=replace(cfg.sweep, seeds=(args.seed,)))
    return cfg


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="owofmtl", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, helptext in (
        ("run", "run one horizon and write trace/report CSVs plus a manifest"),
        ("sweep", "run the (m, alpha, regime, seed) grid and write tidy CSVs"),
        ("check", "verify the regret inequalities and run invariants"),
    ):
        p = sub.add_parser(name, help=helptext)
        p.add_argument("config", help="key=value config file (a run manifest also works)")
        p.add_argument("--seed", type=int, default=None, help="override the seed")
        p.add_argument("--out", default="out", help="output directory")
        p.add_argument("--jobs", type=int, default=1, help="worker processes for sweeps")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = _load(args)
    except (ConfigError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2

    if args.command == "run":
        trace = cmd_run(cfg, args.out)
        print(f"RAF regret {trace.raf:.6g} (solver tol {cfg.run.solver.tol:g}), "
              f"bound {trace.bound:.6g}, residual {trace.residual_mean:.3g}")
        return 0

    if args.command == "sweep":
        results = cmd_sweep(cfg, args.out, args.jobs)
        rows = summarize(results)
        for a in cfg.sweep.alpha:
            for reg in cfg.sweep.regime:
                cell = [r for r in rows if r[1] == a and r[2] == reg]
                if len(cell) >= 2:
                    slope = loglog_slope([r[0] for r in cell], [r[4] for r in cell])
                    print(f"alpha={a:g} {reg:<11} log-log slope {slope:+.3f}  "
                          + " ".join(f"m={r[0]}:{r[4]:.3g}" for r in cell))
        failed = sum(r.status != "ok" for r in results)
        if failed:
            print(f"{failed} cells failed; see sweep.csv", file=sys.stderr)
        return 1 if failed else 0

    lines = run_checks(cfg)
    print(format_checks(lines))
    return 1 if any(l.failed for l in lines) else 0
