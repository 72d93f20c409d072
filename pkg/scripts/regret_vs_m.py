"""RAF regret against the number of slots per round, for both regimes and two alphas.

Writes sweep.csv and summary.csv and prints the fitted log-log slope per cell.
"""

import argparse
import dataclasses
import os

from owofmtl.experiment import cmd_sweep, load_config, loglog_slope, summarize

HERE = os.path.dirname(os.path.abspath(__file__))


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--config", default=os.path.join(HERE, "..", "configs", "full_sweep.cfg"))
    ap.add_argument("--T", type=int, default=None, help="override the number of rounds")
    ap.add_argument("--jobs", type=int, default=os.cpu_count() or 1)
    ap.add_argument("--out", default="out/regret_vs_m")
    args = ap.parse_args()

    cfg = load_config(args.config)
    if args.T is not None:
        cfg = dataclasses.replace(cfg, env=dataclasses.replace(cfg.env, T=args.T))
    rows = summarize(cmd_sweep(cfg, args.out, args.jobs))
    print(f"{'alpha':>5} {'regime':<12} {'slope':>7}  mean RAF per m")
    for a in cfg.sweep.alpha:
        for reg in cfg.sweep.regime:
            cell = [r for r in rows if r[1] == a and r[2] == reg]
            slope = loglog_slope([r[0] for r in cell], [r[4] for r in cell])
            means = "  ".join(f"{r[0]}:{r[4]:.3g}+-{r[5]:.1g}" for r in cell)
            print(f"{a:>5g} {reg:<12} {slope:>+7.3f}  {means}")
    print(f"CSV files in {args.out}")


if __name__ == "__main__":
    main()
