"""Run one figure analog and print its summary table.

    python3 scripts/run_figure.py fig2 --seed 0 -o results
    python3 scripts/run_figure.py configs/custom.ini --replications 3
"""
import argparse
import math
from dataclasses import replace
from pathlib import Path

from noma_mec.experiments import PRESETS, parse_config, preset, resolve_seed, run_experiment, summary_columns

SHOWN = ("n_feasible", "energy_mj_mean", "energy_mj_feasible_mean", "comp_time_ms_mean",
         "spectral_efficiency_mean", "fairness_mean", "gap_pct_median")


def fmt(v):
    if isinstance(v, float):
        return "nan" if math.isnan(v) else f"{v:.4g}"
    return str(v)


def main():
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("what", help=f"preset name ({', '.join(sorted(PRESETS))}) or config file")
    ap.add_argument("--seed", type=int, default=None)
    ap.add_argument("--replications", type=int, default=None)
    ap.add_argument("--threads", type=int, default=1)
    ap.add_argument("-o", "--output", default=None, help="also write the CSV tables here")
    args = ap.parse_args()

    spec = preset(args.what) if args.what in PRESETS else parse_config(Path(args.what))
    spec = resolve_seed(spec, args.seed)
    if args.replications:
        spec = replace(spec, replications=args.replications).validate()
    result = run_experiment(spec, threads=args.threads)

    cols = [c for c in summary_columns(spec) if c in SHOWN or c in dict(spec.sweep)]
    print(f"{spec.experiment}: {spec.replications} replications, master seed {spec.master_seed}")
    widths = [max(len(c), 10) for c in cols]
    print("  ".join(c.rjust(w) for c, w in zip(cols, widths)))
    for s in result.summary:
        print("  ".join(fmt(s[c]).rjust(w) for c, w in zip(cols, widths)))
    if args.output:
        for path in result.write(args.output):
            print(path)


if __name__ == "__main__":
    main()
