"""Run every figure analog and write the tables to one directory.

    python3 scripts/run_all.py -o results --seed 0
"""
import argparse
import time

from noma_mec.experiments import PRESETS, preset, resolve_seed, run_experiment


def main():
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("-o", "--output", default="results")
    ap.add_argument("--seed", type=int, default=None)
    ap.add_argument("--threads", type=int, default=1)
    args = ap.parse_args()
    for name in sorted(PRESETS):
        t0 = time.perf_counter()
        spec = resolve_seed(preset(name), args.seed)
        result = run_experiment(spec, threads=args.threads)
        paths = result.write(args.output)
        feasible = sum(r["feasible"] for r in result.rows)
        print(f"{name}: {len(result.rows)} instances ({feasible} feasible) in "
              f"{time.perf_counter() - t0:.1f}s -> {', '.join(str(p) for p in paths)}")


if __name__ == "__main__":
    main()
