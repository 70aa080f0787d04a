"""Heuristic against the exhaustive optimum on tiny instances, one line each.

    python3 scripts/oracle_gap.py --users 4 --freq-rbs 3 --comp-rbs 8 --instances 10
"""
import argparse
import math

import numpy as np

from noma_mec.channel import channel_gains, generate_scenario
from noma_mec.errors import InfeasibleInstanceError
from noma_mec.experiments import generate_tasks
from noma_mec.heuristic import run_heuristic
from noma_mec.model import SystemConfig, evaluate
from noma_mec.oracle import enumerate_optimal
from noma_mec.power import power_control_ok, solve_all


def main():
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("--users", type=int, default=4)
    ap.add_argument("--freq-rbs", type=int, default=3)
    ap.add_argument("--comp-rbs", type=int, default=8)
    ap.add_argument("--max-users-per-rb", type=int, default=3)
    ap.add_argument("--instances", type=int, default=10)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()
    cfg = SystemConfig(num_users=args.users, num_freq_rbs=args.freq_rbs, num_comp_rbs=args.comp_rbs,
                       max_users_per_rb=args.max_users_per_rb)
    gaps = []
    for k in range(args.instances):
        seed = args.seed + k
        ch = channel_gains(generate_scenario(cfg, seed), cfg, seed)
        tasks = generate_tasks(cfg.num_users, seed)
        final = solve_all(run_heuristic(ch, tasks, cfg), ch, tasks, cfg)
        rep = evaluate(final, ch, tasks, cfg)
        h = rep.total_energy if rep.feasible and power_control_ok(final) else math.inf
        try:
            res = enumerate_optimal(ch, tasks, cfg)
        except InfeasibleInstanceError:
            print(f"seed {seed}: no feasible configuration")
            continue
        gap = 100 * (h - res.energy) / res.energy
        gaps.append(gap)
        unused = sum(i is None for i in res.assignment.freq_map)
        print(f"seed {seed}: heuristic {h * 1e3:.4g} mJ, optimum {res.energy * 1e3:.4g} mJ, gap {gap:.1f}%, "
              f"optimum leaves {unused} RB(s) unused, {res.configurations} configurations")
    if gaps:
        print(f"median gap {np.median(gaps):.1f}% over {len(gaps)} instances")


if __name__ == "__main__":
    main()
