"""Command-line entry point: ``noma-mec {run,audit,solve,oracle,export}``.

Exit status: 0 success, 1 infeasible result or failed audit, 2 usage or
input error.
"""
from __future__ import annotations

import argparse
import json
import math
import sys
from dataclasses import replace
from pathlib import Path

from . import casefile
from .channel import channel_gains, generate_scenario
from .errors import ClusterInfeasibleError, ConfigError, NomaError
from .experiments import (
    PRESETS,
    ExperimentSpec,
    TaskRanges,
    generate_tasks,
    parse_config,
    preset,
    resolve_seed,
    run_experiment,
    to_csv,
    to_json,
)
from .heuristic import run_heuristic
from .model import CONSTRAINTS, SystemConfig, audit_constraints, evaluate
from .oracle import enumerate_optimal
from .power import power_control_ok, solve_all, solve_cluster, verify_exact


def _global_flags(suppress: bool) -> argparse.ArgumentParser:
    """Global flags; the subcommand copy must not reset values given before it."""
    p = argparse.ArgumentParser(add_help=False)
    d = (lambda v: argparse.SUPPRESS) if suppress else (lambda v: v)
    p.add_argument("--seed", type=int, default=d(None), help="master seed (NOMA_MEC_SEED wins if set)")
    p.add_argument("--threads", type=int, default=d(1), help="worker processes for replications")
    p.add_argument("--format", choices=("csv", "json"), default=d("csv"), dest="fmt")
    return p


def _instance_flags(p):
    p.add_argument("--users", type=int, default=4)
    p.add_argument("--freq-rbs", type=int, default=3)
    p.add_argument("--comp-rbs", type=int, default=8)
    p.add_argument("--comp-capacity", type=float, default=10.0, help="Gcycle/s per computing RB")
    p.add_argument("--max-users-per-rb", type=int, default=3)


def build_parser() -> argparse.ArgumentParser:
    flags = _global_flags(suppress=True)
    parser = argparse.ArgumentParser(prog="noma-mec", parents=[_global_flags(suppress=False)],
                                     description="NOMA + edge computing resource allocation experiments")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", parents=[flags], help="run an experiment config")
    p.add_argument("config", nargs="?", help="config file (.ini)")
    p.add_argument("--preset", choices=sorted(PRESETS), help="built-in figure analog instead of a file")
    p.add_argument("-o", "--output", default="results", help="output directory")
    p.add_argument("--replications", type=int, default=None, help="override the replication count")

    p = sub.add_parser("audit", parents=[flags], help="audit an exported assignment")
    p.add_argument("case", help="case file written by 'export'")

    p = sub.add_parser("solve", parents=[flags], help="power control of one cluster")
    p.add_argument("cluster", help="cluster description (JSON)")

    p = sub.add_parser("oracle", parents=[flags], help="heuristic vs exhaustive optimum on tiny instances")
    _instance_flags(p)
    p.add_argument("--instances", type=int, default=5)
    p.add_argument("-o", "--output", default=None, help="write the table here instead of stdout")

    p = sub.add_parser("export", parents=[flags], help="write a heuristic assignment as a case file")
    _instance_flags(p)
    p.add_argument("--no-power-control", action="store_true", help="keep the equal-split powers")
    p.add_argument("-o", "--output", required=True)
    return parser


def _seed(args) -> int:
    return resolve_seed(ExperimentSpec(), args.seed).master_seed


def _tiny_config(args) -> SystemConfig:
    return SystemConfig(num_users=args.users, num_freq_rbs=args.freq_rbs, num_comp_rbs=args.comp_rbs,
                        comp_rb_capacity=args.comp_capacity * 1e9, max_users_per_rb=args.max_users_per_rb)


def cmd_run(args) -> int:
    if args.preset and args.config:
        raise ConfigError("give either a config file or --preset, not both")
    if args.preset:
        spec = preset(args.preset)
    elif args.config:
        spec = parse_config(args.config)
    else:
        raise ConfigError("run needs a config file or --preset")
    spec = resolve_seed(spec, args.seed)
    if args.replications is not None:
        spec = replace(spec, replications=args.replications).validate()
    result = run_experiment(spec, threads=args.threads)
    for path in result.write(args.output, args.fmt):
        print(path)
    n_bad = sum(1 for r in result.rows if not r["feasible"])
    if n_bad:
        print(f"{n_bad} of {len(result.rows)} instances flagged infeasible", file=sys.stderr)
    return 0


def cmd_audit(args) -> int:
    config, tasks, channels, assignment = casefile.read_case(args.case)
    audit = audit_constraints(assignment, channels, tasks, config)
    rows = [{"constraint": c, "passed": int(audit[c].passed), "violations": "; ".join(audit[c].violations)}
            for c in CONSTRAINTS]
    writer = to_csv if args.fmt == "csv" else to_json
    sys.stdout.write(writer(rows, ("constraint", "passed", "violations"), "noma-mec/audit/v1"))
    return 0 if all(audit[c].passed for c in CONSTRAINTS) else 1


def cmd_solve(args) -> int:
    path = Path(args.cluster)
    if not path.is_file():
        raise FileNotFoundError(f"cluster file not found: {path}")
    cluster = casefile.cluster_from_dict(json.loads(path.read_text(encoding="utf-8")))
    try:
        sol = solve_cluster(cluster)
    except ClusterInfeasibleError as exc:
        print(f"infeasible: {exc}", file=sys.stderr)
        print(json.dumps(exc.certificate, indent=1), file=sys.stderr)
        return 1
    check = verify_exact(cluster, sol.powers)
    rows = []
    for k, u in enumerate(cluster.users):
        for m, r in enumerate(cluster.rbs):
            rows.append({"user": u, "rb": r, "power_w": float(sol.powers[k, m]),
                         "min_rate": float(cluster.min_rates[k]),
                         "exact_rate": float(check.exact_rates[k]),
                         "margin": float(check.margins[k])})
    writer = to_csv if args.fmt == "csv" else to_json
    sys.stdout.write(writer(rows, ("user", "rb", "power_w", "min_rate", "exact_rate", "margin"),
                            "noma-mec/solve/v1"))
    return 0


def _instance(config, seed):
    sc = generate_scenario(config, seed)
    return channel_gains(sc, config, seed), generate_tasks(config.num_users, seed, TaskRanges())


def cmd_oracle(args) -> int:
    config = _tiny_config(args)
    base = _seed(args)
    rows = []
    for k in range(args.instances):
        seed = base + k
        channels, tasks = _instance(config, seed)
        final = solve_all(run_heuristic(channels, tasks, config), channels, tasks, config)
        h = evaluate(final, channels, tasks, config).total_energy * 1e3 if power_control_ok(final) else math.inf
        try:
            o = enumerate_optimal(channels, tasks, config).energy * 1e3
        except NomaError:
            o = math.inf
        gap = 100.0 * (h - o) / o if math.isfinite(o) else math.nan
        rows.append({"instance": k, "seed": seed, "oracle_energy_mj": o, "heuristic_energy_mj": h, "gap_pct": gap})
    writer = to_csv if args.fmt == "csv" else to_json
    text = writer(rows, ("instance", "seed", "oracle_energy_mj", "heuristic_energy_mj", "gap_pct"),
                  "noma-mec/oracle/v1")
    if args.output:
        Path(args.output).write_text(text, encoding="utf-8")
        print(args.output)
    else:
        sys.stdout.write(text)
    return 0


def cmd_export(args) -> int:
    config = _tiny_config(args)
    channels, tasks = _instance(config, _seed(args))
    assignment = run_heuristic(channels, tasks, config)
    if not args.no_power_control:
        assignment = solve_all(assignment, channels, tasks, config)
    casefile.write_case(args.output, config, tasks, channels, assignment)
    print(args.output)
    return 0


COMMANDS = {"run": cmd_run, "audit": cmd_audit, "solve": cmd_solve, "oracle": cmd_oracle, "export": cmd_export}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return COMMANDS[args.command](args)
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (ConfigError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except NomaError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
