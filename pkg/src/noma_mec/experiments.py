"""Seeded experiment sweeps: config parsing, instance runs, CSV/JSON output.

A config file has four sections::

    [experiment]
    id = fig2
    replications = 50
    seed = 1                  ; optional, see resolve_seed
    seed_mode = common        ; or independent
    oracle = false

    [system]
    users = 6
    freq_rbs = 30
    compute = 30x10           ; computing RBs x Gcycle/s per RB
    max_users_per_rb = 3

    [tasks]
    workload = 0.5e9, 1e9     ; cycles
    input_bits = 5000, 7000
    deadline = 0.4, 0.5       ; s

    [sweep]
    freq_rbs = 6, 8, 10, 12
    max_users_per_rb = 1, 2, 3

Every key of ``[sweep]`` is an axis; the run covers their cartesian product
in file order (first key varies slowest).
"""
from __future__ import annotations

import configparser
import csv
import io
import itertools
import json
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Optional

import numpy as np

from .channel import ChannelParams, channel_gains, generate_scenario, rng_for
from .errors import ConfigError, InfeasibleComputingError, InfeasibleInstanceError
from .heuristic import run_heuristic
from .model import SystemConfig, TaskSpec, audit_passed, evaluate
from .power import power_control_ok, solve_all

SCHEMA_VERSION = 1
EXPERIMENT_IDS = ("fig1", "fig2", "fig3", "fig4", "fig5", "custom")
SEED_ENV = "NOMA_MEC_SEED"

# config key -> SystemConfig field
SYSTEM_KEYS = {
    "users": "num_users",
    "freq_rbs": "num_freq_rbs",
    "bandwidth": "rb_bandwidth",
    "comp_rbs": "num_comp_rbs",
    "comp_capacity": "comp_rb_capacity",
    "max_users_per_rb": "max_users_per_rb",
    "clusters": "num_clusters",
    "noise_psd": "noise_psd",
    "cell_radius": "cell_radius",
}
INT_FIELDS = {"num_users", "num_freq_rbs", "num_comp_rbs", "max_users_per_rb", "num_clusters"}
CHANNEL_KEYS = {
    "shadowing_std": "shadowing_std_db",
    "carrier_mhz": "carrier_mhz",
    "bs_height": "bs_height",
    "ms_height": "ms_height",
    "city_correction": "city_correction_db",
    "min_distance": "min_distance",
}
SWEEP_KEYS = set(SYSTEM_KEYS) | {"compute", "input_mean"}
INPUT_HALF_WIDTH = 1000.0  # bits, half-width of the default input range


@dataclass(frozen=True)
class TaskRanges:
    workload: tuple = (0.5e9, 1e9)  # cycles
    input_bits: tuple = (5000.0, 7000.0)
    deadline: tuple = (0.4, 0.5)  # s
    power_budget: float = 1.0  # W

    def validate(self):
        for name in ("workload", "input_bits", "deadline"):
            lo, hi = getattr(self, name)
            if not (0 < lo <= hi and math.isfinite(hi)):
                raise ConfigError(f"task range {name} = {(lo, hi)} needs 0 < low <= high")
        if not self.power_budget > 0:
            raise ConfigError("power_budget must be > 0")


def generate_tasks(num_users: int, seed: int, ranges: TaskRanges = TaskRanges()) -> list:
    rng = rng_for(seed, "tasks")
    draws = rng.random((num_users, 3))
    out = []
    for u in range(num_users):
        vals = [lo + (hi - lo) * d for (lo, hi), d in
                zip((ranges.workload, ranges.input_bits, ranges.deadline), draws[u])]
        out.append(TaskSpec(workload=vals[0], input_bits=vals[1], deadline=vals[2],
                            power_budget=ranges.power_budget))
    return out


@dataclass(frozen=True)
class ExperimentSpec:
    experiment: str = "custom"
    sweep: tuple = ()  # ((name, (values...)), ...)
    replications: int = 10
    master_seed: Optional[int] = None  # None: taken from NOMA_MEC_SEED / --seed, else 0
    system: dict = field(default_factory=dict)  # SystemConfig overrides
    channel: dict = field(default_factory=dict)  # ChannelParams overrides
    tasks: TaskRanges = TaskRanges()
    seed_mode: str = "common"
    oracle: bool = False

    def validate(self):
        if self.experiment not in EXPERIMENT_IDS:
            raise ConfigError(f"unknown experiment id {self.experiment!r}")
        if int(self.replications) != self.replications or self.replications < 1:
            raise ConfigError(f"replications must be >= 1, got {self.replications!r}")
        if self.seed_mode not in ("common", "independent"):
            raise ConfigError(f"seed_mode must be common or independent, got {self.seed_mode!r}")
        for name, values in self.sweep:
            if name not in SWEEP_KEYS:
                raise ConfigError(f"unknown sweep variable {name!r}")
            if not values:
                raise ConfigError(f"sweep variable {name!r} has no values")
        self.tasks.validate()
        for point in self.points():
            self.system_config(point)
        return self

    def points(self) -> list:
        """Sweep points as dicts, first axis slowest; a single empty point without a sweep."""
        names = [n for n, _ in self.sweep]
        return [dict(zip(names, combo)) for combo in itertools.product(*(v for _, v in self.sweep))]

    def system_config(self, point: dict) -> SystemConfig:
        kw = dict(self.system)
        for name, value in point.items():
            if name == "compute":
                kw["num_comp_rbs"], kw["comp_rb_capacity"] = value
            elif name in SYSTEM_KEYS:
                kw[SYSTEM_KEYS[name]] = value
        if "max_users_per_rb" in point and "num_clusters" not in point:
            kw.pop("num_clusters", None)
        try:
            return SystemConfig(**kw)
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"sweep point {point}: {exc}") from exc

    def task_ranges(self, point: dict) -> TaskRanges:
        if "input_mean" in point:
            m = float(point["input_mean"])
            return replace(self.tasks, input_bits=(m - INPUT_HALF_WIDTH, m + INPUT_HALF_WIDTH))
        return self.tasks

    def channel_params(self) -> ChannelParams:
        return ChannelParams(**self.channel)

    def instance_seed(self, point_index: int, replication: int) -> int:
        """Seed of one instance; ``common`` reuses it across sweep points."""
        master = int(self.master_seed or 0)
        key = [master, replication] if self.seed_mode == "common" else [master, point_index, replication]
        return int(np.random.SeedSequence(key).generate_state(1, dtype=np.uint64)[0] >> 1)


# ---------------------------------------------------------------------------
# config parsing


def _floats(text: str, key: str, loc: str = "<config>") -> list:
    try:
        return [float(v) for v in text.replace(";", ",").split(",") if v.strip()]
    except ValueError:
        raise ConfigError(f"{loc}: {key} expects numbers, got {text!r}") from None


def _parse_compute(text: str, key: str, loc: str = "<config>") -> list:
    """'30x4, 120x1' -> [(30, 4e9), (120, 1e9)] (RB count, cycles/s per RB)."""
    out = []
    for item in text.split(","):
        item = item.strip().lower()
        if not item:
            continue
        try:
            n, cap = item.split("x")
            out.append((int(n), float(cap) * 1e9))
        except ValueError:
            raise ConfigError(f"{loc}: {key} expects <RBs>x<Gcycle/s>, got {item!r}") from None
    return out


def _sweep_values(name: str, text: str, loc: str = "<config>") -> tuple:
    if name == "compute":
        return tuple(_parse_compute(text, name, loc))
    vals = _floats(text, name, loc)
    field_name = SYSTEM_KEYS.get(name)
    if field_name in INT_FIELDS:
        if any(v != int(v) for v in vals):
            raise ConfigError(f"{loc}: sweep {name} needs integers, got {text!r}")
        return tuple(int(v) for v in vals)
    return tuple(vals)


def _key_lines(text: str) -> dict:
    """(section, key) -> line number, for error messages."""
    out, section = {}, None
    for n, line in enumerate(text.splitlines(), start=1):
        s = line.strip()
        if s.startswith("[") and s.endswith("]"):
            section = s[1:-1].strip()
        elif "=" in s and not s.startswith(("#", ";")):
            out[(section, s.split("=", 1)[0].strip().lower())] = n
    return out


def parse_config_text(text: str, source: str = "<config>") -> ExperimentSpec:
    cp = configparser.ConfigParser(inline_comment_prefixes=(";", "#"), interpolation=None)
    try:
        cp.read_string(text, source=source)
    except configparser.Error as exc:
        raise ConfigError(f"{source}: {exc}") from exc
    lines = _key_lines(text)
    known = {"experiment", "system", "tasks", "sweep", "channel"}
    for section in cp.sections():
        if section not in known:
            raise ConfigError(f"{source}: unknown section [{section}]")

    def where(section, key):
        n = lines.get((section, key))
        return f"{source}:{n}" if n else source

    kw = {}
    if cp.has_section("experiment"):
        sec = cp["experiment"]
        for key, value in sec.items():
            try:
                if key == "id":
                    kw["experiment"] = value.strip()
                elif key == "replications":
                    kw["replications"] = int(value)
                elif key == "seed":
                    kw["master_seed"] = int(value)
                elif key == "seed_mode":
                    kw["seed_mode"] = value.strip()
                elif key == "oracle":
                    kw["oracle"] = sec.getboolean(key)
                else:
                    raise ConfigError(f"{where('experiment', key)}: unknown key {key!r}")
            except ValueError as exc:
                raise ConfigError(f"{where('experiment', key)}: {key} = {value!r}: {exc}") from None

    system = {}
    channel = {}
    if cp.has_section("system"):
        for key, value in cp["system"].items():
            if key == "compute":
                pairs = _parse_compute(value, key, where("system", key))
                if len(pairs) != 1:
                    raise ConfigError(f"{where('system', key)}: compute takes one <RBs>x<Gcycle/s> value")
                (pair,) = pairs
                system["num_comp_rbs"], system["comp_rb_capacity"] = pair
                continue
            if key in CHANNEL_KEYS:
                channel[CHANNEL_KEYS[key]] = _floats(value, key, where("system", key))[0]
                continue
            if key not in SYSTEM_KEYS:
                raise ConfigError(f"{where('system', key)}: unknown key {key!r}")
            vals = _floats(value, key, where("system", key))
            if len(vals) != 1:
                raise ConfigError(f"{where('system', key)}: {key} takes one value (sweep it under [sweep])")
            (v,) = vals
            name = SYSTEM_KEYS[key]
            system[name] = int(v) if name in INT_FIELDS else v
    if cp.has_section("channel"):
        for key, value in cp["channel"].items():
            if key in ("shadowing", "fading"):
                channel[key] = cp["channel"].getboolean(key)
            elif key in CHANNEL_KEYS:
                channel[CHANNEL_KEYS[key]] = _floats(value, key, where("channel", key))[0]
            else:
                raise ConfigError(f"{where('channel', key)}: unknown key {key!r}")

    ranges = {}
    if cp.has_section("tasks"):
        for key, value in cp["tasks"].items():
            vals = _floats(value, key, where("tasks", key))
            if key == "power_budget":
                ranges[key] = vals[0]
            elif key in ("workload", "input_bits", "deadline"):
                if len(vals) != 2:
                    raise ConfigError(f"{where('tasks', key)}: {key} needs 'low, high'")
                ranges[key] = tuple(vals)
            else:
                raise ConfigError(f"{where('tasks', key)}: unknown key {key!r}")

    sweep = []
    if cp.has_section("sweep"):
        for key, value in cp["sweep"].items():
            if key not in SWEEP_KEYS:
                raise ConfigError(f"{where('sweep', key)}: unknown sweep variable {key!r}")
            sweep.append((key, _sweep_values(key, value, where("sweep", key))))

    spec = ExperimentSpec(system=system, channel=channel, tasks=TaskRanges(**ranges),
                          sweep=tuple(sweep), **kw)
    return spec.validate()


def parse_config(path) -> ExperimentSpec:
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"config file not found: {path}")
    return parse_config_text(path.read_text(encoding="utf-8"), source=str(path))


def resolve_seed(spec: ExperimentSpec, cli_seed: Optional[int] = None) -> ExperimentSpec:
    """Seed precedence: config file, then NOMA_MEC_SEED, then --seed, then 0."""
    if spec.master_seed is not None:
        return spec
    env = os.environ.get(SEED_ENV)
    if env is not None and env.strip():
        try:
            return replace(spec, master_seed=int(env))
        except ValueError:
            raise ConfigError(f"{SEED_ENV}={env!r} is not an integer") from None
    return replace(spec, master_seed=0 if cli_seed is None else int(cli_seed))


# ---------------------------------------------------------------------------
# presets (desk-scale analogs of the five figures)

PRESETS = {
    "fig1": """
[experiment]
id = fig1
replications = 15
oracle = true
[system]
freq_rbs = 3
compute = 8x10
max_users_per_rb = 3
[sweep]
users = 4, 6
""",
    "fig2": """
[experiment]
id = fig2
replications = 50
[system]
users = 6
[sweep]
freq_rbs = 6, 8, 10, 12
max_users_per_rb = 1, 2, 3
""",
    "fig3": """
[experiment]
id = fig3
replications = 20
[system]
freq_rbs = 12
max_users_per_rb = 3
[sweep]
users = 6, 9, 12
input_mean = 4000, 5500, 7000, 8500, 10000
""",
    "fig4": """
[experiment]
id = fig4
replications = 50
[system]
max_users_per_rb = 3
[sweep]
users = 6, 9, 12
compute = 30x4, 120x1, 30x3, 90x1
""",
    "fig5": """
[experiment]
id = fig5
replications = 50
[system]
max_users_per_rb = 3
[sweep]
users = 6, 9, 12
compute = 30x4, 120x1, 30x3, 90x1
""",
}


def preset(name: str) -> ExperimentSpec:
    if name not in PRESETS:
        raise ConfigError(f"unknown preset {name!r}; known: {', '.join(sorted(PRESETS))}")
    return parse_config_text(PRESETS[name], source=f"<preset {name}>")


# ---------------------------------------------------------------------------
# running

INSTANCE_COLUMNS = (
    "point", "replication", "seed", "feasible", "status",
    "energy_mj", "tx_time_ms", "comp_time_ms", "spectral_efficiency", "fairness",
    "solved_clusters", "clusters",
)
ORACLE_COLUMNS = ("oracle_energy_mj", "gap_pct")
SUMMARY_COLUMNS = (
    "point", "n", "n_feasible",
    "energy_mj_mean", "energy_mj_std", "energy_mj_feasible_mean",
    "tx_time_ms_mean", "comp_time_ms_mean", "comp_time_ms_std",
    "spectral_efficiency_mean", "spectral_efficiency_std",
    "fairness_mean", "fairness_std",
)
ORACLE_SUMMARY = ("oracle_energy_mj_mean", "gap_pct_median", "n_oracle_feasible")


def _point_value(name, value):
    if name == "compute":
        n, cap = value
        return f"{n}x{cap / 1e9:g}"
    return value


def run_instance(spec: ExperimentSpec, point_index: int, replication: int) -> dict:
    """One (sweep point, replication) row; never raises on infeasibility."""
    from .oracle import enumerate_optimal  # local: only fig1-style runs need it

    point = spec.points()[point_index]
    cfg = spec.system_config(point)
    seed = spec.instance_seed(point_index, replication)
    row = {"point": point_index}
    row.update({name: _point_value(name, value) for name, value in point.items()})
    row.update({"replication": replication, "seed": seed})
    nan = math.nan
    row.update({k: nan for k in INSTANCE_COLUMNS if k not in row})
    if spec.oracle:
        row.update({k: nan for k in ORACLE_COLUMNS})

    scenario = generate_scenario(cfg, seed)
    channels = channel_gains(scenario, cfg, seed, spec.channel_params())
    tasks = generate_tasks(cfg.num_users, seed, spec.task_ranges(point))
    try:
        heuristic = run_heuristic(channels, tasks, cfg)
    except InfeasibleComputingError:
        row.update(feasible=0, status="computing_infeasible", solved_clusters=0, clusters=cfg.n_clusters)
        return row
    final = solve_all(heuristic, channels, tasks, cfg)
    report = evaluate(final, channels, tasks, cfg)
    status = final.flags.get("power_control", {})
    ok = power_control_ok(final) and audit_passed(report.audit)
    row.update(
        feasible=int(ok),
        status="ok" if ok else ("power_infeasible" if not power_control_ok(final) else "audit_failed"),
        energy_mj=report.total_energy * 1e3,
        tx_time_ms=float(np.mean(report.transmission_times)) * 1e3,
        comp_time_ms=float(np.mean(report.computing_times)) * 1e3,
        spectral_efficiency=report.spectral_efficiency,
        fairness=report.fairness_index,
        solved_clusters=sum(v == "solved" for v in status.values()),
        clusters=len(status),
    )
    if spec.oracle:
        try:
            opt = enumerate_optimal(channels, tasks, cfg)
            row["oracle_energy_mj"] = opt.energy * 1e3
            h = row["energy_mj"] if ok else math.inf
            row["gap_pct"] = 100.0 * (h - row["oracle_energy_mj"]) / row["oracle_energy_mj"]
        except InfeasibleInstanceError:
            row["oracle_energy_mj"] = math.inf
    return row


def _run_task(args):
    spec, k, rep = args
    return run_instance(spec, k, rep)


def run_rows(spec: ExperimentSpec, threads: int = 1) -> list:
    jobs = [(spec, k, rep) for k in range(len(spec.points())) for rep in range(spec.replications)]
    if threads and threads > 1:
        with ProcessPoolExecutor(max_workers=threads) as pool:
            return list(pool.map(_run_task, jobs, chunksize=4))
    return [_run_task(j) for j in jobs]


def _mean(values):
    v = [x for x in values if not math.isnan(x)]
    return math.fsum(v) / len(v) if v else math.nan


def _std(values):
    v = [x for x in values if not math.isnan(x)]
    if len(v) < 2:
        return 0.0 if v else math.nan
    m = math.fsum(v) / len(v)
    return math.sqrt(math.fsum((x - m) ** 2 for x in v) / (len(v) - 1))


def summarize(spec: ExperimentSpec, rows: list) -> list:
    out = []
    names = [n for n, _ in spec.sweep]
    for k, point in enumerate(spec.points()):
        rs = sorted((r for r in rows if r["point"] == k), key=lambda r: r["replication"])
        s = {"point": k}
        s.update({n: _point_value(n, point[n]) for n in names})
        e = [r["energy_mj"] for r in rs]
        s.update(
            n=len(rs),
            n_feasible=sum(int(r["feasible"]) for r in rs),
            energy_mj_mean=_mean(e),
            energy_mj_std=_std(e),
            energy_mj_feasible_mean=_mean([r["energy_mj"] for r in rs if r["feasible"]]),
            tx_time_ms_mean=_mean([r["tx_time_ms"] for r in rs]),
            comp_time_ms_mean=_mean([r["comp_time_ms"] for r in rs]),
            comp_time_ms_std=_std([r["comp_time_ms"] for r in rs]),
            spectral_efficiency_mean=_mean([r["spectral_efficiency"] for r in rs]),
            spectral_efficiency_std=_std([r["spectral_efficiency"] for r in rs]),
            fairness_mean=_mean([r["fairness"] for r in rs]),
            fairness_std=_std([r["fairness"] for r in rs]),
        )
        if spec.oracle:
            gaps = [r["gap_pct"] for r in rs if math.isfinite(r["oracle_energy_mj"])]
            s.update(
                oracle_energy_mj_mean=_mean([r["oracle_energy_mj"] for r in rs
                                             if math.isfinite(r["oracle_energy_mj"])]),
                gap_pct_median=float(np.median(gaps)) if gaps else math.nan,
                n_oracle_feasible=len(gaps),
            )
        out.append(s)
    return out


def instance_columns(spec: ExperimentSpec) -> tuple:
    names = tuple(n for n, _ in spec.sweep)
    cols = ("point",) + names + INSTANCE_COLUMNS[1:]
    return cols + (ORACLE_COLUMNS if spec.oracle else ())


def summary_columns(spec: ExperimentSpec) -> tuple:
    names = tuple(n for n, _ in spec.sweep)
    return ("point",) + names + SUMMARY_COLUMNS[1:] + (ORACLE_SUMMARY if spec.oracle else ())


def _fmt(v):
    if isinstance(v, float):
        if math.isnan(v):
            return "nan"
        if math.isinf(v):
            return "inf" if v > 0 else "-inf"
        return repr(v)
    return str(v)


def schema_tag(spec: ExperimentSpec, kind: str) -> str:
    return f"noma-mec/{spec.experiment}/{kind}/v{SCHEMA_VERSION}"


def to_csv(rows: list, columns: tuple, schema: str) -> str:
    buf = io.StringIO()
    buf.write(f"# schema: {schema}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for r in rows:
        w.writerow([_fmt(r[c]) for c in columns])
    return buf.getvalue()


def _json_value(v):
    if isinstance(v, float) and not math.isfinite(v):
        return None if math.isnan(v) else ("inf" if v > 0 else "-inf")
    if isinstance(v, (np.integer,)):
        return int(v)
    if isinstance(v, (np.floating,)):
        return float(v)
    return v


def to_json(rows: list, columns: tuple, schema: str) -> str:
    doc = {"schema": schema, "columns": list(columns),
           "rows": [{c: _json_value(r[c]) for c in columns} for r in rows]}
    return json.dumps(doc, indent=1, sort_keys=False) + "\n"


@dataclass
class ExperimentResult:
    spec: ExperimentSpec
    rows: list
    summary: list

    def render(self, kind: str = "instances", fmt: str = "csv") -> str:
        if kind == "instances":
            data, cols = self.rows, instance_columns(self.spec)
        else:
            data, cols = self.summary, summary_columns(self.spec)
        writer = to_csv if fmt == "csv" else to_json
        return writer(data, cols, schema_tag(self.spec, kind))

    def write(self, outdir, fmt: str = "csv") -> list:
        outdir = Path(outdir)
        outdir.mkdir(parents=True, exist_ok=True)
        paths = []
        for kind in ("instances", "summary"):
            path = outdir / f"{self.spec.experiment}_{kind}.{fmt}"
            path.write_text(self.render(kind, fmt), encoding="utf-8")
            paths.append(path)
        return paths


def run_experiment(spec: ExperimentSpec, threads: int = 1) -> ExperimentResult:
    spec.validate()
    rows = run_rows(spec, threads)
    return ExperimentResult(spec=spec, rows=rows, summary=summarize(spec, rows))


def summary_series(result: ExperimentResult, column: str, x: str, series: Optional[str] = None) -> dict:
    """{series value: [(x value, column value), ...]} from the summary table."""
    out = {}
    for s in result.summary:
        key = s[series] if series else None
        out.setdefault(key, []).append((s[x], s[column]))
    return out
