"""System model: configuration, tasks, assignments and per-user metrics.

Conventions used throughout the package:

* clusters, order indices, users and RBs are 0-based; order 0 is decoded
  first by the SIC receiver and sees interference from every higher order
  of its cluster on every shared RB;
* rates are in bits/s (log base 2), powers in W, times in s, energies in J;
* dB / dBm values only appear in :class:`SystemConfig` and the channel
  generator.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import TYPE_CHECKING, Optional, Sequence

import numpy as np

from .errors import (
    ConfigError,
    DomainError,
    InfeasibleRateError,
    NoComputingResourceError,
)

if TYPE_CHECKING:
    from .channel import ChannelMatrix

CONSTRAINTS = tuple(f"C{k}" for k in range(1, 13))


def dbm_to_watt(dbm):
    return 10.0 ** ((np.asarray(dbm, dtype=float) - 30.0) / 10.0)


@dataclass(frozen=True)
class SystemConfig:
    num_users: int = 10
    num_freq_rbs: int = 30
    rb_bandwidth: float = 180e3  # Hz
    num_comp_rbs: int = 30
    comp_rb_capacity: float = 10e9  # cycles/s per computing RB
    max_users_per_rb: int = 3
    num_clusters: Optional[int] = None  # None -> default_num_clusters()
    noise_psd: float = -173.0  # dBm/Hz
    cell_radius: float = 1000.0  # m

    def __post_init__(self):
        self.validate()

    @property
    def oma(self) -> bool:
        """One user per RB: every user is its own cluster."""
        return self.max_users_per_rb == 1

    @property
    def n_clusters(self) -> int:
        if self.num_clusters is not None:
            return int(self.num_clusters)
        return default_num_clusters(self.num_users, self.max_users_per_rb)

    @property
    def min_cluster_size(self) -> int:
        return min(2, self.max_users_per_rb)

    @property
    def noise_power(self) -> float:
        """Per-RB noise power sigma^2 in W."""
        return float(dbm_to_watt(self.noise_psd) * self.rb_bandwidth)

    def validate(self):
        for name in ("num_users", "num_freq_rbs", "num_comp_rbs", "max_users_per_rb"):
            value = getattr(self, name)
            if int(value) != value or value < 1:
                raise ConfigError(f"{name} must be a positive integer, got {value!r}")
        if self.num_clusters is not None and (
            int(self.num_clusters) != self.num_clusters or self.num_clusters < 1
        ):
            raise ConfigError(f"num_clusters must be a positive integer, got {self.num_clusters!r}")
        if not self.rb_bandwidth > 0:
            raise ConfigError("rb_bandwidth must be > 0")
        if not self.comp_rb_capacity > 0:
            raise ConfigError("comp_rb_capacity must be > 0")
        if not self.cell_radius > 0:
            raise ConfigError("cell_radius must be > 0")
        n, u, umax = self.n_clusters, self.num_users, self.max_users_per_rb
        if n * umax < u:
            raise ConfigError(f"N*u_max >= U violated: {n}*{umax} < {u}")
        if not self.oma and n > u // 2:
            raise ConfigError(f"N <= floor(U/2) violated: N={n}, U={u}")


def default_num_clusters(num_users: int, max_users_per_rb: int) -> int:
    if max_users_per_rb == 1:
        return num_users
    # no admissible N exists when ceil(U/u_max) > floor(U/2); validate() says so
    return max(1, min(num_users // 2, -(-num_users // max_users_per_rb)))


@dataclass(frozen=True)
class TaskSpec:
    workload: float  # CPU cycles
    input_bits: float
    deadline: float  # s
    power_budget: float = 1.0  # W

    def __post_init__(self):
        for name in ("workload", "input_bits", "deadline", "power_budget"):
            value = getattr(self, name)
            if not (value > 0 and math.isfinite(value)):
                raise DomainError(f"TaskSpec.{name} must be finite and > 0, got {value!r}")


def task_arrays(tasks: Sequence[TaskSpec]):
    """(workload, input_bits, deadline, power_budget) as float arrays."""
    return tuple(
        np.array([getattr(t, name) for t in tasks], dtype=float)
        for name in ("workload", "input_bits", "deadline", "power_budget")
    )


@dataclass
class Assignment:
    """Full decision vector of P1.

    ``cluster_order[u]`` is ``(cluster, order)`` or ``None``; ``freq_map[r]``
    is the cluster owning RB ``r`` or ``None``; ``comp_alloc[i, j]`` counts
    computing RBs of slot ``(i, j)``; ``powers[u, r]`` in W.
    """

    cluster_order: list
    freq_map: list
    comp_alloc: np.ndarray
    powers: np.ndarray
    flags: dict = field(default_factory=dict)

    @classmethod
    def empty(cls, config: SystemConfig) -> "Assignment":
        return cls(
            cluster_order=[None] * config.num_users,
            freq_map=[None] * config.num_freq_rbs,
            comp_alloc=np.zeros((config.n_clusters, config.max_users_per_rb), dtype=int),
            powers=np.zeros((config.num_users, config.num_freq_rbs)),
        )

    def members(self, cluster: int) -> list:
        """Users of ``cluster`` sorted by order index."""
        pairs = sorted(
            (slot[1], u)
            for u, slot in enumerate(self.cluster_order)
            if slot is not None and slot[0] == cluster
        )
        return [u for _, u in pairs]

    def cluster_rbs(self, cluster: int) -> list:
        return [r for r, i in enumerate(self.freq_map) if i == cluster]

    def copy(self) -> "Assignment":
        return Assignment(
            cluster_order=list(self.cluster_order),
            freq_map=list(self.freq_map),
            comp_alloc=self.comp_alloc.copy(),
            powers=self.powers.copy(),
            flags=dict(self.flags),
        )


def cluster_rates(gains, powers, noise: float, bandwidth: float) -> np.ndarray:
    """Exact SIC rates of a cluster on its RBs.

    ``gains`` and ``powers`` are (K, M) arrays with rows in decoding order.
    Row k sees interference from rows k+1.. on the same column.
    """
    received = np.asarray(gains, dtype=float) * np.asarray(powers, dtype=float)
    # interference[k] = sum of received[k+1:]
    tail = np.cumsum(received[::-1], axis=0)[::-1]
    interference = tail - received
    sinr = received / (noise + interference)
    return bandwidth * np.log2(1.0 + sinr).sum(axis=1)


def user_rates(assignment: Assignment, channels: "ChannelMatrix", config: SystemConfig) -> np.ndarray:
    """SIC uplink rate for every user; unassigned users get 0."""
    rates = np.zeros(config.num_users)
    noise, bw = config.noise_power, config.rb_bandwidth
    clusters = {slot[0] for slot in assignment.cluster_order if slot is not None}
    for i in sorted(clusters):
        users = assignment.members(i)
        rbs = assignment.cluster_rbs(i)
        if not rbs:
            continue
        g = channels.gains[np.ix_(users, rbs)]
        p = assignment.powers[np.ix_(users, rbs)]
        rates[users] = cluster_rates(g, p, noise, bw)
    return rates


def achievable_rate(user: int, assignment: Assignment, channels: "ChannelMatrix", config: SystemConfig) -> float:
    slot = assignment.cluster_order[user]
    if slot is None:
        raise DomainError(f"user {user} is not assigned to any cluster")
    i, j = slot
    rbs = assignment.cluster_rbs(i)
    if not rbs:
        return 0.0
    noise = config.noise_power
    total = 0.0
    for r in rbs:
        interference = sum(
            channels.gains[k, r] * assignment.powers[k, r]
            for k, other in enumerate(assignment.cluster_order)
            if k != user and other is not None and other[0] == i and other[1] > j
        )
        sinr = channels.gains[user, r] * assignment.powers[user, r] / (noise + interference)
        total += config.rb_bandwidth * math.log2(1.0 + sinr)
    return total


def transmission_time(rate: float, task: TaskSpec) -> float:
    if not rate > 0:
        raise InfeasibleRateError(f"transmission needs a positive rate, got {rate!r}")
    return task.input_bits / rate


def energy(user: int, assignment: Assignment, transmission_time: float) -> float:
    return float(transmission_time * assignment.powers[user].sum())


def computing_time(user: int, assignment: Assignment, task: TaskSpec, config: SystemConfig) -> float:
    slot = assignment.cluster_order[user]
    if slot is None:
        raise DomainError(f"user {user} is not assigned to any cluster")
    x = int(assignment.comp_alloc[slot])
    if x <= 0:
        raise NoComputingResourceError(f"slot {slot} of user {user} has no computing RBs")
    return task.workload / (x * config.comp_rb_capacity)


def min_rate(task: TaskSpec, comp_time: float) -> float:
    """Rate requirement L/(D-Q); infinite when the deadline is already spent."""
    slack = task.deadline - comp_time
    if slack <= 0:
        return math.inf
    return task.input_bits / slack


def jain_fairness(values) -> float:
    x = np.asarray(values, dtype=float)
    if x.size == 0:
        raise DomainError("fairness index of an empty sequence")
    if not np.all(x > 0) or not np.all(np.isfinite(x)):
        raise DomainError("fairness index needs finite positive entries")
    return float(x.sum() ** 2 / (x.size * np.sum(x * x)))


def spectral_efficiency(assignment: Assignment, channels: "ChannelMatrix", config: SystemConfig) -> float:
    rates = user_rates(assignment, channels, config)
    return float(rates.sum() / (config.num_freq_rbs * config.rb_bandwidth))


@dataclass(frozen=True)
class Check:
    passed: bool
    violations: tuple = ()


def _check(violations) -> Check:
    return Check(passed=not violations, violations=tuple(violations))


def audit_constraints(
    assignment: Assignment,
    channels: "ChannelMatrix",
    tasks: Sequence[TaskSpec],
    config: SystemConfig,
    rtol: float = 1e-12,
) -> dict:
    """Evaluate C1-C12 of P1. Returns ``{"C1": Check, ...}``; never raises."""
    U, M_f = config.num_users, config.num_freq_rbs
    N, umax = config.n_clusters, config.max_users_per_rb
    a = assignment
    out = {}

    shape_ok = a.comp_alloc.shape == (N, umax) and a.powers.shape == (U, M_f)
    valid_slot = [
        slot is not None and 0 <= slot[0] < N and 0 <= slot[1] < umax
        for slot in a.cluster_order
    ]

    # C10: alpha binary over I x J
    v = [f"user {u}: slot {slot} outside I x J" for u, slot in enumerate(a.cluster_order)
         if slot is not None and not valid_slot[u]]
    if len(a.cluster_order) != U:
        v.append(f"cluster_order has {len(a.cluster_order)} entries, expected {U}")
    out["C10"] = _check(v)

    # C3: exactly one (i, j) per user; a slot holds at most one user
    v = [f"user {u} unassigned" for u, slot in enumerate(a.cluster_order) if slot is None]
    seen = {}
    for u, slot in enumerate(a.cluster_order):
        if slot is not None:
            seen.setdefault(tuple(slot), []).append(u)
    v += [f"slot {s} shared by users {us}" for s, us in sorted(seen.items()) if len(us) > 1]
    out["C3"] = _check(v)

    # C4: cluster sizes
    sizes = np.zeros(N, dtype=int)
    for u, slot in enumerate(a.cluster_order):
        if valid_slot[u]:
            sizes[slot[0]] += 1
    lo = config.min_cluster_size
    out["C4"] = _check([f"cluster {i} has {sizes[i]} users (< {lo})" for i in range(N) if sizes[i] < lo])

    # C11 / C5: beta binary and at most one cluster per RB
    v11, v5 = [], []
    if len(a.freq_map) != M_f:
        v11.append(f"freq_map has {len(a.freq_map)} entries, expected {M_f}")
    for r, i in enumerate(a.freq_map):
        if i is None:
            continue
        if isinstance(i, (list, tuple, set)):
            if len(i) > 1:
                v5.append(f"RB {r} mapped to clusters {sorted(i)}")
            continue
        try:
            ok = int(i) == i and 0 <= int(i) < N
        except (TypeError, ValueError):
            ok = False
        if not ok:
            v11.append(f"RB {r} mapped to invalid cluster {i!r}")
    out["C5"] = _check(v5)
    out["C11"] = _check(v11)

    # C12: integer, nonnegative computing counts
    x = np.asarray(a.comp_alloc)
    v = [] if shape_ok else [f"comp_alloc shape {x.shape}, expected {(N, umax)}"]
    if not np.issubdtype(x.dtype, np.integer):
        v.append(f"comp_alloc dtype {x.dtype} is not integral")
    v += [f"x{tuple(int(t) for t in idx)} = {x[idx]} < 0" for idx in zip(*np.nonzero(x < 0))]
    out["C12"] = _check(v)

    # C6: computing budget
    total_x = int(x.sum())
    out["C6"] = _check([] if total_x <= config.num_comp_rbs else
                       [f"sum x = {total_x} > M_c = {config.num_comp_rbs}"])

    # C7: packed order indices
    v = []
    occupied = {tuple(s) for s, ok in zip(a.cluster_order, valid_slot) if ok}
    for i, j in sorted(occupied):
        if j > 0 and (i, j - 1) not in occupied:
            v.append(f"cluster {i}: order {j} occupied but {j - 1} empty")
    out["C7"] = _check(v)

    # C8 / C9: power budget and sign
    p = np.asarray(a.powers, dtype=float)
    v8, v9 = [], []
    if p.shape == (U, M_f):
        for u in range(U):
            budget = tasks[u].power_budget
            total = p[u].sum()
            if total > budget * (1 + rtol):
                v8.append(f"user {u}: sum p = {total!r} > {budget!r}")
        v9 = [f"p[{u},{r}] = {p[u, r]!r}" for u, r in zip(*np.nonzero(~(p >= 0) | ~np.isfinite(p)))]
    else:
        v9.append(f"powers shape {p.shape}, expected {(U, M_f)}")
    out["C8"] = _check(v8)
    out["C9"] = _check(v9)

    # C2 / C1: computing deadline and rate requirement
    v1, v2 = [], []
    structural = out["C3"].passed and out["C10"].passed and shape_ok and out["C11"].passed
    rates = user_rates(a, channels, config) if structural else None
    for u, task in enumerate(tasks):
        if not valid_slot[u] or not shape_ok:
            v2.append(f"user {u}: no valid slot")
            v1.append(f"user {u}: no valid slot")
            continue
        xu = int(x[tuple(a.cluster_order[u])])
        if xu <= 0:
            v2.append(f"user {u}: no computing RBs")
            v1.append(f"user {u}: no computing RBs")
            continue
        q = task.workload / (xu * config.comp_rb_capacity)
        if not q < task.deadline:
            v2.append(f"user {u}: Q = {q!r} >= D = {task.deadline!r}")
            v1.append(f"user {u}: deadline exhausted by computing")
            continue
        if rates is None:
            v1.append(f"user {u}: rate undefined (structural violations)")
            continue
        need = task.input_bits / (task.deadline - q)
        if rates[u] < need * (1 - rtol):
            v1.append(f"user {u}: R = {rates[u]!r} < {need!r}")
    out["C1"] = _check(v1)
    out["C2"] = _check(v2)
    return {name: out[name] for name in CONSTRAINTS}


def audit_passed(audit: dict, names=CONSTRAINTS) -> bool:
    return all(audit[n].passed for n in names)


@dataclass
class EvaluationReport:
    rates: np.ndarray
    transmission_times: np.ndarray
    computing_times: np.ndarray
    energies: np.ndarray
    total_energy: float
    spectral_efficiency: float
    fairness_index: float
    audit: dict
    flags: dict = field(default_factory=dict)

    @property
    def feasible(self) -> bool:
        return audit_passed(self.audit)


def evaluate(assignment: Assignment, channels: "ChannelMatrix", tasks: Sequence[TaskSpec],
             config: SystemConfig) -> EvaluationReport:
    """Per-user T, Q, E and aggregate metrics of a complete assignment."""
    U = config.num_users
    rates = user_rates(assignment, channels, config)
    tx = np.full(U, math.inf)
    comp = np.full(U, math.inf)
    en = np.full(U, math.inf)
    for u, task in enumerate(tasks):
        if rates[u] > 0:
            tx[u] = transmission_time(rates[u], task)
            en[u] = energy(u, assignment, tx[u])
        elif assignment.powers[u].sum() == 0:
            en[u] = 0.0
        try:
            comp[u] = computing_time(u, assignment, task, config)
        except (DomainError, NoComputingResourceError):
            pass
    fair = jain_fairness(comp) if np.all(np.isfinite(comp)) else math.nan
    flags = dict(assignment.flags)
    no_rbs = [i for i in range(config.n_clusters) if assignment.members(i) and not assignment.cluster_rbs(i)]
    if no_rbs:
        flags["clusters_without_rbs"] = no_rbs
    return EvaluationReport(
        rates=rates,
        transmission_times=tx,
        computing_times=comp,
        energies=en,
        total_energy=float(en.sum()),
        spectral_efficiency=float(rates.sum() / (config.num_freq_rbs * config.rb_bandwidth)),
        fairness_index=fair,
        audit=audit_constraints(assignment, channels, tasks, config),
        flags=flags,
    )
