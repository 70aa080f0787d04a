"""Exhaustive optimum of tiny instances and grid-search power oracles.

The discrete space is every labelled clustering (user -> (cluster, order)
with packed orders and admissible cluster sizes), every RB map (each RB to
one cluster or to none) and every computing allocation with ``x_u`` at least
the deadline-feasible minimum and ``sum x <= M_c``. For each point the power
control module solves every cluster and the energies are evaluated with the
exact rates.

Total energy is a sum of per-cluster terms, each depending only on the
cluster's ordered members, its RB subset and its members' ``x``. The search
therefore solves each distinct per-cluster subproblem once (all of them in
one batched call) and combines the computing budget across clusters with a
min-plus convolution. ``method="naive"`` walks the full product space
configuration by configuration instead; both report the number of
configurations covered.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .channel import ChannelMatrix
from .errors import (
    ClusterInfeasibleError,
    InfeasibleInstanceError,
    InstanceTooLargeError,
    NonConvergenceError,
)
from .model import Assignment, SystemConfig, TaskSpec, cluster_rates
from .power import ClusterProblem, SolverOptions, solve_clusters


@dataclass(frozen=True)
class TinyInstanceLimit:
    max_users: int = 6
    max_freq_rbs: int = 4
    max_comp_rbs: int = 8
    max_configurations: int = 10**7

    def check(self, config: SystemConfig, count: int):
        if config.num_users > self.max_users:
            raise InstanceTooLargeError(f"U={config.num_users} > {self.max_users}")
        if config.num_freq_rbs > self.max_freq_rbs:
            raise InstanceTooLargeError(f"M_f={config.num_freq_rbs} > {self.max_freq_rbs}")
        if config.num_comp_rbs > self.max_comp_rbs:
            raise InstanceTooLargeError(f"M_c={config.num_comp_rbs} > {self.max_comp_rbs}")
        if count > self.max_configurations:
            raise InstanceTooLargeError(f"{count} configurations > {self.max_configurations}")


def min_comp_rbs(task: TaskSpec, capacity: float) -> int:
    """Smallest x with lambda / (x C) < D."""
    x = max(1, math.ceil(task.workload / (task.deadline * capacity)))
    while not task.workload / (x * capacity) < task.deadline:
        x += 1
    return x


def size_compositions(config: SystemConfig) -> list:
    """Cluster size vectors (one entry per cluster) admissible under C4/C7."""
    lo, hi = config.min_cluster_size, config.max_users_per_rb
    N, U = config.n_clusters, config.num_users
    return [s for s in itertools.product(range(lo, hi + 1), repeat=N) if sum(s) == U]


def configuration_count(config: SystemConfig, tasks: Sequence[TaskSpec]) -> int:
    """Closed-form size of the enumerated space."""
    U, N, M = config.num_users, config.n_clusters, config.num_freq_rbs
    free = config.num_comp_rbs - sum(min_comp_rbs(t, config.comp_rb_capacity) for t in tasks)
    if free < 0:
        return 0
    # x_u = xmin_u + y_u, y >= 0, sum y <= free: stars and bars with a slack
    return math.factorial(U) * len(size_compositions(config)) * (N + 1) ** M * math.comb(free + U, U)


def clusterings(config: SystemConfig):
    """Every labelled clustering as a tuple of ordered member tuples."""
    U = config.num_users
    for sizes in size_compositions(config):
        cuts = np.cumsum((0,) + sizes)
        for perm in itertools.permutations(range(U)):
            yield tuple(perm[cuts[i]:cuts[i + 1]] for i in range(len(sizes)))


def _x_tuples(xmin: Sequence[int], cap: int):
    """x vectors with x_k >= xmin_k and sum <= cap."""
    ranges = [range(lo, cap - (sum(xmin) - lo) + 1) for lo in xmin]
    for x in itertools.product(*ranges):
        if sum(x) <= cap:
            yield x


@dataclass
class OracleResult:
    assignment: Assignment
    energy: float
    configurations: int
    subproblems: int
    power_status: dict = field(default_factory=dict)  # status -> count over subproblems


class _ClusterEnergies:
    """Memoised energy of (ordered members, RB subset, x tuple)."""

    def __init__(self, channels, tasks, config, xmin, options):
        self.g = channels.gains
        self.tasks = tasks
        self.config = config
        self.xmin = xmin
        self.options = options
        self.energy = {}
        self.powers = {}
        self.status = {}

    def problem(self, members, rbs, x):
        cfg = self.config
        rmin = []
        for u, xu in zip(members, x):
            t = self.tasks[u]
            rmin.append(t.input_bits / (t.deadline - t.workload / (xu * cfg.comp_rb_capacity)))
        return ClusterProblem(
            users=tuple(members),
            rbs=tuple(rbs),
            gains=self.g[np.ix_(members, rbs)],
            min_rates=np.array(rmin),
            budgets=np.array([self.tasks[u].power_budget for u in members]),
            noise=cfg.noise_power,
            bandwidth=cfg.rb_bandwidth,
        )

    def solve(self, keys):
        todo = [k for k in keys if k not in self.energy]
        problems = [self.problem(*k) for k in todo]
        for k, prob, res in zip(todo, problems, solve_clusters(problems, self.options)):
            if isinstance(res, Exception):
                kind = "infeasible" if isinstance(res, ClusterInfeasibleError) else (
                    "nonconverged" if isinstance(res, NonConvergenceError) else "error")
                self.status[kind] = self.status.get(kind, 0) + 1
                self.energy[k] = math.inf
                continue
            rates = cluster_rates(prob.gains, res.powers, prob.noise, prob.bandwidth)
            bits = np.array([self.tasks[u].input_bits for u in k[0]])
            self.energy[k] = float(np.sum(bits / rates * res.powers.sum(axis=1)))
            self.powers[k] = res.powers
            self.status["solved"] = self.status.get("solved", 0) + 1

    def table(self, members, rbs, cap):
        """best[b] = min energy with sum x == b; arg[b]; count[b] of x tuples."""
        best = np.full(cap + 1, math.inf)
        arg = [None] * (cap + 1)
        count = np.zeros(cap + 1, dtype=np.int64)
        own = cap - sum(self.xmin) + sum(self.xmin[u] for u in members)
        for x in _x_tuples([self.xmin[u] for u in members], own):
            b = sum(x)
            count[b] += 1
            e = self.energy[(members, rbs, x)] if rbs else math.inf
            if e < best[b]:
                best[b], arg[b] = e, x
        return best, arg, count


def _all_keys(config, xmin):
    U, M = config.num_users, config.num_freq_rbs
    free = config.num_comp_rbs - sum(xmin)
    sizes = sorted({s for comp in size_compositions(config) for s in comp})
    subsets = [tuple(c) for k in range(1, M + 1) for c in itertools.combinations(range(M), k)]
    keys = []
    for k in sizes:
        for members in itertools.permutations(range(U), k):
            cap = free + sum(xmin[u] for u in members)
            for x in _x_tuples([xmin[u] for u in members], cap):
                keys.extend((members, rbs, x) for rbs in subsets)
    return keys


def _min_plus(a, b, cap):
    """c[..., t] = min_{i+j=t} a[..., i] + b[..., j] for t <= cap, with the split i."""
    n = cap + 1
    j = np.arange(n)[None, :] - np.arange(n)[:, None]  # [i, t]
    vals = a[..., :, None] + np.take(b, np.clip(j, 0, cap), axis=-1)
    vals = np.where(j >= 0, vals, math.inf)
    split = np.argmin(vals, axis=-2)
    return np.take_along_axis(vals, split[..., None, :], axis=-2)[..., 0, :], split


def _build_assignment(config, clustering, rb_sets, xs, powers):
    a = Assignment.empty(config)
    for i, members in enumerate(clustering):
        for j, u in enumerate(members):
            a.cluster_order[u] = (i, j)
            a.comp_alloc[i, j] = xs[i][j]
        for r in rb_sets[i]:
            a.freq_map[r] = i
        if rb_sets[i]:
            a.powers[np.ix_(members, rb_sets[i])] = powers[i]
    a.flags["power_control"] = {i: "solved" for i in range(len(clustering))}
    return a


def enumerate_optimal(
    channels: ChannelMatrix,
    tasks: Sequence[TaskSpec],
    config: SystemConfig,
    limit: TinyInstanceLimit = TinyInstanceLimit(),
    options: Optional[SolverOptions] = None,
    method: str = "decomposed",
) -> OracleResult:
    """Minimum total energy over the whole discrete space of a tiny instance."""
    if method not in ("decomposed", "naive"):
        raise ValueError(f"unknown method {method!r}")
    M, N = config.num_freq_rbs, config.n_clusters
    expected = configuration_count(config, tasks)
    limit.check(config, expected)
    cap = config.num_comp_rbs
    xmin = [min_comp_rbs(t, config.comp_rb_capacity) for t in tasks]
    if sum(xmin) > cap:
        raise InfeasibleInstanceError("minimum computing RBs exceed M_c", {"computing": sum(xmin) - cap})

    memo = _ClusterEnergies(channels, tasks, config, xmin, options)
    memo.solve(_all_keys(config, xmin))

    best_e, best = math.inf, None
    covered = 0
    free = cap - sum(xmin)
    betas = np.array(list(itertools.product(range(N + 1), repeat=M)), dtype=int).reshape(-1, M)
    # bitmask of the RB subset each beta gives to each cluster, (n_beta, N)
    masks = ((betas[:, None, :] == np.arange(N)[None, :, None]) << np.arange(M)).sum(axis=2)
    subsets = [tuple(r for r in range(M) if k >> r & 1) for k in range(2**M)]
    tables = {}

    def member_table(m):
        if m not in tables:
            per = [memo.table(m, subsets[k], cap) for k in range(2**M)]
            tables[m] = (np.stack([t[0] for t in per]), [t[1] for t in per], per[0][2])
        return tables[m]

    for clustering in clusterings(config):
        if method == "naive":
            per = [list(_x_tuples([xmin[u] for u in m], free + sum(xmin[u] for u in m)))
                   for m in clustering]
            for beta in betas:
                rb_sets = [tuple(r for r in range(M) if beta[r] == i) for i in range(N)]
                for xs in itertools.product(*per):
                    if sum(map(sum, xs)) > cap:
                        continue
                    covered += 1
                    e = 0.0
                    for m, rbs, x in zip(clustering, rb_sets, xs):
                        e += memo.energy[(m, rbs, x)] if rbs else math.inf
                    if e < best_e:
                        best_e, best = e, (clustering, rb_sets, xs)
            continue
        parts = [member_table(m) for m in clustering]
        acc = parts[0][0][masks[:, 0]]  # (n_beta, cap+1)
        cnt = parts[0][2]
        splits = []
        for i in range(1, N):
            acc, split = _min_plus(acc, parts[i][0][masks[:, i]], cap)
            cnt = np.convolve(cnt, parts[i][2])[: cap + 1]
            splits.append(split)
        covered += int(cnt.sum()) * len(betas)
        flat = int(np.argmin(acc))
        kb, t = divmod(flat, cap + 1)
        if acc[kb, t] < best_e:
            best_e = float(acc[kb, t])
            # unwind the convolution chain into per-cluster budgets
            budgets = []
            for split in reversed(splits):
                ti = int(split[kb, t])
                budgets.append(t - ti)
                t = ti
            budgets.append(t)
            budgets.reverse()
            rb_sets = [subsets[masks[kb, i]] for i in range(N)]
            xs = [parts[i][1][masks[kb, i]][b] for i, b in enumerate(budgets)]
            best = (clustering, rb_sets, xs)

    if covered != expected:
        raise AssertionError(f"enumerated {covered} configurations, closed form gives {expected}")
    if best is None or not math.isfinite(best_e):
        raise InfeasibleInstanceError("no feasible configuration", dict(memo.status))
    clustering, rb_sets, xs = best
    powers = [memo.powers[(m, rbs, x)] for m, rbs, x in zip(clustering, rb_sets, xs)]
    return OracleResult(
        assignment=_build_assignment(config, clustering, rb_sets, xs, powers),
        energy=best_e,
        configurations=covered,
        subproblems=len(memo.energy),
        power_status=dict(memo.status),
    )


# ---------------------------------------------------------------------------
# grid search over powers


@dataclass(frozen=True)
class GridResult:
    powers: np.ndarray  # (K, M)
    objective: float  # sum of powers, W
    step: float  # largest grid spacing, W
    evaluated: int


def grid_power_oracle(cluster: ClusterProblem, points: int = 200, max_evaluations: int = 2 * 10**7) -> GridResult:
    """Minimum total power on a uniform grid over [0, P_max] with exact rates."""
    K, M = cluster.shape
    dim = K * M
    if dim > 4:
        raise InstanceTooLargeError(f"grid oracle supports at most 4 power variables, got {dim}")
    if points < 2:
        raise ValueError("need at least 2 grid points per dimension")
    if points**dim > max_evaluations:
        raise InstanceTooLargeError(f"{points}^{dim} grid points exceed {max_evaluations}")
    axes = [np.linspace(0.0, cluster.budgets[u], points) for u in range(K) for _ in range(M)]
    mesh = np.meshgrid(*axes, indexing="ij")
    p = np.stack([m.ravel() for m in mesh], axis=1).reshape(-1, K, M)
    received = cluster.gains[None] * p
    tail = np.cumsum(received[:, ::-1], axis=1)[:, ::-1]
    sinr = received / (cluster.noise + tail - received)
    rates = cluster.bandwidth * np.log2(1.0 + sinr).sum(axis=2)
    ok = np.all(rates >= cluster.min_rates, axis=1) & np.all(p.sum(axis=2) <= cluster.budgets * (1 + 1e-12), axis=1)
    step = float(np.max(cluster.budgets) / (points - 1))
    if not ok.any():
        best_rates = rates.max(axis=0)
        raise ClusterInfeasibleError(
            "no grid point meets the rate requirements",
            {f"C1[{u}]": float(cluster.min_rates[k] - best_rates[k]) for k, u in enumerate(cluster.users)},
        )
    total = np.where(ok, p.sum(axis=(1, 2)), math.inf)
    k = int(np.argmin(total))
    return GridResult(powers=p[k].copy(), objective=float(total[k]), step=step, evaluated=int(p.shape[0]))
