"""Greedy user clustering and computing / frequency RB allocation.

Three sequential phases: clustering by average gain, computing RBs
(deadline-feasibility first, then marginal rate-requirement relief), and
frequency RBs (rate-requirement satisfaction first, then marginal energy
relief). Transmit powers are left at the equal split of each user's budget
over its cluster's RBs; :mod:`noma_mec.power` replaces them afterwards.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .channel import ChannelMatrix
from .errors import ConfigError, InfeasibleComputingError
from .model import Assignment, SystemConfig, TaskSpec, cluster_rates, task_arrays


@dataclass
class ClusterLayout:
    members: np.ndarray  # (N, u_max) user index or -1
    unsatisfied: set = field(default_factory=set)  # I'
    cluster_rbs: list = field(default_factory=list)  # R^i

    @property
    def num_clusters(self) -> int:
        return self.members.shape[0]

    def users(self, cluster: int) -> list:
        """U^i in order-index order."""
        row = self.members[cluster]
        return [int(u) for u in row if u >= 0]

    def slots(self):
        """Occupied (cluster, order, user) triples, cluster-major."""
        for i in range(self.members.shape[0]):
            for j in range(self.members.shape[1]):
                if self.members[i, j] >= 0:
                    yield i, j, int(self.members[i, j])

    def cluster_order(self, num_users: int) -> list:
        out = [None] * num_users
        for i, j, u in self.slots():
            out[u] = (i, j)
        return out


def cluster_users(channels: ChannelMatrix, config: SystemConfig) -> ClusterLayout:
    U, N, umax = config.num_users, config.n_clusters, config.max_users_per_rb
    if N * umax < U:
        raise ConfigError(f"N*u_max >= U violated: {N}*{umax} < {U}")
    if not config.oma and N > U // 2:
        raise ConfigError(f"N <= floor(U/2) violated: N={N}, U={U}")
    # stable sort: equal averages keep user-index order
    ranked = np.argsort(-np.asarray(channels.averages), kind="stable")
    members = np.full((N, umax), -1, dtype=int)
    for pos, u in enumerate(ranked):
        j, i = divmod(pos, N)
        members[i, j] = u
    return ClusterLayout(members=members)


def _comp_time(workload, x, capacity):
    return workload / (x * capacity)


def allocate_computing_rbs(layout: ClusterLayout, tasks: Sequence[TaskSpec], config: SystemConfig) -> np.ndarray:
    """Computing RB counts per (cluster, order) slot."""
    C = config.comp_rb_capacity
    remaining = config.num_comp_rbs
    x = np.zeros(layout.members.shape, dtype=int)

    for i, j, u in layout.slots():
        t = tasks[u]
        while True:
            if remaining == 0:
                raise InfeasibleComputingError(
                    f"computing RBs exhausted before user {u} reaches Q < D", user=u)
            x[i, j] += 1
            remaining -= 1
            if _comp_time(t.workload, x[i, j], C) < t.deadline:
                break

    def relief(i, j, u):
        t = tasks[u]
        now = t.input_bits / (t.deadline - _comp_time(t.workload, x[i, j], C))
        nxt = t.input_bits / (t.deadline - _comp_time(t.workload, x[i, j] + 1, C))
        return now - nxt

    slots = list(layout.slots())
    while remaining > 0:
        best, q_hat = None, 0.0
        for i, j, u in slots:
            q = relief(i, j, u)
            if q >= q_hat:  # >=: the last slot scanned wins ties
                best, q_hat = (i, j), q
        if best is None:
            break
        x[best] += 1
        remaining -= 1
    return x


@dataclass
class FrequencyAllocation:
    freq_map: list
    powers: np.ndarray
    cluster_rbs: list
    unsatisfied: set
    shortfall: dict  # user -> (required rate, achieved rate)


def allocate_frequency_rbs(
    layout: ClusterLayout,
    comp_alloc: np.ndarray,
    channels: ChannelMatrix,
    tasks: Sequence[TaskSpec],
    config: SystemConfig,
    literal_power_update: bool = False,
) -> FrequencyAllocation:
    """Frequency RB map and the equal-split interim powers.

    With ``literal_power_update`` the per-step power update divides the
    current powers by ``|R^i| + 1`` (geometric decay) and candidate RBs are
    scored at current powers; otherwise every step re-splits the full budget
    over the cluster's RBs and candidates are scored at the re-split value.
    """
    U, M = config.num_users, config.num_freq_rbs
    B, noise = config.rb_bandwidth, config.noise_power
    g = channels.gains
    workload, bits, deadline, pmax = task_arrays(tasks)
    N = layout.num_clusters
    users = [layout.users(i) for i in range(N)]

    need = np.full(U, math.inf)
    for i, j, u in layout.slots():
        q = workload[u] / (comp_alloc[i, j] * config.comp_rb_capacity)
        if q < deadline[u]:
            need[u] = bits[u] / (deadline[u] - q)

    p = np.repeat(pmax[:, None], M, axis=1)
    rbs = [[] for _ in range(N)]
    freq_map = [None] * M

    def rates(i, rb_set, powers):
        if not rb_set or not users[i]:
            return np.zeros(len(users[i]))
        idx = np.ix_(users[i], rb_set)
        return cluster_rates(g[idx], powers[idx], noise, B)

    def update_powers(i):
        us = users[i]
        if literal_power_update:
            p[us, :] = p[us, :] / len(rbs[i])  # len already includes the new RB
        else:
            p[us, :] = (pmax[us] / len(rbs[i]))[:, None]

    unsatisfied = [i for i in range(N) if users[i]]
    r = 0
    while r < M and unsatisfied:
        scores = [rates(i, [r], p).sum() for i in unsatisfied]
        i_hat = unsatisfied[int(np.argmax(scores))]
        freq_map[r] = i_hat
        rbs[i_hat].append(r)
        update_powers(i_hat)
        if np.all(rates(i_hat, rbs[i_hat], p) >= need[users[i_hat]]):
            unsatisfied.remove(i_hat)
        r += 1

    for r in range(r, M):
        best, best_e = None, -math.inf
        for i in range(N):
            if not users[i]:
                continue
            us = users[i]
            cur = rates(i, rbs[i], p)
            trial = rbs[i] + [r]
            if literal_power_update:
                cand = rates(i, trial, p)
            else:
                pt = p.copy()
                pt[us, :] = (pmax[us] / len(trial))[:, None]
                cand = rates(i, trial, pt)
            with np.errstate(divide="ignore", invalid="ignore"):
                gain = np.where(cur > 0, bits[us] / cur, math.inf) - np.where(cand > 0, bits[us] / cand, math.inf)
            gain = np.nan_to_num(gain, nan=0.0)
            e = float(np.sum(gain * pmax[us]))
            # relief must be >= 0; ties keep the lower cluster index
            if e >= 0.0 and e > best_e:
                best, best_e = i, e
        if best is None:
            continue
        freq_map[r] = best
        rbs[best].append(r)
        update_powers(best)

    final = np.zeros((U, M))
    for i in range(N):
        if rbs[i]:
            final[np.ix_(users[i], rbs[i])] = p[np.ix_(users[i], rbs[i])]

    shortfall = {}
    for i in range(N):
        achieved = rates(i, rbs[i], final)
        for u, ru in zip(users[i], achieved):
            if not ru >= need[u]:
                shortfall[u] = (float(need[u]), float(ru))
    return FrequencyAllocation(
        freq_map=freq_map,
        powers=final,
        cluster_rbs=rbs,
        unsatisfied=set(unsatisfied),
        shortfall=shortfall,
    )


def run_heuristic(
    channels: ChannelMatrix,
    tasks: Sequence[TaskSpec],
    config: SystemConfig,
    literal_power_update: bool = False,
) -> Assignment:
    if len(tasks) != config.num_users:
        raise ValueError(f"{len(tasks)} tasks for {config.num_users} users")
    layout = cluster_users(channels, config)
    x = allocate_computing_rbs(layout, tasks, config)
    fa = allocate_frequency_rbs(layout, x, channels, tasks, config, literal_power_update)
    layout.unsatisfied = fa.unsatisfied
    layout.cluster_rbs = fa.cluster_rbs
    flags = {}
    if fa.shortfall:
        flags["rate_shortfall"] = fa.shortfall
    if fa.unsatisfied:
        flags["unsatisfied_clusters"] = sorted(fa.unsatisfied)
    unallocated = [r for r, i in enumerate(fa.freq_map) if i is None]
    if unallocated:
        flags["unallocated_rbs"] = unallocated
    return Assignment(
        cluster_order=layout.cluster_order(config.num_users),
        freq_map=fa.freq_map,
        comp_alloc=x,
        powers=fa.powers,
        flags=flags,
    )
