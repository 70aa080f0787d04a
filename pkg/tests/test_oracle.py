import math

import numpy as np
import pytest

from noma_mec.channel import ChannelMatrix, channel_gains, generate_scenario
from noma_mec.errors import ClusterInfeasibleError, InfeasibleInstanceError, InstanceTooLargeError
from noma_mec.experiments import generate_tasks
from noma_mec.heuristic import run_heuristic
from noma_mec.model import SystemConfig, TaskSpec, audit_constraints, evaluate
from noma_mec.oracle import (
    TinyInstanceLimit,
    clusterings,
    configuration_count,
    enumerate_optimal,
    grid_power_oracle,
    min_comp_rbs,
    size_compositions,
)
from noma_mec.power import ClusterProblem, power_control_ok, solve_all

B = 180e3
NOISE = 10 ** ((-173 - 30) / 10) * B


def tiny(U=4, M=2, Mc=8, umax=2, seed=0):
    cfg = SystemConfig(num_users=U, num_freq_rbs=M, num_comp_rbs=Mc, max_users_per_rb=umax)
    return cfg, channel_gains(generate_scenario(cfg, seed), cfg, seed), generate_tasks(U, seed)


def test_two_users_one_rb_space():
    cfg = SystemConfig(num_users=2, num_freq_rbs=1, num_comp_rbs=2, max_users_per_rb=2)
    assert [c for c in clusterings(cfg)] == [((0, 1),), ((1, 0),)]
    tasks = [TaskSpec(0.5e9, 5000, 0.45)] * 2
    # 2 orderings x 2 RB maps x one x vector
    assert configuration_count(cfg, tasks) == 4
    ch = ChannelMatrix.from_gains([[4e-10], [1e-10]])
    res = enumerate_optimal(ch, tasks, cfg)
    assert res.configurations == 4
    assert res.assignment.freq_map == [0]


@pytest.mark.parametrize("U, umax, N, sizes", [(4, 2, 2, [(2, 2)]), (5, 3, 2, [(2, 3), (3, 2)]),
                                               (6, 3, 2, [(3, 3)]), (4, 3, 2, [(2, 2)])])
def test_size_compositions(U, umax, N, sizes):
    cfg = SystemConfig(num_users=U, max_users_per_rb=umax)
    assert cfg.n_clusters == N
    assert size_compositions(cfg) == sizes


def test_min_comp_rbs():
    assert min_comp_rbs(TaskSpec(1.0, 5000, 1.0), 1e9) == 1
    assert min_comp_rbs(TaskSpec(1e9, 5000, 0.4), 1e9) == 3
    # lambda / (x C) == D exactly is not enough
    assert min_comp_rbs(TaskSpec(1e9, 5000, 0.5), 1e9) == 3


@pytest.mark.parametrize("seed", [0, 1, 2])
def test_naive_matches_decomposed(seed):
    cfg, ch, tasks = tiny(U=4, M=2, Mc=6, seed=seed)
    try:
        fast = enumerate_optimal(ch, tasks, cfg)
    except InfeasibleInstanceError:
        with pytest.raises(InfeasibleInstanceError):
            enumerate_optimal(ch, tasks, cfg, method="naive")
        return
    slow = enumerate_optimal(ch, tasks, cfg, method="naive")
    assert slow.configurations == fast.configurations == configuration_count(cfg, tasks)
    assert slow.energy == fast.energy


def test_optimum_is_admissible_and_matches_evaluation():
    for seed in range(10):
        cfg, ch, tasks = tiny(U=4, M=3, Mc=8, seed=seed)
        try:
            res = enumerate_optimal(ch, tasks, cfg)
        except InfeasibleInstanceError:
            continue
        audit = audit_constraints(res.assignment, ch, tasks, cfg)
        assert all(c.passed for c in audit.values()), {k: v.violations for k, v in audit.items() if not v.passed}
        assert evaluate(res.assignment, ch, tasks, cfg).total_energy == pytest.approx(res.energy, rel=1e-12)
        return
    pytest.fail("no feasible tiny instance among 10 draws")


@pytest.mark.parametrize("seed", range(6))
def test_oracle_dominates_heuristic(seed):
    cfg, ch, tasks = tiny(U=4, M=3, Mc=8, umax=2, seed=seed)
    final = solve_all(run_heuristic(ch, tasks, cfg), ch, tasks, cfg)
    rep = evaluate(final, ch, tasks, cfg)
    h = rep.total_energy if (rep.feasible and power_control_ok(final)) else math.inf
    try:
        o = enumerate_optimal(ch, tasks, cfg).energy
    except InfeasibleInstanceError:
        assert h == math.inf
        return
    assert o <= h * (1 + 1e-9)


def test_symmetric_users_give_same_energy():
    g = np.array([[3e-10, 1e-10], [1e-10, 2e-10], [3e-10, 1e-10], [1e-10, 2e-10]])
    cfg = SystemConfig(num_users=4, num_freq_rbs=2, num_comp_rbs=6, max_users_per_rb=2)
    tasks = [TaskSpec(0.5e9, 5000, 0.45)] * 4
    a = enumerate_optimal(ChannelMatrix.from_gains(g), tasks, cfg).energy
    b = enumerate_optimal(ChannelMatrix.from_gains(g[[2, 3, 0, 1]]), tasks, cfg).energy
    assert a == pytest.approx(b, rel=1e-9)


def test_computing_infeasible_instance():
    cfg = SystemConfig(num_users=2, num_freq_rbs=1, num_comp_rbs=2, comp_rb_capacity=1e9, max_users_per_rb=2)
    with pytest.raises(InfeasibleInstanceError):
        enumerate_optimal(ChannelMatrix.from_gains([[1e-10], [1e-10]]), [TaskSpec(1e9, 5000, 0.4)] * 2, cfg)


@pytest.mark.parametrize("kwargs", [dict(U=7, M=2, Mc=8, umax=3), dict(U=4, M=5, Mc=8), dict(U=4, M=2, Mc=9)])
def test_too_large_rejected(kwargs):
    cfg, ch, tasks = tiny(**kwargs)
    with pytest.raises(InstanceTooLargeError):
        enumerate_optimal(ch, tasks, cfg)


def test_configuration_cap():
    cfg, ch, tasks = tiny(U=4, M=2, Mc=8)
    with pytest.raises(InstanceTooLargeError):
        enumerate_optimal(ch, tasks, cfg, limit=TinyInstanceLimit(max_configurations=10))


def one_user(h, rate):
    return ClusterProblem((0,), (0,), np.array([[h]]), np.array([rate]), np.ones(1), NOISE, B)


@pytest.mark.parametrize("h, rate", [(1e-10, 2e6), (1e-12, 1e6), (4e-11, 2.5e6)])
def test_grid_single_user_within_one_step(h, rate):
    # exact inversion: p = sigma^2 (2^(R/B) - 1) / h
    exact = NOISE * (2 ** (rate / B) - 1) / h
    res = grid_power_oracle(one_user(h, rate), points=2001)
    assert exact <= res.objective <= exact + res.step


def test_grid_infeasible_certificate():
    with pytest.raises(ClusterInfeasibleError) as err:
        grid_power_oracle(one_user(1e-14, 5e6))
    assert err.value.certificate["C1[0]"] > 0


@pytest.mark.parametrize("n", [11, 26, 51])
def test_grid_refinement_never_increases(n):
    # 2n - 1 points contain the n-point grid
    c = ClusterProblem((0, 1), (0,), np.array([[4e-10], [1e-10]]), np.array([0.5e6, 0.4e6]), np.ones(2), NOISE, B)
    coarse = grid_power_oracle(c, points=n)
    fine = grid_power_oracle(c, points=2 * n - 1)
    assert fine.objective <= coarse.objective


def test_grid_dimension_limit():
    c = ClusterProblem((0, 1), (0, 1, 2), np.full((2, 3), 1e-10), np.array([1e5, 1e5]), np.ones(2), NOISE, B)
    with pytest.raises(InstanceTooLargeError):
        grid_power_oracle(c)
    c4 = ClusterProblem((0, 1), (0, 1), np.full((2, 2), 1e-10), np.array([1e5, 1e5]), np.ones(2), NOISE, B)
    with pytest.raises(InstanceTooLargeError):
        grid_power_oracle(c4, points=200)
