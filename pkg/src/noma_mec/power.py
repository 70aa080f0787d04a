"""Per-cluster transmit power minimisation in log-power variables.

With ``p = exp(S)`` and the high-SINR bound ``log2(1 + x) >= log2(x)``, the
per-RB rate of a cluster member becomes ``B/ln2 * (S + ln h - LSE)`` where
LSE is the log-sum-exp of noise and the received powers of later-decoded
members. The rate constraints are then convex in ``S`` and the problem is
solved by a log-barrier Newton method.

The solver works on the reduced form (the auxiliary per-RB rates ``Z`` and
per-user rates ``R`` eliminated, which is exact because C4 is an equality
and C3 is tight at the optimum) with the objective ``log sum exp(S)``
(same minimiser as ``sum exp(S)``, scale free) and the budget written as
``log sum_r exp(S_u^r) <= log P_max``. Everything is vectorised over a
leading batch axis so that many small clusters of the same shape can be
solved at once (the oracle relies on this).
"""
from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .errors import (
    ClusterInfeasibleError,
    ConsistencyError,
    InfeasibleDeadlineError,
    NonConvergenceError,
)
from .model import Assignment, SystemConfig, TaskSpec, cluster_rates

LN2 = math.log(2.0)
PHASE1_NEWTON_TOL = 1e-8


@dataclass(frozen=True)
class ClusterProblem:
    users: tuple  # user ids, decoding order
    rbs: tuple
    gains: np.ndarray  # (K, M)
    min_rates: np.ndarray  # (K,) bits/s
    budgets: np.ndarray  # (K,) W
    noise: float  # W per RB
    bandwidth: float  # Hz

    def __post_init__(self):
        g = np.asarray(self.gains, dtype=float)
        if g.ndim != 2 or g.shape[0] < 1:
            raise ValueError("a cluster needs at least one member")
        if not np.all(g > 0):
            raise ValueError("cluster gains must be > 0")
        rmin = np.asarray(self.min_rates, dtype=float)
        if rmin.shape != (g.shape[0],) or np.asarray(self.budgets).shape != (g.shape[0],):
            raise ValueError("min_rates / budgets must have one entry per member")
        bad = [u for u, r in zip(self.users, rmin) if not (math.isfinite(r) and r > 0)]
        if bad:
            raise InfeasibleDeadlineError(f"users {bad} have no time left for transmission", user=bad[0])
        object.__setattr__(self, "gains", g)
        object.__setattr__(self, "min_rates", rmin)
        object.__setattr__(self, "budgets", np.asarray(self.budgets, dtype=float))

    @property
    def shape(self):
        return self.gains.shape

    def key(self):
        """Hashable canonical form (for memoisation)."""
        return (self.gains.shape, self.gains.tobytes(), self.min_rates.tobytes(),
                self.budgets.tobytes(), self.noise, self.bandwidth)


def cluster_problem(assignment: Assignment, cluster: int, channels, tasks: Sequence[TaskSpec],
                    config: SystemConfig) -> ClusterProblem:
    users = assignment.members(cluster)
    rbs = assignment.cluster_rbs(cluster)
    rmin = []
    for u in users:
        t = tasks[u]
        x = int(assignment.comp_alloc[assignment.cluster_order[u]])
        q = t.workload / (x * config.comp_rb_capacity) if x > 0 else math.inf
        if not q < t.deadline:
            raise InfeasibleDeadlineError(f"user {u}: Q = {q} >= D = {t.deadline}", user=u)
        rmin.append(t.input_bits / (t.deadline - q))
    return ClusterProblem(
        users=tuple(users),
        rbs=tuple(rbs),
        gains=channels.gains[np.ix_(users, rbs)],
        min_rates=np.array(rmin),
        budgets=np.array([tasks[u].power_budget for u in users]),
        noise=config.noise_power,
        bandwidth=config.rb_bandwidth,
    )


# ---------------------------------------------------------------------------
# convex program description (the P3 form, variables S, Z, R)


@dataclass(frozen=True)
class ConvexProgram:
    """P3 for one cluster, high-SINR form.

    Variables: ``S`` (K, M) log-watts, ``Z`` (K, M) bits/s, ``R`` (K,) bits/s.
    ``inequalities`` returns values that must be <= 0, ``equalities`` values
    that must be == 0.
    """

    cluster: ClusterProblem
    constraint_names: tuple

    @property
    def num_constraints(self) -> int:
        return len(self.constraint_names)

    def objective(self, S) -> float:
        return float(np.exp(S).sum())

    def rate_bound(self, S) -> np.ndarray:
        """High-SINR per-RB rate ``B log2(SINR)`` (K, M)."""
        c = self.cluster
        return c.bandwidth / LN2 * _log_sinr(np.log(c.gains), np.asarray(S, float), math.log(c.noise))

    def inequalities(self, S, Z, R) -> np.ndarray:
        c = self.cluster
        S, Z, R = (np.asarray(v, dtype=float) for v in (S, Z, R))
        c1 = c.min_rates - R
        c2 = np.exp(S).sum(axis=1) - c.budgets
        # Z ln2/B + log(sigma^2/h e^-S + sum_{k>u} h_k/h_u e^{S_k - S_u}) <= 0
        c3 = Z * LN2 / c.bandwidth - _log_sinr(np.log(c.gains), S, math.log(c.noise))
        return np.concatenate([c1, c2, c3.ravel()])

    def equalities(self, S, Z, R) -> np.ndarray:
        return np.asarray(R, float) - np.asarray(Z, float).sum(axis=1)

    def feasible(self, S, Z, R, tol: float = 1e-8) -> bool:
        c = self.cluster
        scale = np.concatenate([c.min_rates, c.budgets, np.full(c.gains.size, 1.0)])
        ineq = self.inequalities(S, Z, R) / scale
        eq = self.equalities(S, Z, R) / c.min_rates
        return bool(np.all(ineq <= tol) and np.all(np.abs(eq) <= tol))


def build_convex_problem(cluster: ClusterProblem) -> ConvexProgram:
    K, M = cluster.shape
    names = (
        [f"C1[{u}]" for u in cluster.users]
        + [f"C2[{u}]" for u in cluster.users]
        + [f"C3[{u},{r}]" for u in cluster.users for r in cluster.rbs]
        + [f"C4[{u}]" for u in cluster.users]
    )
    return ConvexProgram(cluster=cluster, constraint_names=tuple(names))


def powers_to_log(p):
    return np.log(np.asarray(p, dtype=float))


def log_to_powers(S):
    return np.exp(np.asarray(S, dtype=float))


def _log_sinr(a, s, lns):
    """High-SINR log SINR per (user, RB): y_u - log(sigma^2 + sum_{k>u} e^{y_k})."""
    return a + s - _interference_lse(a + s, lns)


def _interference_lse(y, lns):
    """log(sigma^2 + sum_{k>u} exp(y_k)) along the member axis (-2)."""
    y = np.asarray(y, dtype=float)
    K = y.shape[-2]
    out = np.empty_like(y)
    lns = np.asarray(lns, dtype=float)
    base = np.broadcast_to(lns[..., None] if lns.ndim else lns, y[..., 0, :].shape)
    running = np.full(y[..., 0, :].shape, -np.inf)
    out[..., K - 1, :] = base
    for u in range(K - 2, -1, -1):
        running = np.logaddexp(running, y[..., u + 1, :])
        out[..., u, :] = np.logaddexp(base, running)
    return out


# ---------------------------------------------------------------------------
# batched barrier solver


@dataclass(frozen=True)
class SolverOptions:
    tol_kkt: float = 1e-6
    tol_feas: float = 1e-8
    tol_gap: float = 1e-7  # duality gap of the log-objective, i.e. relative
    mu: float = 20.0
    max_outer: int = 500
    max_inner: int = 100
    newton_tol: float = 1e-14
    init_shrink: float = 0.5
    trace: bool = False


@dataclass
class LogDomainSolution:
    S: np.ndarray
    Z: np.ndarray
    R: np.ndarray
    powers: np.ndarray
    objective: float
    iterations: int
    outer_iterations: int
    kkt_residual: float
    gap: float
    trace: list = field(default_factory=list)  # (newton iteration, objective W, kkt residual)


class _Batch:
    """Problem data of B clusters sharing one (K, M) shape."""

    def __init__(self, clusters: Sequence[ClusterProblem]):
        K, M = clusters[0].shape
        self.K, self.M, self.n = K, M, K * M
        # log SNR gains: log(h / sigma^2); keeps the constraint arithmetic O(10)
        self.a = np.stack([np.log(c.gains) - math.log(c.noise) for c in clusters])
        self.c = np.stack([c.min_rates * LN2 / c.bandwidth for c in clusters])
        self.lnp = np.stack([np.log(c.budgets) for c in clusters])
        self.upper = np.triu(np.ones((K, K), dtype=bool), k=1)  # [u, k]: k > u

    def take(self, idx):
        sub = object.__new__(_Batch)
        sub.__dict__.update(self.__dict__)
        sub.a, sub.c, sub.lnp = self.a[idx], self.c[idx], self.lnp[idx]
        return sub

    # constraint values f (b, 2K), all < 0 means strictly feasible
    def values(self, s):
        y = self.a + s
        L = _interference_lse(y, 0.0)
        fr = self.c - (y - L).sum(axis=-1)
        fb = _lse(s, axis=-1) - self.lnp
        return np.concatenate([fr, fb], axis=1), L

    def derivs(self, s):
        """f, gradients G (b, 2K, n) and the pieces needed for sum theta_i hess f_i."""
        b, K, M = s.shape
        f, L = self.values(s)
        y = self.a + s
        W = np.exp(y[:, None, :, :] - L[:, :, None, :]) * self.upper[None, :, :, None]  # (b,u,k,r)
        q = np.exp(s - _lse(s, axis=-1)[..., None])  # (b,u,r)
        eyeK = np.eye(K)
        Gr = W - eyeK[None, :, :, None]
        Gb = eyeK[None, :, :, None] * q[:, None, :, :]
        G = np.concatenate([Gr, Gb], axis=1).reshape(b, 2 * K, K * M)
        return f, G, W, q

    def weighted_hessian(self, theta, W, q):
        """sum_i theta_i hess f_i, (b, n, n)."""
        b = theta.shape[0]
        K, M, n = self.K, self.M, self.n
        tr, tb = theta[:, :K], theta[:, K:]
        # rate part couples (k, r) with (l, r): block diagonal over RBs
        Wr = W.transpose(0, 3, 2, 1)  # (b, r, k, u)
        A = np.matmul(Wr * tr[:, None, None, :], Wr.transpose(0, 1, 3, 2))  # (b, r, k, l)
        # budget part couples (u, r) with (u, s): block diagonal over users
        qt = q * np.sqrt(np.maximum(tb, 0.0))[:, :, None]
        C = qt[:, :, :, None] * qt[:, :, None, :]  # (b, u, r, s)
        H5 = np.zeros((b, K, M, K, M))
        ar_m, ar_k = np.arange(M), np.arange(K)
        H5[:, :, ar_m, :, ar_m] = -A.transpose(1, 0, 2, 3)
        H5[:, ar_k, :, ar_k, :] -= C.transpose(1, 0, 2, 3)
        H = H5.reshape(b, n, n)
        diag = np.einsum("bu,bukr->bkr", tr, W) + tb[:, :, None] * q
        ar = np.arange(n)
        H[:, ar, ar] += diag.reshape(b, n)
        return H


def _lse(x, axis):
    m = np.max(x, axis=axis, keepdims=True)
    m = np.where(np.isfinite(m), m, 0.0)
    return np.squeeze(m, axis=axis) + np.log(np.sum(np.exp(x - m), axis=axis))


def _solve_spd(H, g):
    n = H.shape[-1]
    scale = np.abs(np.einsum("bii->bi", H)).max(axis=1, keepdims=True)
    Hr = H + (1e-14 * np.maximum(scale, 1e-300))[:, :, None] * np.eye(n)
    try:
        return np.linalg.solve(Hr, g[..., None])[..., 0]
    except np.linalg.LinAlgError:
        return np.stack([np.linalg.lstsq(Hi, gi, rcond=None)[0] for Hi, gi in zip(Hr, g)])


def _phase1(batch: _Batch, s0, opts: SolverOptions):
    """Minimise tau s.t. f_i(s) <= tau; stop once tau < 0.

    Returns (s, feasible mask, f at the last iterate).
    """
    B = s0.shape[0]
    K, n = batch.K, batch.n
    m = 2 * K
    f0, _ = batch.values(s0)
    x = np.concatenate([s0.reshape(B, n), (f0.max(axis=1) + 1.0)[:, None]], axis=1)
    t = np.ones(B)
    active = np.ones(B, dtype=bool)
    feasible = np.zeros(B, dtype=bool)
    inner = np.zeros(B, dtype=int)
    outer = np.zeros(B, dtype=int)
    last_f = f0.copy()

    def phi(xs, tt, bt):
        f, _ = bt.values(xs[:, :n].reshape(-1, K, bt.M))
        slack = xs[:, n:] - f
        with np.errstate(invalid="ignore", divide="ignore"):
            val = tt * xs[:, n] - np.log(slack).sum(axis=1)
        return np.where(np.all(slack > 0, axis=1), val, np.inf), f

    while active.any():
        idx = np.flatnonzero(active)
        bt = batch.take(idx)
        xs = x[idx]
        s = xs[:, :n].reshape(-1, K, batch.M)
        f, G, W, q = bt.derivs(s)
        tau = xs[:, n]
        last_f[idx] = f
        done_now = (tau < 0) & np.all(f < 0, axis=1)
        d = 1.0 / (tau[:, None] - f)
        gs = np.einsum("bi,bin->bn", d, G)
        gt = t[idx] - d.sum(axis=1)
        grad = np.concatenate([gs, gt[:, None]], axis=1)
        Ge = np.concatenate([G, -np.ones((len(idx), m, 1))], axis=2)
        H = np.einsum("bi,bin,bim->bnm", d * d, Ge, Ge)
        H[:, :n, :n] += bt.weighted_hessian(d, W, q)
        dx = _solve_spd(H, -grad)
        lam2 = -np.einsum("bn,bn->b", grad, dx)
        centred = lam2 / 2 <= PHASE1_NEWTON_TOL
        for loc in np.flatnonzero(done_now):
            feasible[idx[loc]] = True
            active[idx[loc]] = False
        step_mask = ~done_now & ~centred & (inner[idx] < opts.max_inner)
        cen_mask = ~done_now & ~step_mask
        for loc in np.flatnonzero(cen_mask):
            j = idx[loc]
            outer[j] += 1
            inner[j] = 0
            tau_lb = tau[loc] - m / t[j]
            if tau_lb > 0 or m / t[j] < opts.tol_gap or outer[j] >= opts.max_outer:
                active[j] = False  # certified (or numerically) infeasible
            else:
                t[j] *= opts.mu
        if step_mask.any():
            loc = np.flatnonzero(step_mask)
            j = idx[loc]
            bs = bt.take(loc)
            x[j], moved = _line_search(lambda z: phi(z, t[j], bs)[0], xs[loc], dx[loc], grad[loc])
            inner[j] = np.where(moved, inner[j] + 1, opts.max_inner)
    return x[:, :n].reshape(B, K, batch.M), feasible, last_f


def _line_search(phi, x, dx, grad, alpha=0.25, beta=0.5, max_halvings=80, quadratic_region=0.1):
    """Backtracking; inside the quadratic-convergence region (squared Newton
    decrement below ``quadratic_region``) any strictly feasible step is taken,
    because the sufficient-decrease test is swamped by round-off there."""
    base = phi(x)
    slope = np.einsum("bn,bn->b", grad, dx)
    near = -slope < quadratic_region
    step = np.ones(x.shape[0])
    accepted = np.zeros(x.shape[0], dtype=bool)
    out = x.copy()
    for _ in range(max_halvings):
        todo = np.flatnonzero(~accepted)
        if todo.size == 0:
            break
        cand = x + step[:, None] * dx
        val = phi(cand)
        ok = np.isfinite(val) & ((val <= base + alpha * step * slope) | near)
        newly = ok & ~accepted
        out[newly] = cand[newly]
        accepted |= ok
        step = np.where(accepted, step, step * beta)
    return out, accepted


def _phase2(batch: _Batch, s0, opts: SolverOptions):
    B = s0.shape[0]
    K, M, n = batch.K, batch.M, batch.n
    m = 2 * K
    x = s0.reshape(B, n).copy()
    t = np.full(B, float(m))
    active = np.ones(B, dtype=bool)
    inner = np.zeros(B, dtype=int)
    outer = np.zeros(B, dtype=int)
    newton = np.zeros(B, dtype=int)
    kkt = np.full(B, np.inf)
    converged = np.zeros(B, dtype=bool)
    traces = [[] for _ in range(B)]

    def phi(xs, tt, bt):
        s = xs.reshape(-1, K, M)
        f, _ = bt.values(s)
        with np.errstate(invalid="ignore", divide="ignore"):
            val = tt * _lse(xs, axis=1) - np.log(-f).sum(axis=1)
        return np.where(np.all(f < 0, axis=1), val, np.inf)

    while active.any():
        idx = np.flatnonzero(active)
        bt = batch.take(idx)
        xs = x[idx]
        f, G, W, q = bt.derivs(xs.reshape(-1, K, M))
        d = -1.0 / f
        pi = np.exp(xs - _lse(xs, axis=1)[:, None])
        tt = t[idx]
        grad = tt[:, None] * pi + np.einsum("bi,bin->bn", d, G)
        H = tt[:, None, None] * (np.einsum("bn,nm->bnm", pi, np.eye(n)) - np.einsum("bn,bm->bnm", pi, pi))
        H += np.einsum("bi,bin,bim->bnm", d * d, G, G)
        H += bt.weighted_hessian(d, W, q)
        dx = _solve_spd(H, -grad)
        lam2 = -np.einsum("bn,bn->b", grad, dx)
        stat = np.max(np.abs(grad), axis=1) / tt
        centred = (stat <= 0.25 * opts.tol_kkt) | (lam2 / 2 <= opts.newton_tol) | (inner[idx] >= opts.max_inner)
        for loc in np.flatnonzero(centred):
            j = idx[loc]
            outer[j] += 1
            inner[j] = 0
            kkt[j] = max(stat[loc], m / tt[loc])
            if opts.trace:
                traces[j].append((int(newton[j]), float(np.exp(_lse(xs[loc], axis=0))), float(kkt[j])))
            if m / tt[loc] <= opts.tol_gap:
                active[j] = False
                converged[j] = kkt[j] <= opts.tol_kkt
            elif outer[j] >= opts.max_outer:
                active[j] = False
            else:
                t[j] *= opts.mu
        step = np.flatnonzero(~centred)
        if step.size:
            j = idx[step]
            bs = bt.take(step)
            x[j], moved = _line_search(lambda z: phi(z, t[j], bs), xs[step], dx[step], grad[step])
            # a rejected step means round-off dominates: treat the point as centred
            inner[j] = np.where(moved, inner[j] + 1, opts.max_inner)
            newton[j] += 1
    return x.reshape(B, K, M), dict(t=t, outer=outer, newton=newton, kkt=kkt, converged=converged,
                                    traces=traces, gap=2 * K / t)


def _initial_point(clusters, batch: _Batch, opts, initial_powers=None):
    if initial_powers is not None:
        p = np.stack([np.asarray(ip, float) for ip in initial_powers])
        # shrink uniformly where the budget is (nearly) tight
        tight = p.sum(axis=-1) >= np.exp(batch.lnp) * (1 - 1e-9)
        p = np.where(tight[..., None], p * opts.init_shrink, p)
        return np.log(p)
    return np.broadcast_to(
        (batch.lnp + math.log(opts.init_shrink) - math.log(batch.M))[..., None],
        batch.a.shape,
    ).copy()


def _solve_batch(clusters, opts, initial_powers=None):
    batch = _Batch(clusters)
    B = len(clusters)
    s0 = _initial_point(clusters, batch, opts, initial_powers)
    f0, _ = batch.values(s0)
    results = [None] * B
    # Exact screen: with no interference, the best approximate rate under the
    # budget is at the equal split. Failing it rules out every power vector.
    best = (batch.a + (batch.lnp - math.log(batch.M))[..., None]).sum(axis=-1)
    short = batch.c - best  # >= 0: no strictly feasible point
    for j in np.flatnonzero(np.any(short >= 0, axis=1)):
        cert = {"max_violation": float(short[j].max())}
        cert.update({f"C1[{u}]": float(v) for u, v in zip(clusters[j].users, short[j])})
        results[j] = ClusterInfeasibleError(
            f"cluster {clusters[j].users}: rate requirement above the interference-free maximum", cert)
    screened = np.array([r is not None for r in results])
    need = np.flatnonzero(~np.all(f0 < 0, axis=1) & ~screened)
    if need.size:
        s1, feas, last_f = _phase1(batch.take(need), s0[need], opts)
        for k, j in enumerate(need):
            if feas[k]:
                s0[j] = s1[k]
            else:
                names = [f"C1[{u}]" for u in clusters[j].users] + [f"C2[{u}]" for u in clusters[j].users]
                cert = {"max_violation": float(last_f[k].max())}
                cert.update({nm: float(v) for nm, v in zip(names, last_f[k])})
                results[j] = ClusterInfeasibleError(
                    f"cluster {clusters[j].users} has no strictly feasible power vector", cert)
    ok = [j for j in range(B) if results[j] is None]
    if not ok:
        return results
    sub = batch.take(np.array(ok))
    s, info = _phase2(sub, s0[ok], opts)
    f, L = sub.values(s)
    for k, j in enumerate(ok):
        c = clusters[j]
        S = s[k]
        Z = c.bandwidth / LN2 * (sub.a[k] + S - L[k])
        sol = LogDomainSolution(
            S=S,
            Z=Z,
            R=Z.sum(axis=1),
            powers=np.exp(S),
            objective=float(np.exp(S).sum()),
            iterations=int(info["newton"][k]),
            outer_iterations=int(info["outer"][k]),
            kkt_residual=float(info["kkt"][k]),
            gap=float(info["gap"][k]),
            trace=info["traces"][k],
        )
        if not info["converged"][k] or np.any(f[k] > opts.tol_feas):
            results[j] = NonConvergenceError(
                f"cluster {c.users}: no convergence (kkt={sol.kkt_residual:.3g})",
                last_iterate=sol, diagnostics={"kkt": sol.kkt_residual, "outer": sol.outer_iterations})
        else:
            results[j] = sol
    return results


def solve_clusters(clusters: Sequence[ClusterProblem], options: Optional[SolverOptions] = None,
                   initial_powers=None) -> list:
    """Solve many clusters; returns a list of solutions or exception instances."""
    opts = options or SolverOptions()
    out = [None] * len(clusters)
    groups = {}
    for k, c in enumerate(clusters):
        groups.setdefault(c.shape, []).append(k)
    for shape in sorted(groups):
        ks = groups[shape]
        init = None if initial_powers is None else [initial_powers[k] for k in ks]
        for k, res in zip(ks, _solve_batch([clusters[k] for k in ks], opts, init)):
            out[k] = res
    return out


def solve_cluster(cluster: ClusterProblem, options: Optional[SolverOptions] = None,
                  initial_powers=None) -> LogDomainSolution:
    init = None if initial_powers is None else [initial_powers]
    (res,) = _solve_batch([cluster], options or SolverOptions(), init)
    if isinstance(res, Exception):
        raise res
    return res


def trace_to_csv(solution: LogDomainSolution) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["iteration", "objective", "kkt_residual"])
    for it, obj, kkt in solution.trace:
        w.writerow([it, repr(obj), repr(kkt)])
    return buf.getvalue()


@dataclass(frozen=True)
class ExactCheck:
    exact_rates: np.ndarray
    approx_rates: np.ndarray
    margins: np.ndarray  # (R_exact - R_min) / R_min

    @property
    def feasible(self) -> bool:
        return bool(np.all(self.margins >= 0))


def verify_exact(cluster: ClusterProblem, powers) -> ExactCheck:
    p = np.asarray(powers, dtype=float)
    exact = cluster_rates(cluster.gains, p, cluster.noise, cluster.bandwidth)
    with np.errstate(divide="ignore"):
        approx = (cluster.bandwidth / LN2 * _log_sinr(np.log(cluster.gains), np.log(p),
                                                        math.log(cluster.noise))).sum(axis=1)
    margins = (exact - cluster.min_rates) / cluster.min_rates
    if np.any(margins < 0) and np.all(approx >= cluster.min_rates):
        raise ConsistencyError(f"cluster {cluster.users}: approximation-feasible powers violate exact rates")
    check = ExactCheck(exact_rates=exact, approx_rates=approx, margins=margins)
    if not check.feasible:
        raise ConsistencyError(f"cluster {cluster.users}: negative exact rate margin {margins.min():.3g}")
    return check


def solve_all(assignment: Assignment, channels, tasks: Sequence[TaskSpec], config: SystemConfig,
              options: Optional[SolverOptions] = None) -> Assignment:
    """Replace equal-split powers cluster by cluster.

    ``flags["power_control"][i]`` is one of ``solved``, ``infeasible``,
    ``no_rbs``, ``deadline`` or ``nonconverged``; unsolved clusters keep the
    incoming powers. Clusters are independent; they are batched by shape and
    the result does not depend on the batch composition.
    """
    out = assignment.copy()
    status = {}
    problems = {}
    for i in range(config.n_clusters):
        if not assignment.members(i):
            continue
        if not assignment.cluster_rbs(i):
            status[i] = "no_rbs"
            continue
        try:
            problems[i] = cluster_problem(assignment, i, channels, tasks, config)
        except InfeasibleDeadlineError:
            status[i] = "deadline"
    order = sorted(problems)
    results = solve_clusters([problems[i] for i in order], options)
    for i, res in zip(order, results):
        prob = problems[i]
        if isinstance(res, ClusterInfeasibleError):
            status[i] = "infeasible"
            continue
        if isinstance(res, NonConvergenceError):
            status[i] = "nonconverged"
            continue
        verify_exact(prob, res.powers)
        out.powers[list(prob.users), :] = 0.0
        out.powers[np.ix_(prob.users, prob.rbs)] = res.powers
        status[i] = "solved"
    out.flags["power_control"] = {i: status[i] for i in sorted(status)}
    return out


def power_control_ok(assignment: Assignment) -> bool:
    status = assignment.flags.get("power_control")
    return bool(status) and all(v == "solved" for v in status.values())
