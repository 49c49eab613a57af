"""Numerical checks of the structural identities and convergence behavior.

Each check builds its own random instances from a seed, evaluates an identity
or inequality exactly (closed-form QP oracles) and returns a
:class:`CheckResult`.  :func:`run_theory_suite` runs the identity checks; the
two rate experiments run ASAL on many seeds and fit the decay of the mean
squared feasibility error.
"""
from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field
from typing import Callable, Dict, List

import numpy as np

from .adaptive import SamplerConfig, ToleranceSchedule, tolerance_condition_oracle
from .auglag import auglag_gradient, auglag_value, reduced_gradient
from .core import NumericalError
from .problems.qp import ExactQP, random_box_qp, random_qp
from .projections import project_capped_box, project_slab
from .solver import SolverConfig, run_asal

log = logging.getLogger(__name__)


@dataclass
class CheckResult:
    name: str
    passed: bool
    statistic: float
    threshold: float
    runtime_s: float
    detail: Dict = field(default_factory=dict)

    def line(self) -> str:
        verdict = "PASS" if self.passed else "FAIL"
        return (f"{verdict} {self.name}: statistic={self.statistic:.3e} threshold={self.threshold:.3e} "
                f"({self.runtime_s:.2f}s)")


def _timed(fn: Callable[[], tuple], name: str, threshold: float) -> CheckResult:
    start = time.perf_counter()
    passed, stat, detail = fn()
    return CheckResult(name, bool(passed), float(stat), float(threshold), time.perf_counter() - start, detail)


def _instances(rng, count, n_max=10, m_max=5):
    for _ in range(count):
        n = int(rng.integers(2, n_max + 1))
        m = int(rng.integers(1, min(m_max, n) + 1))
        yield random_qp(rng, n, m)


# -- envelope and dual identities ----------------------------------------------

def moreau_identity_check(n_instances: int = 100, seed: int = 0, tol: float = 1e-8) -> CheckResult:
    """``grad q_alpha(lam)`` from the dual-side prox equals ``c(x*(lam))`` from the primal solve."""
    def run():
        rng = np.random.default_rng(seed)
        worst = 0.0
        for qp in _instances(rng, n_instances):
            lam = rng.standard_normal(qp.m) * 3
            alpha = float(10 ** rng.uniform(-2, 2))
            primal = qp.constraint(qp.subproblem_minimizer(lam, alpha))
            worst = max(worst, float(np.linalg.norm(qp.moreau_gradient(lam, alpha) - primal)))
        return worst <= tol, worst, {"instances": n_instances}
    return _timed(run, "moreau_identity", tol)


def envelope_lipschitz_check(n_pairs: int = 10_000, seed: int = 1, slack: float = 1e-6) -> CheckResult:
    """``||grad q_a(u) - grad q_a(v)|| <= (1 + slack) ||u - v|| / alpha``; statistic is the worst ratio."""
    def run():
        rng = np.random.default_rng(seed)
        per = 100
        worst = 0.0
        for qp in _instances(rng, max(1, n_pairs // per)):
            alpha = float(10 ** rng.uniform(-2, 2))
            for _ in range(per):
                u, v = rng.standard_normal((2, qp.m)) * 5
                d = np.linalg.norm(u - v)
                if d == 0:
                    continue
                g = np.linalg.norm(qp.moreau_gradient(u, alpha) - qp.moreau_gradient(v, alpha))
                worst = max(worst, g * alpha / d)
        return worst <= 1 + slack, worst, {"pairs": per * max(1, n_pairs // per)}
    return _timed(run, "envelope_lipschitz", 1 + slack)


def dual_strong_convexity_check(n_instances: int = 100, pairs: int = 100, seed: int = 2) -> CheckResult:
    """Monotonicity of ``grad q`` with modulus ``sigma/(mu+L)``; statistic is the worst ratio to the bound."""
    def run():
        rng = np.random.default_rng(seed)
        worst = np.inf
        for qp in _instances(rng, n_instances):
            mu_q = qp.dual_strong_convexity()
            for _ in range(pairs):
                l1, l2 = rng.standard_normal((2, qp.m)) * 3
                d = l2 - l1
                lhs = float((qp.dual_gradient(l2) - qp.dual_gradient(l1)) @ d)
                worst = min(worst, lhs / (mu_q * float(d @ d)))
        return worst >= 1 - 1e-9, worst, {"instances": n_instances, "pairs": pairs}
    return _timed(run, "dual_strong_convexity", 1.0)


def _random_triple(rng, qp: ExactQP):
    alpha = float(10 ** rng.uniform(-2, 1))
    lipschitz = qp.L + alpha * qp.norm_A() ** 2
    eta = float(rng.uniform(0.05, 0.999)) / lipschitz
    lam = rng.standard_normal(qp.m) * 2
    x_star = qp.subproblem_minimizer(lam, alpha)
    x = x_star + rng.standard_normal(qp.n) * float(10 ** rng.uniform(-3, 1))
    return alpha, eta, lam, x, x_star


def auglag_inequalities_check(n_triples: int = 200, seed: int = 3) -> CheckResult:
    """Function-gap bound on ``||c(x*) - c(x)||^2`` and the reduced-gradient bound, both at random points.

    The statistic is the number of violations (relative slack ``1e-10``).
    """
    def run():
        rng = np.random.default_rng(seed)
        violations = {"gap": 0, "reduced": 0}
        for qp in _instances(rng, n_triples):
            alpha, eta, lam, x, x_star = _random_triple(rng, qp)
            c = qp.constraint
            gap = (auglag_value(qp.value(x), c(x), lam, alpha)
                   - auglag_value(qp.value(x_star), c(x_star), lam, alpha))
            dc = c(x_star) - c(x)
            scale = 1e-10 * (1 + abs(gap))
            if float(dc @ dc) > 2 / alpha * gap + scale:
                violations["gap"] += 1
            r = reduced_gradient(qp.feasible_set, x, auglag_gradient(qp.gradient(x), c, x, lam, alpha), eta)
            if float(r @ r) > 2 / eta * gap + scale / eta:
                violations["reduced"] += 1
        total = sum(violations.values())
        return total == 0, total, violations
    return _timed(run, "auglag_inequalities", 0)


def condition_implications_check(n_configs: int = 100, seed: int = 4) -> CheckResult:
    """Condition II implies I, and III (with scaled parameters) implies I.

    Points are drawn at several distances from ``x*`` so that the premises
    hold in a sizeable fraction of cases.  Statistic: counterexamples.
    """
    def run():
        rng = np.random.default_rng(seed)
        counter = 0
        premises = {"II": 0, "III": 0}
        for qp in _instances(rng, n_configs):
            alpha = float(10 ** rng.uniform(-2, 1))
            eta = 0.9 / (qp.L + alpha * qp.norm_A() ** 2)
            lam = rng.standard_normal(qp.m) * 2
            theta_e = float(rng.uniform(0, 0.9))
            tau = float(10 ** rng.uniform(-4, 0))
            x_star = qp.subproblem_minimizer(lam, alpha)
            norm_a = qp.norm_A()
            theta_t = qp.mu * theta_e / (2 * norm_a)
            tau_t = qp.mu**2 * tau / (4 * norm_a**2)
            for scale in 10.0 ** np.arange(-4, 1):
                x = x_star + rng.standard_normal(qp.n) * scale
                holds_1 = tolerance_condition_oracle("I", qp, x, lam, alpha, eta, theta_e, tau)
                if tolerance_condition_oracle("II", qp, x, lam, alpha, eta, theta_e, tau):
                    premises["II"] += 1
                    counter += not holds_1
                if tolerance_condition_oracle("III", qp, x, lam, alpha, eta, theta_t, tau_t):
                    premises["III"] += 1
                    counter += not holds_1
        ok = counter == 0 and premises["II"] > 0 and premises["III"] > 0
        return ok, counter, premises
    return _timed(run, "condition_implications", 0)


# -- projections ---------------------------------------------------------------

def active_set_projection(G, h, y, x0, max_iter: int = 500) -> np.ndarray:
    """Projection of ``y`` onto ``{x : G x <= h}`` by a primal active-set method.

    ``x0`` must be strictly feasible (the working set starts empty).  Independent of the closed forms in
    :mod:`asal.projections`; used as the reference oracle.
    """
    G = np.asarray(G, dtype=float)
    h = np.asarray(h, dtype=float)
    x = np.asarray(x0, dtype=float).copy()
    if np.any(G @ x >= h):
        raise ValueError("starting point must be strictly feasible")
    work: List[int] = []
    for _ in range(max_iter):
        # equality-constrained step on the working set
        Gw = G[work]
        if work:
            # min 1/2||x + p - y||^2 s.t. Gw p = 0
            K = np.block([[np.eye(len(x)), Gw.T], [Gw, np.zeros((len(work), len(work)))]])
            rhs = np.concatenate([y - x, np.zeros(len(work))])
            sol = np.linalg.solve(K, rhs)
            p, mult = sol[: len(x)], sol[len(x):]
        else:
            p, mult = y - x, np.zeros(0)
        if np.linalg.norm(p) <= 1e-10 * (1 + np.linalg.norm(x) + np.linalg.norm(y)):
            if mult.size == 0 or mult.min() >= -1e-13:
                return x
            work.pop(int(np.argmin(mult)))
            continue
        step, block = 1.0, None
        for i in range(len(h)):
            if i in work:
                continue
            gp = G[i] @ p
            if gp > 1e-15:
                s = (h[i] - G[i] @ x) / gp
                if s < step:
                    step, block = max(s, 0.0), i
        x = x + step * p
        if block is not None:
            work.append(block)
    raise NumericalError("active-set reference projection did not converge")


def projection_equivalence_check(n_instances: int = 100, seed: int = 5, tol: float = 1e-8) -> CheckResult:
    """Capped-box and slab projections against the active-set reference; statistic is the worst error."""
    def run():
        rng = np.random.default_rng(seed)
        worst = {"capped_box": 0.0, "slab": 0.0}
        for _ in range(n_instances):
            n = int(rng.integers(2, 11))
            lower = rng.uniform(-2, 0, n)
            upper = lower + rng.uniform(0.1, 3, n)
            cap = float(lower.sum() + rng.uniform(0.01, 1) * (upper - lower).sum())
            y = rng.normal(0, 3, n)
            G = np.vstack([np.eye(n), -np.eye(n), np.ones((1, n))])
            h = np.concatenate([upper, -lower, [cap]])
            t = 0.5 * (cap - lower.sum()) / (upper - lower).sum()
            ref = active_set_projection(G, h, y, lower + t * (upper - lower))
            err = np.linalg.norm(project_capped_box(lower, upper, cap, y) - ref)
            worst["capped_box"] = max(worst["capped_box"], float(err))

            a = rng.standard_normal(n)
            bound = float(rng.uniform(0, 2))
            y = rng.normal(0, 3, n)
            ref = active_set_projection(np.vstack([a, -a]), np.array([bound, bound]), y, np.zeros(n))
            worst["slab"] = max(worst["slab"], float(np.linalg.norm(project_slab(a, bound, y) - ref)))
        stat = max(worst.values())
        return stat <= tol, stat, worst
    return _timed(run, "projection_equivalence", tol)


def run_theory_suite(seed: int = 0) -> List[CheckResult]:
    checks = [moreau_identity_check, envelope_lipschitz_check, dual_strong_convexity_check,
              auglag_inequalities_check, condition_implications_check, projection_equivalence_check]
    out = []
    for i, check in enumerate(checks):
        res = check(seed=seed * 101 + i)
        log.info(res.line())
        out.append(res)
    return out


# -- convergence rate experiments ----------------------------------------------

@dataclass
class RateResult:
    k: np.ndarray
    mean_c2: np.ndarray
    passed: bool
    statistics: Dict
    runtime_s: float

    def line(self, name: str) -> str:
        verdict = "PASS" if self.passed else "FAIL"
        stats = " ".join(f"{key}={val:.3g}" for key, val in self.statistics.items())
        return f"{verdict} {name}: {stats} ({self.runtime_s:.1f}s)"


def _outer_c2(problem, cfg: SolverConfig, n_outer: int) -> np.ndarray:
    _, trace = run_asal(problem, cfg)
    c2 = np.array([float(o.c_val @ o.c_val) for o in trace.outer])
    if len(c2) < n_outer:
        raise NumericalError(f"run stopped after {len(c2)} outer iterations ({trace.stop_reason})")
    return c2[:n_outer]


def linear_rate_experiment(n_seeds: int = 20, k_range=(5, 40), seed: int = 0, n: int = 10, m: int = 4,
                           noise: float = 0.1, ratio: float = 1.25, alpha: float = 1.0) -> RateResult:
    """Strongly convex QP on ``R^n`` with geometric tolerances.

    Fits ``log(mean_seeds ||c(x_k)||^2)`` against ``k`` over ``k_range``; passes
    when the slope is negative and ``R^2 >= 0.9``.
    """
    start = time.perf_counter()
    qp = random_qp(np.random.default_rng(seed), n, m, noise=noise)
    problem = qp.problem("qp-linear")
    eta = 0.5 / (qp.L + alpha * qp.norm_A() ** 2)
    n_outer = k_range[1] + 1
    runs = []
    for s in range(n_seeds):
        cfg = SolverConfig(alpha=alpha, eta=eta, sampler=SamplerConfig(theta_g=0.99),
                           tolerance=ToleranceSchedule(tau0=1.0, rule="geometric", ratio=ratio),
                           initial_sample_size=2, budget_gradient_evals=10**12, max_outer=n_outer,
                           max_inner_per_outer=10**5, seed=s)
        runs.append(_outer_c2(problem, cfg, n_outer))
    mean_c2 = np.mean(runs, axis=0)
    k = np.arange(k_range[0], k_range[1] + 1)
    y = np.log(mean_c2[k])
    slope, intercept = np.polyfit(k, y, 1)
    resid = y - (slope * k + intercept)
    r2 = 1 - float(resid @ resid) / float(((y - y.mean()) ** 2).sum())
    stats = {"slope": float(slope), "r2": r2, "rho": float(np.exp(slope))}
    return RateResult(k, mean_c2[k], bool(slope < 0 and r2 >= 0.9), stats, time.perf_counter() - start)


def sublinear_rate_experiment(n_seeds: int = 20, k_range=(10, 100), seed: int = 0, n: int = 10, m: int = 3,
                              rank: int = 4, noise: float = 0.1, tau0: float = 1.0,
                              alpha: float = 1.0) -> RateResult:
    """Convex QP with singular ``Q`` on a box and harmonic tolerances.

    With ``v_K = K * min_{k<K} mean_seeds ||c(x_k)||^2`` the check passes when
    ``max_K v_K <= 2 median_K v_K`` and the least-squares slope of ``v_K`` in
    ``K`` is not positive, over ``K`` in ``k_range``.
    """
    start = time.perf_counter()
    qp = random_box_qp(np.random.default_rng(seed), n, m, rank, noise=noise)
    problem = qp.problem("qp-sublinear")
    eta = 0.5 / (qp.L + alpha * qp.norm_A() ** 2)
    n_outer = k_range[1]
    runs = []
    for s in range(n_seeds):
        cfg = SolverConfig(alpha=alpha, eta=eta, sampler=SamplerConfig(theta_g=0.99),
                           tolerance=ToleranceSchedule(tau0=tau0), initial_sample_size=2,
                           budget_gradient_evals=10**12, max_outer=n_outer,
                           max_inner_per_outer=10**5, seed=s)
        runs.append(_outer_c2(problem, cfg, n_outer))
    mean_c2 = np.mean(runs, axis=0)
    running_min = np.minimum.accumulate(mean_c2)
    K = np.arange(k_range[0], k_range[1] + 1)
    v = K * running_min[K - 1]
    med = float(np.median(v))
    slope = float(np.polyfit(K, v, 1)[0])
    stats = {"max_over_median": float(v.max() / med), "slope": slope, "median": med}
    passed = bool(v.max() <= 2 * med and slope <= 0)
    return RateResult(K, v, passed, stats, time.perf_counter() - start)
