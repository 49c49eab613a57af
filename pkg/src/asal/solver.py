"""Adaptive-sampling augmented Lagrangian loop and its fixed-batch baseline.

Each outer iteration ``k`` approximately minimizes ``L(., lam_k; alpha)`` over
``X`` with projected stochastic gradient steps, warm-started at the previous
outer iterate, and then updates ``lam_{k+1} = lam_k - alpha c(x_k)``.  Inner
iterations stop once the practical tolerance test passes.  In adaptive mode
the batch size follows the relative-variance rule after every step; in fixed
mode it never changes.

One trace record is written per inner step, after the step, with metrics
evaluated on the full data (or the metric pool) outside the gradient budget.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field, fields, replace
from typing import List, Optional

import numpy as np

from .adaptive import SamplerConfig, ToleranceSchedule, next_sample_size, relative_variance, tolerance_test
from .auglag import auglag_gradient, dual_update, reduced_gradient, true_reduced_gradient
from .core import ConfigurationError, NumericalError, PrimalDualState, constraint_value

log = logging.getLogger(__name__)

TRACE_FIELDS = ("k", "t", "batch_size", "cum_grad_evals", "feasibility_error",
                "stationarity_error", "objective_estimate", "nu_t", "tol_passed")


@dataclass(frozen=True)
class SolverConfig:
    alpha: float = 1.0
    eta: float = 0.1
    sampler: SamplerConfig = field(default_factory=SamplerConfig)
    tolerance: ToleranceSchedule = field(default_factory=ToleranceSchedule)
    initial_sample_size: int = 2
    budget_gradient_evals: int = 10**6
    max_outer: int = 10**6
    max_inner_per_outer: int = 10**4
    seed: int = 0
    mode: str = "adaptive"
    batch_size: Optional[int] = None  # fixed mode only

    def __post_init__(self):
        if not (self.alpha > 0 and self.eta > 0):
            raise ConfigurationError("alpha and eta must be positive")
        if self.budget_gradient_evals <= 0:
            raise ConfigurationError("gradient budget must be positive")
        if self.mode == "adaptive":
            if self.initial_sample_size < self.sampler.s_min:
                raise ConfigurationError("initial sample size is below s_min")
        elif self.mode == "fixed":
            if self.batch_size is None or self.batch_size < 2:
                raise ConfigurationError("fixed mode needs batch_size >= 2")
        else:
            raise ConfigurationError(f"unknown mode {self.mode!r}")

    def fixed(self, batch_size: int) -> "SolverConfig":
        return replace(self, mode="fixed", batch_size=int(batch_size))

    @property
    def label(self) -> str:
        return "adaptive" if self.mode == "adaptive" else f"fixed:{self.batch_size}"


@dataclass(frozen=True)
class TraceRecord:
    k: int
    t: int
    batch_size: int
    cum_grad_evals: int
    feasibility_error: float
    stationarity_error: float
    objective_estimate: float
    nu_t: float
    tol_passed: bool

    def row(self) -> tuple:
        return tuple(getattr(self, f.name) for f in fields(self))


@dataclass
class OuterRecord:
    """Summary of one outer iteration; ``lam_next`` is None if the dual step was skipped."""

    k: int
    inner_iters: int
    x_start: np.ndarray
    x: np.ndarray
    lam: np.ndarray
    lam_next: Optional[np.ndarray]
    c_val: np.ndarray
    passed: bool
    batch_size: int


@dataclass
class SolverTrace:
    records: List[TraceRecord] = field(default_factory=list)
    outer: List[OuterRecord] = field(default_factory=list)
    stop_reason: str = ""
    stationarity_is_estimate: bool = False
    config_label: str = ""

    def column(self, name: str) -> np.ndarray:
        return np.array([getattr(r, name) for r in self.records])

    @property
    def cum_grad_evals(self) -> int:
        return self.records[-1].cum_grad_evals if self.records else 0

    @property
    def n_outer(self) -> int:
        return len(self.outer)


@dataclass
class InnerResult:
    x: np.ndarray
    t: int
    passed: bool
    batch_size: int
    evals: int
    exhausted: bool


def _solve_subproblem(problem, x0, lam, alpha, eta, size, adaptive, sampler, passes, *,
                      seed, k, evals, budget, max_inner, trace=None, s_cap=None):
    """Projected stochastic gradient loop on ``L(., lam; alpha)``.

    ``passes(rn2, cn2)`` is the termination test.  Returns an InnerResult; the
    iterate is the last one produced, even if the budget ran out.
    """
    obj, X, c = problem.objective, problem.feasible_set, problem.constraint
    x = x0
    t = 0
    passed = False
    while t < max_inner:
        if evals >= budget:
            return InnerResult(x, t, passed, size, evals, True)
        ids = obj.draw(seed, (k, t), size)
        stats = obj.batch_gradient(x, ids)
        used = stats.batch_size
        evals += used
        c_val = constraint_value(c, x)
        r = reduced_gradient(X, x, auglag_gradient(stats.mean_gradient, c, x, lam, alpha), eta)
        x_new = x + eta * r
        if not np.all(np.isfinite(x_new)):
            raise NumericalError(f"non-finite iterate at outer {k}, inner {t}")
        rn2 = float(r @ r)
        nu = relative_variance(stats, sampler.theta_g, rn2)
        if adaptive:
            size = next_sample_size(size, nu, sampler)
            if s_cap is not None:
                size = min(size, s_cap)
        passed = passes(rn2, float(c_val @ c_val))
        x = x_new
        t += 1
        if trace is not None:
            _record(trace, problem, x, lam, alpha, eta, k, t, used, evals, nu, passed)
        if passed:
            break
    return InnerResult(x, t, passed, size, evals, False)


def _record(trace, problem, x, lam, alpha, eta, k, t, used, evals, nu, passed):
    obj, X, c = problem.objective, problem.feasible_set, problem.constraint
    # stationarity at lam_next = lam - alpha c(x) equals ||R(x, lam; alpha, eta)||
    r_true = true_reduced_gradient(X, obj, x, c, lam, alpha, eta)
    trace.records.append(TraceRecord(
        k=k, t=t, batch_size=int(used), cum_grad_evals=int(evals),
        feasibility_error=float(np.linalg.norm(constraint_value(c, x))),
        stationarity_error=float(np.linalg.norm(r_true)),
        objective_estimate=float(obj.objective_value(x)),
        nu_t=float(nu), tol_passed=bool(passed)))


def _run(problem, cfg: SolverConfig, x_init=None, lambda_init=None):
    obj, X, c = problem.objective, problem.feasible_set, problem.constraint
    x = X.project(np.zeros(c.n) if x_init is None else np.asarray(x_init, dtype=float))
    lam = np.zeros(c.m) if lambda_init is None else np.array(lambda_init, dtype=float)
    adaptive = cfg.mode == "adaptive"
    size = cfg.initial_sample_size if adaptive else cfg.batch_size
    s_cap = obj.population if obj.finite_sum else None
    if s_cap is not None:
        size = min(size, s_cap)
    sampler, sched = cfg.sampler, cfg.tolerance
    trace = SolverTrace(stationarity_is_estimate=obj.metrics_are_estimates, config_label=cfg.label)
    evals = 0
    k = 0
    t_last = 0
    while True:
        if k >= cfg.max_outer:
            trace.stop_reason = "max_outer"
            break
        if evals >= cfg.budget_gradient_evals:
            trace.stop_reason = "budget"
            break
        x_start = x

        def passes(rn2, cn2, _k=k):
            return tolerance_test(rn2, cn2, sched, _k)

        res = _solve_subproblem(problem, x, lam, cfg.alpha, cfg.eta, size, adaptive, sampler, passes,
                                seed=cfg.seed, k=k, evals=evals, budget=cfg.budget_gradient_evals,
                                max_inner=cfg.max_inner_per_outer, trace=trace, s_cap=s_cap)
        x, evals, size, t_last = res.x, res.evals, res.batch_size, res.t
        c_val = constraint_value(c, x)
        if res.exhausted and not res.passed:
            trace.outer.append(OuterRecord(k, res.t, x_start, x, lam, None, c_val, False, size))
            trace.stop_reason = "budget"
            break
        lam_next = dual_update(lam, cfg.alpha, c_val)
        trace.outer.append(OuterRecord(k, res.t, x_start, x, lam, lam_next, c_val, res.passed, size))
        lam = lam_next
        k += 1
    log.debug("run %s stopped (%s) after %d outer iterations, %d evaluations",
              cfg.label, trace.stop_reason, k, evals)
    return PrimalDualState(x, lam, k, t_last), trace


def run_asal(problem, cfg: SolverConfig, x_init=None, lambda_init=None):
    """Run the adaptive method (or the fixed baseline if ``cfg.mode == "fixed"``).

    Returns ``(state, trace)``; ``state.k`` counts completed dual updates.
    """
    # divergence is detected explicitly on the iterates
    with np.errstate(over="ignore", invalid="ignore"):
        return _run(problem, cfg, x_init, lambda_init)


def run_fixed_baseline(problem, cfg: SolverConfig, batch_size: Optional[int] = None,
                       x_init=None, lambda_init=None):
    if batch_size is not None:
        cfg = cfg.fixed(batch_size)
    if cfg.mode != "fixed":
        raise ConfigurationError("baseline needs a fixed batch size")
    with np.errstate(over="ignore", invalid="ignore"):
        return _run(problem, cfg, x_init, lambda_init)


def best_feasibility_iterate(trace: SolverTrace) -> OuterRecord:
    if not trace.outer:
        raise ConfigurationError("trace has no outer iterations")
    return min(trace.outer, key=lambda o: float(np.linalg.norm(o.c_val)))


def post_optimization_step(problem, trace: SolverTrace, cfg: SolverConfig, alpha_tilde: float,
                           eta_tilde: float, target_gap: float, max_inner: Optional[int] = None):
    """One extra subproblem solve from the outer iterate with the smallest feasibility error.

    The solve uses penalty ``alpha_tilde`` and step ``eta_tilde`` at the
    multiplier that produced that iterate and stops once the squared mini-batch
    reduced gradient is at most ``target_gap``.  Returns the new
    ``PrimalDualState`` with ``lam = lam_k* - alpha_tilde c(x)``.
    """
    best = best_feasibility_iterate(trace)
    obj = problem.objective
    adaptive = cfg.mode == "adaptive"
    size = best.batch_size if adaptive else cfg.batch_size
    s_cap = obj.population if obj.finite_sum else None
    res = _solve_subproblem(
        problem, best.x, best.lam, alpha_tilde, eta_tilde, size, adaptive, cfg.sampler,
        lambda rn2, cn2: rn2 <= target_gap, seed=cfg.seed + 1_000_003, k=best.k, evals=0,
        budget=math.inf, max_inner=max_inner or cfg.max_inner_per_outer, s_cap=s_cap)
    lam = dual_update(best.lam, alpha_tilde, constraint_value(problem.constraint, res.x))
    return PrimalDualState(res.x, lam, best.k, res.t)
