"""Sample-size control and inner-loop termination.

The practical pieces used by the solver are :func:`relative_variance`,
:func:`next_sample_size` and :func:`tolerance_test`.  The remaining functions
evaluate the idealized sampling and tolerance conditions exactly; they need a
small finite-sum population or a quadratic problem with a closed-form
subproblem minimizer and exist for verification only.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np

from .auglag import auglag_gradient, auglag_value, reduced_gradient
from .core import ConfigurationError, UnsupportedOperation
from .oracle import BatchStats, FiniteSumObjective


@dataclass(frozen=True)
class SamplerConfig:
    theta_g: float = 0.99
    nu_l: float = 0.5
    s_l: int = 2
    s_min: int = 2
    s_max: int = 1_000_000

    def __post_init__(self):
        if not self.theta_g > 0:
            raise ConfigurationError("theta_g must be positive")
        if not 0 < self.nu_l < 1:
            raise ConfigurationError("nu_l must lie in (0, 1)")
        if self.s_min < 2:
            raise ConfigurationError("s_min must be at least 2")
        if not self.s_min <= self.s_l <= self.s_max:
            raise ConfigurationError("need s_min <= s_l <= s_max")


@dataclass(frozen=True)
class ToleranceSchedule:
    """Inner tolerance ``tau_k``: harmonic ``tau0/(k+1)``, geometric ``tau0 * ratio**-k`` or constant."""

    tau0: float = 1.0
    theta_e_tilde: float = 0.0
    rule: str = "harmonic"
    ratio: float = 2.0

    def __post_init__(self):
        if not self.tau0 >= 0:
            raise ConfigurationError("tau0 must be non-negative")
        if not 0 <= self.theta_e_tilde < 1:
            raise ConfigurationError("theta_e_tilde must lie in [0, 1)")
        if self.rule not in ("harmonic", "geometric", "constant"):
            raise ConfigurationError(f"unknown tolerance rule {self.rule!r}")
        if self.rule == "geometric" and not self.ratio > 1:
            raise ConfigurationError("geometric tolerance needs ratio > 1")

    def tau(self, k: int) -> float:
        if self.rule == "harmonic":
            return self.tau0 / (k + 1)
        if self.rule == "geometric":
            return self.tau0 * self.ratio ** (-k)
        return self.tau0


def relative_variance(stats: BatchStats, theta_g: float, reduced_grad_norm_sq: float) -> float:
    if reduced_grad_norm_sq <= 0.0:
        return math.inf
    return stats.sample_variance_total / (theta_g**2 * stats.batch_size * reduced_grad_norm_sq)


def next_sample_size(current: int, nu_t: float, cfg: SamplerConfig) -> int:
    if math.isinf(nu_t):
        new = current
    elif nu_t > 1.0:
        new = math.ceil(min(nu_t * current, float(cfg.s_max)))
    elif nu_t < cfg.nu_l and current > cfg.s_l:
        new = max(cfg.s_min, math.ceil(nu_t * current))
    else:
        new = current
    return int(min(max(new, cfg.s_min), cfg.s_max))


def tolerance_test(reduced_grad_stochastic_norm_sq: float, c_norm_sq: float,
                   sched: ToleranceSchedule, k: int) -> bool:
    rhs = sched.theta_e_tilde**2 * c_norm_sq + sched.tau(k)
    return reduced_grad_stochastic_norm_sq <= rhs


# -- idealized conditions -----------------------------------------------------

def theoretical_norm_condition(obj, x, batch_size: int, theta_g: float,
                               expected_reduced_grad_norm_sq: float) -> bool:
    if not isinstance(obj, FiniteSumObjective):
        raise UnsupportedOperation("the exact sampling condition needs a finite-sum population")
    return obj.population_variance(x) / batch_size <= theta_g**2 * expected_reduced_grad_norm_sq


def exhaustive_expected_reduced_gradient(obj: FiniteSumObjective, feasible_set, x, c, lam,
                                         alpha: float, eta: float, batch_size: int) -> np.ndarray:
    """Average of the mini-batch reduced gradient over every batch of the given size."""
    if not isinstance(obj, FiniteSumObjective):
        raise UnsupportedOperation("enumeration needs a finite-sum population")
    grads = obj.gradients(x, obj.all_ids())
    total = np.zeros(obj.dim)
    count = 0
    for subset in itertools.combinations(range(obj.population), batch_size):
        g = auglag_gradient(grads[list(subset)].mean(axis=0), c, x, lam, alpha)
        total += reduced_gradient(feasible_set, x, g, eta)
        count += 1
    return total / count


def tolerance_condition_oracle(variant: str, qp, x_k, lambda_k, alpha: float, eta: float,
                               theta_e: float, tau_k: float) -> bool:
    """Evaluate tolerance condition I, II or III exactly for a deterministic ``x_k``.

    ``qp`` must offer ``subproblem_minimizer``, ``value``, ``gradient`` and
    ``constraint``.  For variant III, ``theta_e``/``tau_k`` are the scaled
    parameters used by that condition.
    """
    if not hasattr(qp, "subproblem_minimizer"):
        raise UnsupportedOperation("tolerance oracles need an exact quadratic problem")
    c = qp.constraint
    x_k = np.asarray(x_k, dtype=float)
    x_star = qp.subproblem_minimizer(lambda_k, alpha)
    c_star = c(x_star)
    rhs_base = theta_e**2 * float(c_star @ c_star)
    if variant == "I":
        d = c_star - c(x_k)
        return float(d @ d) <= rhs_base + tau_k
    if variant == "II":
        gap = (auglag_value(qp.value(x_k), c(x_k), lambda_k, alpha)
               - auglag_value(qp.value(x_star), c_star, lambda_k, alpha))
        return gap <= 0.5 * alpha * (rhs_base + tau_k)
    if variant == "III":
        r = reduced_gradient(qp.feasible_set, x_k,
                             auglag_gradient(qp.gradient(x_k), c, x_k, lambda_k, alpha), eta)
        return float(r @ r) <= rhs_base + tau_k
    raise ValueError(f"unknown tolerance condition {variant!r}")
