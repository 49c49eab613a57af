"""Augmented Lagrangian values, projected (reduced) gradients and dual updates.

With ``c(x) = A x - b`` the augmented Lagrangian is

    L(x, lam; alpha) = f(x) - <lam, c(x)> + alpha/2 ||c(x)||^2

and its x-gradient is ``grad f(x) + A^T (alpha c(x) - lam)``.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import AffineConstraint, ConfigurationError, constraint_value
from .oracle import BatchStats, SampleIds, StochasticObjective
from .projections import FeasibleSet


@dataclass(frozen=True)
class AugLagParams:
    alpha: float
    eta: float

    def __post_init__(self):
        if not self.alpha > 0:
            raise ConfigurationError("penalty parameter alpha must be positive")
        if not self.eta > 0:
            raise ConfigurationError("step size eta must be positive")


def auglag_value(f_value: float, c_val, lam, alpha: float) -> float:
    c_val = np.asarray(c_val, dtype=float)
    return float(f_value - np.dot(lam, c_val) + 0.5 * alpha * np.dot(c_val, c_val))


def auglag_gradient(objective_grad, c: AffineConstraint, x, lam, alpha: float) -> np.ndarray:
    """x-gradient of the augmented Lagrangian given an objective gradient at ``x``."""
    return np.asarray(objective_grad) + c.a.T @ (alpha * constraint_value(c, x) - np.asarray(lam))


def lagrangian_gradient(objective_grad, c: AffineConstraint, lam) -> np.ndarray:
    """x-gradient of the plain Lagrangian ``f(x) - <lam, c(x)>``."""
    return np.asarray(objective_grad) - c.a.T @ np.asarray(lam)


def stochastic_auglag_gradient(obj: StochasticObjective, x, ids: SampleIds,
                               c: AffineConstraint, lam, alpha: float):
    """Mini-batch AL gradient at ``x``.

    Returns ``(gradient, stats)`` where ``stats`` are the batch statistics of
    the objective gradients (needed by the sample-size test).
    """
    stats: BatchStats = obj.batch_gradient(x, ids)
    return auglag_gradient(stats.mean_gradient, c, x, lam, alpha), stats


def reduced_gradient(feasible_set: FeasibleSet, x, grad, eta: float) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    return (feasible_set.project(x - eta * np.asarray(grad)) - x) / eta


def true_reduced_gradient(feasible_set: FeasibleSet, obj: StochasticObjective, x,
                          c: AffineConstraint, lam, alpha: float, eta: float) -> np.ndarray:
    """``R(x, lam; alpha, eta)`` computed with the full (or metric-pool) gradient."""
    return reduced_gradient(feasible_set, x, auglag_gradient(obj.true_gradient(x), c, x, lam, alpha), eta)


def stationarity_error(feasible_set: FeasibleSet, obj: StochasticObjective, x,
                       c: AffineConstraint, lambda_next, eta: float) -> float:
    g = lagrangian_gradient(obj.true_gradient(x), c, lambda_next)
    return float(np.linalg.norm(reduced_gradient(feasible_set, x, g, eta)))


def dual_update(lam, alpha: float, c_val) -> np.ndarray:
    return np.asarray(lam, dtype=float) - alpha * np.asarray(c_val, dtype=float)
