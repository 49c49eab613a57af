"""Regularized logistic regression with two disparate-impact constraints.

    min  1/N sum_i log(1 + exp(-z_i <x, y_i>)) + gamma/2 ||x||^2
    s.t. <a1, x> = b1,   |<a2, x>| <= b2

The regularizer is replicated in every per-sample loss so the finite-sum
mean equals the objective above.  The two-sided inequality is handled either
with two slack variables (``encoding="slack"``, three equality constraints on
``(x, s1, s2)`` with ``s >= 0``) or as a slab in the feasible set
(``encoding="slab_in_X"``, one equality constraint).
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.special import expit

from ..core import AffineConstraint, ConfigurationError
from ..libsvm import Dataset
from ..oracle import FiniteSumObjective
from ..projections import Box, Product, Slab, WholeSpace
from .. import rng as rngmod

DEFAULT_B1 = 0.1
DEFAULT_B2 = 0.02


class LogisticObjective(FiniteSumObjective):
    def __init__(self, features, labels, gamma: float, n_slack: int = 0):
        super().__init__(features.shape[0])
        self.features = np.asarray(features, dtype=float)
        self.labels = np.asarray(labels, dtype=float)
        self.gamma = float(gamma)
        self.n_model = self.features.shape[1]
        self.n_slack = int(n_slack)
        self.dim = self.n_model + self.n_slack

    def values(self, x, ids) -> np.ndarray:
        ids = self._check_ids(ids)
        w = np.asarray(x, dtype=float)[: self.n_model]
        margins = self.labels[ids] * (self.features[ids] @ w)
        return np.logaddexp(0.0, -margins) + 0.5 * self.gamma * float(w @ w)

    def gradients(self, x, ids) -> np.ndarray:
        ids = self._check_ids(ids)
        w = np.asarray(x, dtype=float)[: self.n_model]
        z = self.labels[ids]
        weight = -z * expit(-z * (self.features[ids] @ w))
        out = np.zeros((ids.size, self.dim))
        out[:, : self.n_model] = weight[:, None] * self.features[ids] + self.gamma * w
        return out

    def true_gradient(self, x) -> np.ndarray:
        w = np.asarray(x, dtype=float)[: self.n_model]
        z = self.labels
        weight = -z * expit(-z * (self.features @ w))
        g = np.zeros(self.dim)
        g[: self.n_model] = self.features.T @ weight / self.population + self.gamma * w
        return g


@dataclass(frozen=True)
class LogisticProblem:
    dataset: Dataset
    gamma: float
    a1: np.ndarray
    a2: np.ndarray
    b1: float
    b2: float
    encoding: str

    def constraint_residuals(self, x) -> dict:
        w = np.asarray(x)[: self.a1.shape[0]]
        return {"equality": float(self.a1 @ w - self.b1),
                "slab_excess": float(max(0.0, abs(self.a2 @ w) - self.b2))}


def build_logistic(dataset: Dataset, seed: int = 0, encoding: str = "slack",
                   b1: float = DEFAULT_B1, b2: float = DEFAULT_B2, gamma: Optional[float] = None):
    """Assemble the constrained logistic regression problem for ``dataset``.

    ``a1`` and ``a2`` are standard-normal vectors drawn from ``seed``.
    Returns a :class:`~asal.problems.Problem` whose ``info["logistic"]`` holds
    the :class:`LogisticProblem` description.
    """
    from . import Problem

    if dataset.n_samples == 0:
        raise ConfigurationError("logistic regression needs a non-empty data set")
    N, n = dataset.shape
    gamma = 1.0 / N if gamma is None else float(gamma)
    draws = rngmod.standard_normals(seed, (0,), 2 * n)
    a1, a2 = draws[:n], draws[n:]
    desc = LogisticProblem(dataset, gamma, a1, a2, float(b1), float(b2), encoding)

    if encoding == "slack":
        obj = LogisticObjective(dataset.features, dataset.labels, gamma, n_slack=2)
        A = np.zeros((3, n + 2))
        A[0, :n] = a1
        A[1, :n], A[1, n] = a2, 1.0
        A[2, :n], A[2, n + 1] = -a2, 1.0
        constraint = AffineConstraint(A, [b1, b2, b2])
        X = Product.of([(WholeSpace(n), n), (Box(np.zeros(2), np.full(2, np.inf)), 2)])
    elif encoding == "slab_in_X":
        obj = LogisticObjective(dataset.features, dataset.labels, gamma)
        constraint = AffineConstraint(a1.reshape(1, -1), [b1])
        X = Slab(a2, b2)
    else:
        raise ConfigurationError(f"unknown logistic encoding {encoding!r}")
    return Problem("logistic", obj, X, constraint, {"logistic": desc})


def synthetic_dataset(n_samples: int, n_features: int, seed: int = 0, noise: float = 1.0,
                      feature_scale: float = 1.0) -> Dataset:
    """Labels from a random linear model with logistic noise.

    Features are i.i.d. normal with standard deviation ``feature_scale``; the
    true weights are scaled so the noiseless margin has standard deviation 2.
    """
    g = rngmod.generator(seed, (1,))
    Y = feature_scale * g.standard_normal((n_samples, n_features))
    w = g.standard_normal(n_features) * 2.0 / (feature_scale * np.sqrt(n_features))
    p = expit((Y @ w) / noise)
    z = np.where(g.uniform(size=n_samples) < p, 1.0, -1.0)
    return Dataset(Y, z)
