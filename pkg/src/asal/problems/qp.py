"""Quadratic programs with affine constraints and closed-form oracles.

``f(x) = 1/2 x^T Q x + q^T x`` with stochastic gradients ``Q x + q + zeta``.
The noise ``zeta`` is either Gaussian (``zeta = B z``, ``z ~ N(0, I)``) or
drawn uniformly from a finite, zero-mean set of points.

With ``X = R^n`` and ``Q`` positive definite the augmented Lagrangian
subproblem, the negative dual ``q(lam)`` and its Moreau envelope all have
closed forms, which makes this the reference problem for verification.
"""
from __future__ import annotations

from typing import Optional

import numpy as np
from scipy.linalg import cho_factor, cho_solve

from ..core import (AffineConstraint, ConfigurationError, NumericalError, UnsupportedOperation,
                    as_matrix, as_vector, spectral_norm)
from ..oracle import ContinuousObjective, Draws, FiniteSumObjective, realize_normals
from ..projections import Box, FeasibleSet, WholeSpace


class QPObjective:
    """Mixin with the analytic quadratic part; the sampling base decides the noise."""

    def _setup(self, Q, q):
        self.Q = Q
        self.q = q
        self.dim = Q.shape[0]

    def value(self, x) -> float:
        x = np.asarray(x, dtype=float)
        return float(0.5 * x @ self.Q @ x + self.q @ x)

    def gradient(self, x) -> np.ndarray:
        return self.Q @ np.asarray(x, dtype=float) + self.q

    def true_gradient(self, x) -> np.ndarray:
        return self.gradient(x)

    def objective_value(self, x) -> float:
        return self.value(x)


class GaussianNoiseQP(QPObjective, ContinuousObjective):
    metrics_are_estimates = False

    def __init__(self, Q, q, noise_factor):
        ContinuousObjective.__init__(self, metric_pool_size=0)
        self._setup(Q, q)
        self.noise_factor = noise_factor

    @property
    def exact_full_gradient(self) -> bool:
        return True

    def noise(self, ids: Draws) -> np.ndarray:
        if self.noise_factor is None:
            return np.zeros((len(ids), self.dim))
        return realize_normals(ids, self.dim) @ self.noise_factor.T

    def values(self, x, ids) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        return self.value(x) + self.noise(ids) @ x

    def gradients(self, x, ids) -> np.ndarray:
        return self.gradient(x) + self.noise(ids)


class FiniteNoiseQP(QPObjective, FiniteSumObjective):
    def __init__(self, Q, q, points):
        FiniteSumObjective.__init__(self, points.shape[0])
        self._setup(Q, q)
        self.points = points - points.mean(axis=0)

    def values(self, x, ids) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        return self.value(x) + self.points[self._check_ids(ids)] @ x

    def gradients(self, x, ids) -> np.ndarray:
        return self.gradient(x) + self.points[self._check_ids(ids)]


class ExactQP:
    """Quadratic problem container with the exact subproblem and dual oracles."""

    def __init__(self, Q, q, A, b, feasible_set: Optional[FeasibleSet] = None,
                 noise_factor=None, noise_points=None):
        Q = as_matrix(Q, "Q")
        if Q.shape[0] != Q.shape[1] or not np.allclose(Q, Q.T, atol=1e-12):
            raise ConfigurationError("Q must be square and symmetric")
        self.Q = Q
        self.q = as_vector(q, "q")
        self.constraint = AffineConstraint(A, b)
        n = Q.shape[0]
        self.feasible_set = feasible_set if feasible_set is not None else WholeSpace(n)
        eig = np.linalg.eigvalsh(Q)
        self.mu = float(eig[0])
        self.L = float(eig[-1])
        if noise_points is not None:
            self.objective = FiniteNoiseQP(Q, self.q, np.asarray(noise_points, dtype=float))
        else:
            factor = None
            if noise_factor is not None:
                factor = np.asarray(noise_factor, dtype=float)
                if factor.ndim == 0:
                    factor = float(factor) * np.eye(n)
            self.objective = GaussianNoiseQP(Q, self.q, factor)

    # -- basic pieces
    @property
    def n(self) -> int:
        return self.Q.shape[0]

    @property
    def m(self) -> int:
        return self.constraint.m

    @property
    def A(self) -> np.ndarray:
        return self.constraint.a

    @property
    def b(self) -> np.ndarray:
        return self.constraint.b

    def value(self, x) -> float:
        return self.objective.value(x)

    def gradient(self, x) -> np.ndarray:
        return self.objective.gradient(x)

    def norm_A(self) -> float:
        return spectral_norm(self.A)

    def sigma(self) -> float:
        """Smallest eigenvalue of ``A A^T``."""
        return float(np.linalg.eigvalsh(self.A @ self.A.T)[0]) if self.m else 0.0

    def dual_strong_convexity(self) -> float:
        return self.sigma() / (self.mu + self.L)

    def problem(self, name: str = "qp"):
        from . import Problem
        return Problem(name, self.objective, self.feasible_set, self.constraint, {"qp": self})

    def _require_unconstrained(self):
        if not isinstance(self.feasible_set, WholeSpace):
            raise UnsupportedOperation("closed-form oracles need X = R^n")

    # -- exact oracles
    def subproblem_minimizer(self, lam, alpha: float) -> np.ndarray:
        """``argmin_x L(x, lam; alpha)`` over ``R^n`` by Cholesky solve."""
        self._require_unconstrained()
        A, b = self.A, self.b
        H = self.Q + alpha * A.T @ A
        rhs = A.T @ np.asarray(lam, dtype=float) + alpha * A.T @ b - self.q
        try:
            x = cho_solve(cho_factor(H), rhs)
        except np.linalg.LinAlgError as exc:
            raise NumericalError(f"subproblem matrix is singular: {exc}") from None
        if np.linalg.norm(H @ x - rhs) > 1e-10 * (1 + np.linalg.norm(rhs)):
            raise NumericalError("subproblem solve residual too large")
        return x

    def dual_minimizer_x(self, lam) -> np.ndarray:
        """``argmin_x l(x, lam) = Q^{-1}(A^T lam - q)``."""
        self._require_unconstrained()
        return np.linalg.solve(self.Q, self.A.T @ np.asarray(lam, dtype=float) - self.q)

    def dual_value(self, lam) -> float:
        """Negative dual function ``q(lam) = -min_x l(x, lam)``."""
        x = self.dual_minimizer_x(lam)
        return -(self.value(x) - float(np.dot(lam, self.constraint(x))))

    def dual_gradient(self, lam) -> np.ndarray:
        return self.constraint(self.dual_minimizer_x(lam))

    def prox_dual(self, u, alpha: float) -> np.ndarray:
        """``prox_{alpha q}(u)`` by solving ``grad q(lam) + (lam - u)/alpha = 0``."""
        self._require_unconstrained()
        Qi_At = np.linalg.solve(self.Q, self.A.T)
        H = self.A @ Qi_At
        shift = self.A @ np.linalg.solve(self.Q, self.q) + self.b
        lhs = H + np.eye(self.m) / alpha
        return np.linalg.solve(lhs, np.asarray(u, dtype=float) / alpha + shift)

    def moreau_value(self, u, alpha: float) -> float:
        lam = self.prox_dual(u, alpha)
        d = lam - np.asarray(u, dtype=float)
        return self.dual_value(lam) + float(d @ d) / (2 * alpha)

    def moreau_gradient(self, u, alpha: float) -> np.ndarray:
        """``(u - prox_{alpha q}(u)) / alpha``, computed on the dual side."""
        u = np.asarray(u, dtype=float)
        return (u - self.prox_dual(u, alpha)) / alpha

    def dual_and_moreau(self, lam, alpha: float):
        """``(q(lam), c(x*))`` with ``x*`` the augmented Lagrangian minimizer at ``lam``."""
        return self.dual_value(lam), self.constraint(self.subproblem_minimizer(lam, alpha))

    def kkt(self):
        """Optimal ``(x*, lam*)`` of the equality-constrained problem."""
        self._require_unconstrained()
        n, m = self.n, self.m
        K = np.block([[self.Q, -self.A.T], [self.A, np.zeros((m, m))]])
        sol = np.linalg.solve(K, np.concatenate([-self.q, self.b]))
        return sol[:n], sol[n:]


def qp_subproblem_minimizer(qp: ExactQP, lam, alpha: float) -> np.ndarray:
    return qp.subproblem_minimizer(lam, alpha)


def qp_dual_and_moreau(qp: ExactQP, lam, alpha: float):
    return qp.dual_and_moreau(lam, alpha)


def random_qp(rng: np.random.Generator, n: int, m: int, noise: float = 0.0,
              mu_range=(0.5, 2.0), L_range=(2.0, 10.0)) -> ExactQP:
    """Strongly convex QP on ``R^n`` with a full-row-rank ``A`` (``m <= n``)."""
    if m > n:
        raise ConfigurationError("need m <= n for a full-row-rank constraint")
    U, _ = np.linalg.qr(rng.standard_normal((n, n)))
    mu = rng.uniform(*mu_range)
    L = max(mu, rng.uniform(*L_range))
    eig = np.sort(np.concatenate([[mu, L], rng.uniform(mu, L, size=max(n - 2, 0))]))[:n]
    Q = (U * eig) @ U.T
    Q = 0.5 * (Q + Q.T)
    A = rng.standard_normal((m, n))
    return ExactQP(Q, rng.standard_normal(n), A, rng.standard_normal(m),
                   noise_factor=noise if noise else None)


def random_box_qp(rng: np.random.Generator, n: int, m: int, rank: int, noise: float = 0.0,
                  half_width: float = 1.0) -> ExactQP:
    """Convex QP with singular ``Q`` (given ``rank``) on the box ``[-w, w]^n``.

    The constraint right-hand side is built from an interior point so the
    feasible region is non-empty.
    """
    factor = rng.standard_normal((rank, n)) / np.sqrt(n)
    Q = factor.T @ factor
    A = rng.standard_normal((m, n))
    x_feas = rng.uniform(-0.5 * half_width, 0.5 * half_width, size=n)
    box = Box(-half_width * np.ones(n), half_width * np.ones(n))
    return ExactQP(Q, rng.standard_normal(n), A, A @ x_feas, feasible_set=box,
                   noise_factor=noise if noise else None)
