"""Seven-bar truss sizing under random yield stresses and a random load.

    min  1/(7 s) E[ log sum_i exp(s * g_i(x)) ],   g_i = f / (c_i x_i) - sigma_i
    s.t. lower <= x <= upper,  sum(x) <= cap

Internally areas are in units of ``area_unit_mm2`` (default 1e3 mm^2) and the
force in the matching unit of ``area_unit_mm2`` N, so ``g_i`` stays in N/mm^2.
The unit only rescales the problem; the default keeps the objective curvature
well below 1 so a unit step size is stable.  The yield
stresses are correlated lognormals (correlations imposed on the underlying
Gaussians); the force is an independent lognormal.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.special import logsumexp, softmax

from ..core import AffineConstraint, ConfigurationError
from ..oracle import METRIC_POOL_SIZE, ContinuousObjective, Draws, realize_normals
from ..projections import Box, CappedBox
from ..rng import cholesky, draw_mvlognormal, lognormal_params

AREA_UNIT_MM2 = 1e3
N_MEMBERS = 7


def _correlation() -> np.ndarray:
    R = np.full((N_MEMBERS, N_MEMBERS), 0.8)
    R[:2, 2:] = 0.5
    R[2:, :2] = 0.5
    np.fill_diagonal(R, 1.0)
    return R


@dataclass(frozen=True)
class TrussProblem:
    sharpness: float = 1.0
    member_constants: np.ndarray = field(default_factory=lambda: np.array(
        [1 / (2 * np.sqrt(3))] * 2 + [1 / np.sqrt(3)] * 5))
    stress_mean: np.ndarray = field(default_factory=lambda: np.array([100.0] * 2 + [200.0] * 5))
    stress_sd: np.ndarray = field(default_factory=lambda: np.array([20.0] * 2 + [40.0] * 5))
    force_mean_kN: float = 1000.0
    force_sd_kN: float = 400.0
    correlation: np.ndarray = field(default_factory=_correlation)
    lower_mm2: float = 1e4
    upper_mm2: float = 5e4
    cap_mm2: float = 15e4
    area_unit_mm2: float = AREA_UNIT_MM2

    @property
    def lower(self) -> float:
        return self.lower_mm2 / self.area_unit_mm2

    @property
    def upper(self) -> float:
        return self.upper_mm2 / self.area_unit_mm2

    @property
    def cap(self) -> float:
        return self.cap_mm2 / self.area_unit_mm2

    def to_mm2(self, x) -> np.ndarray:
        return np.asarray(x, dtype=float)[:N_MEMBERS] * self.area_unit_mm2


class TrussObjective(ContinuousObjective):
    def __init__(self, spec: TrussProblem, n_slack: int = 1, metric_seed: int = 0,
                 metric_pool_size: int = METRIC_POOL_SIZE):
        super().__init__(metric_seed, metric_pool_size)
        self.spec = spec
        self.n_slack = n_slack
        self.dim = N_MEMBERS + n_slack
        self.chol = cholesky(spec.correlation)
        self.mu_log, self.sigma_log = lognormal_params(spec.stress_mean, spec.stress_sd)
        scale = 1e3 / spec.area_unit_mm2  # kN -> internal force unit
        self.f_mu_log, self.f_sigma_log = lognormal_params(spec.force_mean_kN * scale,
                                                           spec.force_sd_kN * scale)
        self._cache = (None, None)
        self._pool = None
        self._pool_t = None
        self._metric_memo = (None, None)

    def _realize(self, ids: Draws):
        z = realize_normals(ids, N_MEMBERS + 1)
        sigma = draw_mvlognormal(z[:, :N_MEMBERS], self.chol, self.mu_log, self.sigma_log)
        force = np.exp(self.f_mu_log + self.f_sigma_log * z[:, N_MEMBERS])
        return sigma, force

    def realize(self, ids: Draws):
        """Yield stresses ``(b, 7)`` and forces ``(b,)`` for a batch of draws."""
        if ids is self.metric_ids:
            if self._pool is None:
                self._pool = self._realize(ids)
            return self._pool
        key = (type(ids), ids.seed, ids.key, ids.size)
        cached_key, cached = self._cache
        if key == cached_key:
            return cached
        out = self._realize(ids)
        if ids.size <= 4 * METRIC_POOL_SIZE:
            self._cache = (key, out)
        return out

    def _pool_metrics(self, x):
        # gradient and value share the limit states; memoize on the last x
        x = np.asarray(x, dtype=float)
        key = x.tobytes()
        memo_key, memo = self._metric_memo
        if key == memo_key:
            return memo
        if self._pool_t is None:
            sigma, force = self.realize(self.metric_ids)
            self._pool_t = (np.ascontiguousarray(sigma.T), force)
        sigma_t, force = self._pool_t
        areas = x[:N_MEMBERS]
        s = self.spec.sharpness
        denom = self.spec.member_constants * areas
        # member-major layout keeps the reductions over members cheap
        g = s * (force / denom[:, None] - sigma_t)
        top = np.maximum.reduce(g, axis=0)
        e = np.exp(g - top)
        tot = np.add.reduce(e, axis=0)
        value = float(np.mean(top + np.log(tot))) / (N_MEMBERS * s)
        grad = np.zeros(self.dim)
        grad[:N_MEMBERS] = -(e @ (force / tot)) / len(force) / (denom * areas) / N_MEMBERS
        out = (grad, value)
        self._metric_memo = (key, out)
        return out

    def true_gradient(self, x) -> np.ndarray:
        if self.metric_ids is None:
            return super().true_gradient(x)
        return self._pool_metrics(x)[0].copy()

    def objective_value(self, x) -> float:
        if self.metric_ids is None:
            return super().objective_value(x)
        return self._pool_metrics(x)[1]

    def limit_states(self, x, ids: Draws) -> np.ndarray:
        sigma, force = self.realize(ids)
        areas = np.asarray(x, dtype=float)[:N_MEMBERS]
        return force[:, None] / (self.spec.member_constants * areas) - sigma

    def values(self, x, ids) -> np.ndarray:
        s = self.spec.sharpness
        return logsumexp(s * self.limit_states(x, ids), axis=1) / (N_MEMBERS * s)

    def gradients(self, x, ids) -> np.ndarray:
        sigma, force = self.realize(ids)
        areas = np.asarray(x, dtype=float)[:N_MEMBERS]
        g = force[:, None] / (self.spec.member_constants * areas) - sigma
        w = softmax(self.spec.sharpness * g, axis=1)
        out = np.zeros((g.shape[0], self.dim))
        out[:, :N_MEMBERS] = -w * force[:, None] / (self.spec.member_constants * areas**2) / N_MEMBERS
        return out


def build_truss(seed: int = 0, encoding: str = "slack", spec: TrussProblem = None,
                metric_pool_size: int = METRIC_POOL_SIZE):
    """Truss problem in internal units (see module docstring).

    ``encoding="slack"`` adds a slack ``s in [0, cap]`` and the equality
    ``sum(x) + s = cap``; ``encoding="cap_in_X"`` keeps the cap inside a
    capped-box feasible set with no equality constraints.  ``seed`` selects
    the metric pool.
    """
    from . import Problem

    spec = spec if spec is not None else TrussProblem()
    if not np.all(np.linalg.eigvalsh(spec.correlation) > 0):
        raise ConfigurationError("yield-stress correlation matrix is not positive definite")
    lo, hi, cap = spec.lower, spec.upper, spec.cap
    if not spec.area_unit_mm2 > 0:
        raise ConfigurationError("area unit must be positive")
    info = {"truss": spec, "area_unit_mm2": spec.area_unit_mm2}
    if encoding == "slack":
        obj = TrussObjective(spec, 1, metric_seed=seed, metric_pool_size=metric_pool_size)
        X = Box(np.r_[np.full(N_MEMBERS, lo), 0.0], np.r_[np.full(N_MEMBERS, hi), cap])
        c = AffineConstraint(np.ones((1, N_MEMBERS + 1)), [cap])
    elif encoding == "cap_in_X":
        obj = TrussObjective(spec, 0, metric_seed=seed, metric_pool_size=metric_pool_size)
        X = CappedBox(np.full(N_MEMBERS, lo), np.full(N_MEMBERS, hi), cap)
        c = AffineConstraint(np.zeros((0, N_MEMBERS)), np.zeros(0))
    else:
        raise ConfigurationError(f"unknown truss encoding {encoding!r}")
    return Problem("truss", obj, X, c, info)


def areas_mm2(x, spec: TrussProblem = None) -> np.ndarray:
    return (spec if spec is not None else TrussProblem()).to_mm2(x)
