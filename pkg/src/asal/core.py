"""Shared vector/matrix helpers and the small value types used everywhere.

Vectors and matrices are plain float64 numpy arrays. Constructors copy their
input, reject non-finite entries and mark the result read-only so the types
behave as immutable values.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np


class ContractViolation(ValueError):
    """Raised when an operation is called with inconsistent arguments."""


class ConfigurationError(ValueError):
    """Raised when a problem, set or solver is specified inconsistently."""


class NumericalError(RuntimeError):
    """Raised when an iteration produces non-finite values or fails to converge."""


class UnsupportedOperation(RuntimeError):
    """Raised when an objective lacks the capability an operation needs."""


def as_vector(values, name: str = "vector") -> np.ndarray:
    arr = np.array(values, dtype=float).reshape(-1)
    if not np.all(np.isfinite(arr)):
        raise ContractViolation(f"{name} has non-finite entries")
    arr.setflags(write=False)
    return arr


def as_matrix(values, name: str = "matrix") -> np.ndarray:
    arr = np.array(values, dtype=float)
    if arr.ndim == 1:
        arr = arr.reshape(1, -1)
    if arr.ndim != 2:
        raise ContractViolation(f"{name} must be two-dimensional, got {arr.ndim} dims")
    if not np.all(np.isfinite(arr)):
        raise ContractViolation(f"{name} has non-finite entries")
    arr.setflags(write=False)
    return arr


def spectral_norm(a: np.ndarray, iters: int = 200, seed: int = 0) -> float:
    """Power-iteration estimate of the largest singular value of ``a``."""
    a = np.asarray(a, dtype=float)
    if a.size == 0 or not np.any(a):
        return 0.0
    v = np.random.default_rng(seed).standard_normal(a.shape[1])
    v /= np.linalg.norm(v)
    sigma = 0.0
    for _ in range(iters):
        w = a.T @ (a @ v)
        nw = np.linalg.norm(w)
        if nw == 0.0:
            return 0.0
        v = w / nw
        sigma = np.sqrt(nw)
    return float(sigma)


@dataclass(frozen=True)
class AffineConstraint:
    """The affine equality constraint ``c(x) = A x - b = 0``."""

    a: np.ndarray
    b: np.ndarray

    def __post_init__(self):
        a = as_matrix(self.a, "A")
        b = as_vector(self.b, "b")
        if a.shape[0] != b.shape[0]:
            raise ContractViolation(f"A has {a.shape[0]} rows but b has {b.shape[0]} entries")
        object.__setattr__(self, "a", a)
        object.__setattr__(self, "b", b)

    @property
    def m(self) -> int:
        return self.a.shape[0]

    @property
    def n(self) -> int:
        return self.a.shape[1]

    def __call__(self, x) -> np.ndarray:
        return constraint_value(self, x)


def constraint_value(c: AffineConstraint, x) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if x.shape != (c.n,):
        raise ContractViolation(f"x has shape {x.shape}, constraint expects ({c.n},)")
    return c.a @ x - c.b


def feasibility_error(c: AffineConstraint, x) -> float:
    return float(np.linalg.norm(constraint_value(c, x)))


@dataclass(frozen=True)
class ErrorPair:
    feasibility: float
    stationarity: float

    def __post_init__(self):
        if not (self.feasibility >= 0 and self.stationarity >= 0):
            raise ContractViolation("error measures must be non-negative")


@dataclass(frozen=True)
class PrimalDualState:
    """Outer iterate ``(x_k, lambda_k)`` plus the inner counter that produced it."""

    x: np.ndarray
    lam: np.ndarray
    k: int = 0
    t: int = 0

    def __post_init__(self):
        object.__setattr__(self, "x", as_vector(self.x, "x"))
        object.__setattr__(self, "lam", as_vector(self.lam, "lambda"))
        if self.k < 0 or self.t < 0:
            raise ContractViolation("iteration counters must be non-negative")
