"""Euclidean projections onto the feasible sets used by the test problems."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence, Tuple

import numpy as np

from .core import ConfigurationError, ContractViolation, NumericalError, as_vector

BISECTION_MAX_STEPS = 200


class FeasibleSet:
    """Base class. Subclasses implement ``project`` and report ``dim``."""

    dim: Optional[int] = None

    def project(self, y) -> np.ndarray:
        raise NotImplementedError

    def contains(self, x, tol: float = 1e-10) -> bool:
        x = np.asarray(x, dtype=float)
        return bool(np.linalg.norm(self.project(x) - x) <= tol * max(1.0, np.linalg.norm(x)))

    def _check(self, y) -> np.ndarray:
        y = np.asarray(y, dtype=float)
        if y.ndim != 1:
            raise ContractViolation("projection input must be a vector")
        if self.dim is not None and y.shape[0] != self.dim:
            raise ContractViolation(f"expected dimension {self.dim}, got {y.shape[0]}")
        return y


@dataclass(frozen=True)
class WholeSpace(FeasibleSet):
    dim: Optional[int] = None

    def project(self, y) -> np.ndarray:
        return self._check(y).copy()


@dataclass(frozen=True)
class Box(FeasibleSet):
    lower: np.ndarray
    upper: np.ndarray

    def __post_init__(self):
        lo = np.array(self.lower, dtype=float).reshape(-1)
        hi = np.array(self.upper, dtype=float).reshape(-1)
        if lo.shape != hi.shape:
            raise ConfigurationError("box bounds have different lengths")
        if np.any(np.isnan(lo)) or np.any(np.isnan(hi)) or np.any(lo > hi):
            raise ConfigurationError("box requires lower <= upper componentwise")
        lo.setflags(write=False)
        hi.setflags(write=False)
        object.__setattr__(self, "lower", lo)
        object.__setattr__(self, "upper", hi)

    @property
    def dim(self) -> int:
        return self.lower.shape[0]

    def project(self, y) -> np.ndarray:
        return np.clip(self._check(y), self.lower, self.upper)


@dataclass(frozen=True)
class Slab(FeasibleSet):
    """The set ``{x : |<a, x>| <= bound}``."""

    a: np.ndarray
    bound: float

    def __post_init__(self):
        a = as_vector(self.a, "slab normal")
        if not np.any(a):
            raise ConfigurationError("slab normal must be non-zero")
        if not self.bound >= 0:
            raise ConfigurationError("slab bound must be non-negative")
        object.__setattr__(self, "a", a)
        object.__setattr__(self, "bound", float(self.bound))

    @property
    def dim(self) -> int:
        return self.a.shape[0]

    def project(self, y) -> np.ndarray:
        return project_slab(self.a, self.bound, self._check(y))


@dataclass(frozen=True)
class CappedBox(FeasibleSet):
    """The box ``lower <= x <= upper`` intersected with ``sum(x) <= cap``."""

    lower: np.ndarray
    upper: np.ndarray
    cap: float

    def __post_init__(self):
        box = Box(self.lower, self.upper)
        if box.lower.sum() > self.cap:
            raise ConfigurationError(
                f"capped box is empty: sum(lower) = {box.lower.sum():g} exceeds cap {self.cap:g}")
        object.__setattr__(self, "lower", box.lower)
        object.__setattr__(self, "upper", box.upper)
        object.__setattr__(self, "cap", float(self.cap))

    @property
    def dim(self) -> int:
        return self.lower.shape[0]

    def project(self, y) -> np.ndarray:
        return project_capped_box(self.lower, self.upper, self.cap, self._check(y))


@dataclass(frozen=True)
class Product(FeasibleSet):
    """Cartesian product; each factor acts on a contiguous block of coordinates.

    ``blocks`` holds ``(set, (start, stop))`` pairs that must tile ``range(dim)``.
    """

    blocks: Tuple[Tuple[FeasibleSet, Tuple[int, int]], ...]

    def __post_init__(self):
        blocks = tuple((s, (int(r[0]), int(r[1]))) for s, r in self.blocks)
        pos = 0
        for s, (start, stop) in blocks:
            if start != pos or stop <= start:
                raise ConfigurationError("product blocks must partition the coordinates in order")
            if s.dim is not None and s.dim != stop - start:
                raise ConfigurationError(f"block {start}:{stop} has a set of dimension {s.dim}")
            pos = stop
        object.__setattr__(self, "blocks", blocks)

    @classmethod
    def of(cls, sets: Sequence[Tuple[FeasibleSet, int]]) -> "Product":
        """Build from ``(set, block_length)`` pairs laid out consecutively."""
        blocks, pos = [], 0
        for s, length in sets:
            blocks.append((s, (pos, pos + length)))
            pos += length
        return cls(tuple(blocks))

    @property
    def dim(self) -> int:
        return self.blocks[-1][1][1]

    def project(self, y) -> np.ndarray:
        y = self._check(y)
        out = np.empty_like(y)
        for s, (start, stop) in self.blocks:
            out[start:stop] = s.project(y[start:stop])
        return out


def project(feasible_set: FeasibleSet, y) -> np.ndarray:
    return feasible_set.project(y)


def project_slab(a, bound: float, y) -> np.ndarray:
    a = np.asarray(a, dtype=float)
    y = np.asarray(y, dtype=float)
    nrm2 = float(a @ a)
    if nrm2 == 0.0:
        raise ConfigurationError("slab normal must be non-zero")
    if bound < 0:
        raise ConfigurationError("slab bound must be non-negative")
    s = float(a @ y)
    if abs(s) <= bound:
        return y.copy()
    return y - ((s - np.sign(s) * bound) / nrm2) * a


def project_capped_box(lower, upper, cap: float, y) -> np.ndarray:
    """Continuous quadratic knapsack projection by bisection on the shift ``mu``.

    The result is ``clip(y - mu)`` with ``mu >= 0`` chosen so the cap holds with
    equality whenever plain clipping violates it.
    """
    lower = np.asarray(lower, dtype=float)
    upper = np.asarray(upper, dtype=float)
    y = np.asarray(y, dtype=float)
    if lower.sum() > cap:
        raise ConfigurationError("capped box is empty")
    x = np.clip(y, lower, upper)
    if x.sum() <= cap:
        return x

    tol = 1e-10 * max(1.0, abs(cap))
    lo, hi = 0.0, float(np.max(y - lower))
    for _ in range(BISECTION_MAX_STEPS):
        mu = 0.5 * (lo + hi)
        total = np.clip(y - mu, lower, upper).sum()
        if abs(total - cap) <= tol:
            break
        if total > cap:
            lo = mu
        else:
            hi = mu
    else:
        raise NumericalError("capped-box bisection did not converge")

    # polish: solve for mu exactly on the free set found by bisection
    x = np.clip(y - mu, lower, upper)
    free = (y - mu > lower) & (y - mu < upper)
    if np.any(free):
        mu_exact = (y[free].sum() + x[~free].sum() - cap) / free.sum()
        x_exact = np.clip(y - mu_exact, lower, upper)
        if mu_exact >= 0 and abs(x_exact.sum() - cap) <= abs(x.sum() - cap):
            x = x_exact
    return x
