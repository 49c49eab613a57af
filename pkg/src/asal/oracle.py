"""Stochastic objective interface: per-sample gradients and mini-batch statistics.

Two sampling regimes are supported.

* Finite-sum objectives (population ``N``) are sampled by index, without
  replacement inside a batch.  A request for ``N`` or more samples returns the
  whole data set.
* Continuous-distribution objectives are sampled through :class:`Draws`, the
  first ``size`` realizations of the counter-based stream ``(seed, key)``.
  Draw ``i`` of a stream is always the same realization.
"""
from __future__ import annotations

import threading
from dataclasses import dataclass
from typing import Optional, Tuple, Union

import numpy as np

from . import rng
from .core import ContractViolation, UnsupportedOperation

METRIC_POOL_SIZE = 10_000
_METRIC_KEY = (2**31 - 1,)


@dataclass(frozen=True)
class Draws:
    """Sample identifiers for a continuous distribution: draws ``0..size-1`` of one stream."""

    seed: int
    key: Tuple[int, ...]
    size: int

    def __len__(self) -> int:
        return self.size


SampleIds = Union[np.ndarray, Draws]


@dataclass(frozen=True)
class BatchStats:
    mean_gradient: np.ndarray
    sample_variance_total: float
    batch_size: int


class StochasticObjective:
    """Base class for ``f(x) = E[F(x, zeta)]``.

    Subclasses implement :meth:`values` and :meth:`gradients`, which evaluate
    ``F`` and its gradient for every identifier in a batch.
    """

    dim: int
    population: Optional[int] = None
    metrics_are_estimates = False

    def __init__(self):
        self._lock = threading.Lock()
        self.evaluations = 0

    # -- to be provided by subclasses
    def values(self, x, ids: SampleIds) -> np.ndarray:
        raise NotImplementedError

    def gradients(self, x, ids: SampleIds) -> np.ndarray:
        raise NotImplementedError

    # -- sampling
    @property
    def finite_sum(self) -> bool:
        return self.population is not None

    @property
    def exact_full_gradient(self) -> bool:
        return self.finite_sum

    def draw(self, seed: int, key: Tuple[int, ...], size: int) -> SampleIds:
        raise NotImplementedError

    def _count(self, n: int):
        with self._lock:
            self.evaluations += n

    def sample_value(self, x, sample_id) -> float:
        return float(self.values(x, self._single(sample_id))[0])

    def sample_gradient(self, x, sample_id) -> np.ndarray:
        return self.gradients(x, self._single(sample_id))[0]

    def _single(self, sample_id):
        raise NotImplementedError

    def batch_gradient(self, x, ids: SampleIds) -> BatchStats:
        size = len(ids)
        if size < 2:
            raise ContractViolation("a batch needs at least two samples to estimate variance")
        grads = self.gradients(x, ids)
        # fixed-order reduction keeps results bitwise reproducible
        mean = grads.sum(axis=0) / size
        dev = grads - mean
        var = float(np.einsum("ij,ij->", dev, dev)) / (size - 1)
        self._count(size)
        return BatchStats(mean, var, size)

    def true_gradient(self, x) -> np.ndarray:
        raise NotImplementedError

    def objective_value(self, x) -> float:
        raise NotImplementedError


class FiniteSumObjective(StochasticObjective):
    def __init__(self, population: int):
        super().__init__()
        self.population = int(population)

    def _check_ids(self, ids) -> np.ndarray:
        ids = np.asarray(ids, dtype=np.int64).reshape(-1)
        if ids.size and (ids.min() < 0 or ids.max() >= self.population):
            raise ContractViolation(f"sample index out of range [0, {self.population})")
        return ids

    def _single(self, sample_id):
        return self._check_ids([sample_id])

    def all_ids(self) -> np.ndarray:
        return np.arange(self.population)

    def draw(self, seed: int, key: Tuple[int, ...], size: int) -> np.ndarray:
        if size >= self.population:
            return self.all_ids()
        return rng.generator(seed, key).choice(self.population, size=int(size), replace=False)

    def true_gradient(self, x) -> np.ndarray:
        return self.gradients(x, self.all_ids()).mean(axis=0)

    def objective_value(self, x) -> float:
        return float(self.values(x, self.all_ids()).mean())

    def population_variance(self, x) -> float:
        """``E||grad F(x, zeta) - grad f(x)||^2`` over the uniform distribution on the data."""
        grads = self.gradients(x, self.all_ids())
        dev = grads - grads.mean(axis=0)
        return float(np.einsum("ij,ij->", dev, dev)) / self.population


class ContinuousObjective(StochasticObjective):
    """Objective over a continuous distribution with a fixed metric pool.

    The metric pool (common random numbers, ``metric_pool_size`` draws) is used
    only for reporting; evaluations on it are not counted.
    """

    metrics_are_estimates = True

    def __init__(self, metric_seed: int = 0, metric_pool_size: int = METRIC_POOL_SIZE):
        super().__init__()
        self.metric_ids = Draws(int(metric_seed), _METRIC_KEY, int(metric_pool_size)) if metric_pool_size else None

    @property
    def exact_full_gradient(self) -> bool:
        return self.metric_ids is not None

    def _single(self, sample_id):
        if isinstance(sample_id, Draws):
            return sample_id
        seed, key, index = sample_id
        return _Nth(seed, tuple(key), int(index))

    def draw(self, seed: int, key: Tuple[int, ...], size: int) -> Draws:
        return Draws(int(seed), tuple(int(v) for v in key), int(size))

    def true_gradient(self, x) -> np.ndarray:
        if self.metric_ids is None:
            raise UnsupportedOperation("no metric pool configured")
        return self.gradients(x, self.metric_ids).mean(axis=0)

    def objective_value(self, x) -> float:
        if self.metric_ids is None:
            raise UnsupportedOperation("no metric pool configured")
        return float(self.values(x, self.metric_ids).mean())


class _Nth(Draws):
    """A single draw ``index`` of a stream, realized as the last of ``index + 1`` draws."""

    def __init__(self, seed, key, index):
        object.__setattr__(self, "seed", seed)
        object.__setattr__(self, "key", key)
        object.__setattr__(self, "size", index + 1)

    def __len__(self) -> int:
        return 1


def realize_normals(ids: Draws, width: int) -> np.ndarray:
    """Standard normal rows for ``ids``; row ``i`` uses stream positions ``i*width .. i*width+width-1``."""
    z = rng.standard_normals(ids.seed, ids.key, (ids.size, width))
    if isinstance(ids, _Nth):
        return z[-1:]
    return z
