"""Counter-based random streams, Cholesky factorization and lognormal draws.

Every stream is addressed by ``(seed, key)`` where ``key`` is a tuple of small
integers such as ``(outer k, inner t)``. A stream is a Philox counter-based
generator whose key is derived from that address, so the same address yields
the same numbers on any platform, and different addresses are independent.
Normals are produced by inverse-CDF transform of open-interval uniforms.
"""
from __future__ import annotations

import hashlib
from typing import Sequence

import numpy as np
from scipy.special import ndtri

from .core import ConfigurationError

_U53 = 1.0 / 9007199254740992.0  # 2**-53


def _philox_key(seed: int, key: Sequence[int]) -> np.ndarray:
    payload = ",".join(str(int(v)) for v in (seed, *key)).encode()
    digest = hashlib.blake2b(payload, digest_size=16).digest()
    return np.frombuffer(digest, dtype=np.uint64).copy()


def bit_generator(seed: int, key: Sequence[int] = ()) -> np.random.Philox:
    return np.random.Philox(key=_philox_key(seed, key))


def generator(seed: int, key: Sequence[int] = ()) -> np.random.Generator:
    return np.random.Generator(bit_generator(seed, key))


def uniforms(seed: int, key: Sequence[int], size: int) -> np.ndarray:
    """Uniforms on the open interval (0, 1); draw ``i`` depends only on ``(seed, key, i)``."""
    raw = bit_generator(seed, key).random_raw(int(size))
    return ((raw >> np.uint64(11)).astype(np.float64) + 0.5) * _U53


def standard_normals(seed: int, key: Sequence[int], shape) -> np.ndarray:
    shape = (shape,) if np.isscalar(shape) else tuple(shape)
    count = int(np.prod(shape)) if shape else 1
    return ndtri(uniforms(seed, key, count)).reshape(shape)


def cholesky(matrix, pivot_tol: float = 1e-12) -> np.ndarray:
    """Lower-triangular factor of a symmetric positive-definite matrix.

    Raises ConfigurationError naming the first pivot that is not positive.
    """
    a = np.array(matrix, dtype=float)
    n = a.shape[0]
    if a.shape != (n, n):
        raise ConfigurationError("cholesky needs a square matrix")
    if not np.allclose(a, a.T, rtol=0, atol=1e-12):
        raise ConfigurationError("cholesky needs a symmetric matrix")
    lch = np.zeros_like(a)
    for j in range(n):
        d = a[j, j] - lch[j, :j] @ lch[j, :j]
        if d <= pivot_tol:
            raise ConfigurationError(f"matrix is not positive definite (pivot {j} = {d:.3e})")
        lch[j, j] = np.sqrt(d)
        lch[j + 1:, j] = (a[j + 1:, j] - lch[j + 1:, :j] @ lch[j, :j]) / lch[j, j]
    return lch


def lognormal_params(mean, sd):
    """Log-space (mu, sigma) whose lognormal has the given mean and standard deviation."""
    mean = np.asarray(mean, dtype=float)
    sd = np.asarray(sd, dtype=float)
    s2 = np.log1p((sd / mean) ** 2)
    return np.log(mean) - 0.5 * s2, np.sqrt(s2)


def draw_mvlognormal(z, lch, mu_log, sigma_log) -> np.ndarray:
    """Map standard normals ``z`` (shape ``(..., d)``) to correlated lognormals.

    Returns ``exp(mu_log + sigma_log * (lch @ z))`` row by row.
    """
    z = np.asarray(z, dtype=float)
    return np.exp(np.asarray(mu_log) + np.asarray(sigma_log) * (z @ np.asarray(lch).T))


def mvlognormal_stream(seed: int, key: Sequence[int], count: int, lch, mu_log, sigma_log):
    d = np.asarray(lch).shape[0]
    return draw_mvlognormal(standard_normals(seed, key, (count, d)), lch, mu_log, sigma_log)
