import itertools

import numpy as np
import pytest
from hypothesis import given, strategies as st
from hypothesis.extra import numpy as hnp

from asal.core import ConfigurationError
from asal.projections import (Box, CappedBox, Product, Slab, WholeSpace, project, project_capped_box,
                              project_slab)

coord = st.floats(-50, 50, allow_nan=False)


def grid_projection_capped(lower, upper, cap, y, step=1e-3):
    """Brute force over a grid of the 2-d feasible polytope."""
    xs = np.arange(lower[0], upper[0] + step / 2, step)
    ys = np.arange(lower[1], upper[1] + step / 2, step)
    X, Y = np.meshgrid(xs, ys)
    ok = X + Y <= cap + 1e-12
    d = (X - y[0]) ** 2 + (Y - y[1]) ** 2
    d[~ok] = np.inf
    i = np.unravel_index(np.argmin(d), d.shape)
    return np.array([X[i], Y[i]])


def capped_box_kkt_gap(lower, upper, cap, y, p):
    """Largest violation of the optimality conditions of the capped-box projection."""
    viol = max(0.0, p.sum() - cap, np.max(lower - p), np.max(p - upper))
    # p = clip(y - mu) for a scalar mu >= 0 with mu (cap - sum p) = 0
    free = (p > lower + 1e-9) & (p < upper - 1e-9)
    mu = float(np.mean(y[free] - p[free])) if np.any(free) else max(0.0, float(np.min(y - p)))
    viol = max(viol, -mu, np.max(np.abs(np.clip(y - mu, lower, upper) - p)))
    if mu > 1e-9:
        viol = max(viol, abs(p.sum() - cap))
    return viol


def test_examples():
    np.testing.assert_array_equal(project(WholeSpace(), [5, -3]), [5, -3])
    np.testing.assert_array_equal(project(Box([0, 0], [1, 1]), [2, -1]), [1, 0])
    np.testing.assert_allclose(project(CappedBox([0, 0], [3, 3], 2), [3, 3]), [1, 1], atol=1e-10)
    np.testing.assert_array_equal(project_slab([1, 0], 1, [0.5, 7]), [0.5, 7])
    np.testing.assert_array_equal(project_slab([1, 0], 1, [3, 7]), [1, 7])
    np.testing.assert_allclose(project_slab([1, 1], 0, [1, 0]), [0.5, -0.5], atol=1e-15)
    np.testing.assert_array_equal(project_capped_box([0, 0], [5, 5], 10, [1, 2]), [1, 2])
    np.testing.assert_allclose(project_capped_box([0, 0], [5, 5], 2, [4, 4]), [1, 1], atol=1e-10)


@pytest.mark.parametrize("lower,upper,cap,y", [
    ([0, 0], [3, 3], 2, [3, 3]),
    ([0, 0], [5, 5], 2, [4, 4]),
    ([0, 0.5], [1, 2], 1.7, [2.0, 0.3]),
])
def test_capped_box_matches_grid_search(lower, upper, cap, y):
    p = project_capped_box(np.array(lower, float), np.array(upper, float), cap, np.array(y, float))
    ref = grid_projection_capped(np.array(lower, float), np.array(upper, float), cap, np.array(y, float))
    assert np.linalg.norm(p - ref) <= 2e-3


def test_hyperplane_projection_is_closest_point(rng):
    a = np.array([1.0, 1.0])
    p = project_slab(a, 0.0, np.array([1.0, 0.0]))
    # parametrize the line a.x = 0 and minimize the distance directly
    ts = np.linspace(-2, 2, 400001)
    pts = np.stack([ts, -ts], axis=1)
    best = pts[np.argmin(((pts - [1.0, 0.0]) ** 2).sum(axis=1))]
    assert np.linalg.norm(p - best) <= 1e-5


def test_random_capped_box_satisfies_kkt(rng):
    for _ in range(200):
        n = int(rng.integers(2, 11))
        lower = rng.uniform(-1, 0, n)
        upper = lower + rng.uniform(0.1, 2, n)
        cap = lower.sum() + rng.uniform(0.01, 1) * (upper - lower).sum()
        y = rng.normal(0, 2, n)
        p = project_capped_box(lower, upper, cap, y)
        assert capped_box_kkt_gap(lower, upper, cap, y, p) <= 1e-8


def test_bisection_tolerance(rng):
    lower, upper = np.zeros(5), np.full(5, 4.0)
    p = project_capped_box(lower, upper, 3.0, rng.uniform(2, 6, 5))
    assert abs(p.sum() - 3.0) <= 1e-10


def test_invalid_sets():
    with pytest.raises(ConfigurationError):
        CappedBox([1, 1], [2, 2], 1.0)
    with pytest.raises(ConfigurationError):
        project_capped_box(np.array([1.0, 1.0]), np.array([2.0, 2.0]), 1.0, np.zeros(2))
    with pytest.raises(ConfigurationError):
        Slab([0, 0], 1.0)
    with pytest.raises(ConfigurationError):
        project_slab([0.0, 0.0], 1.0, [1.0, 1.0])
    with pytest.raises(ConfigurationError):
        Slab([1, 0], -1.0)
    with pytest.raises(ConfigurationError):
        Box([1, 0], [0, 1])
    with pytest.raises(ConfigurationError):
        Product(((WholeSpace(2), (0, 2)), (Box([0], [1]), (3, 4))))


def test_product_projects_blockwise():
    s = Product.of([(WholeSpace(2), 2), (Box([0, 0], [1, 1]), 2)])
    np.testing.assert_array_equal(s.project(np.array([-3.0, 4.0, -1.0, 2.0])), [-3, 4, 0, 1])
    assert s.dim == 4


def _sets():
    lower = np.array([-1.0, 0.0, -2.0])
    upper = np.array([1.0, 2.0, 0.5])
    return [
        WholeSpace(3),
        Box(lower, upper),
        Slab(np.array([1.0, -2.0, 0.5]), 0.7),
        CappedBox(lower, upper, 0.2),
        Product.of([(Slab(np.array([1.0, 1.0]), 0.3), 2), (Box([0.0], [np.inf]), 1)]),
    ]


SETS = _sets()
vec3 = hnp.arrays(float, 3, elements=coord)


@pytest.mark.parametrize("s", SETS, ids=lambda s: type(s).__name__)
@given(y=vec3, z=vec3)
def test_non_expansive(s, y, z):
    assert np.linalg.norm(s.project(y) - s.project(z)) <= np.linalg.norm(y - z) * (1 + 1e-12) + 1e-10


@pytest.mark.parametrize("s", SETS, ids=lambda s: type(s).__name__)
@given(y=vec3)
def test_idempotent(s, y):
    p = s.project(y)
    assert np.max(np.abs(s.project(p) - p)) <= 1e-12 * max(1.0, np.abs(p).max())
    assert s.contains(p)


def _vertices_capped(lower, upper, cap):
    pts = []
    for corner in itertools.product(*zip(lower, upper)):
        corner = np.array(corner)
        if corner.sum() <= cap + 1e-12:
            pts.append(corner)
    # vertices on the cap face: all but one coordinate at a bound
    n = len(lower)
    for i in range(n):
        for rest in itertools.product(*[(lower[j], upper[j]) for j in range(n) if j != i]):
            v = np.insert(np.array(rest), i, 0.0)
            v[i] = cap - sum(rest)
            if lower[i] <= v[i] <= upper[i]:
                pts.append(v)
    return pts


@given(y=vec3)
def test_variational_inequality_capped_box(y):
    s = SETS[3]
    p = s.project(y)
    for v in _vertices_capped(s.lower, s.upper, s.cap):
        assert (y - p) @ (v - p) <= 1e-9 * (1 + np.abs(y).max())


@given(y=vec3)
def test_variational_inequality_box(y):
    s = SETS[1]
    p = s.project(y)
    for v in itertools.product(*zip(s.lower, s.upper)):
        assert (y - p) @ (np.array(v) - p) <= 1e-9


@given(y=vec3, pts=hnp.arrays(float, (8, 3), elements=coord))
def test_variational_inequality_slab(y, pts):
    s = SETS[2]
    p = s.project(y)
    for v in (s.project(q) for q in pts):
        assert (y - p) @ (v - p) <= 1e-9 * (1 + np.abs(y).max()) * (1 + np.abs(v).max())
