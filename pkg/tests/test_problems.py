import math

import numpy as np
import pytest
from scipy.special import logsumexp

from asal.core import ConfigurationError, UnsupportedOperation
from asal.libsvm import Dataset
from asal.oracle import Draws
from asal.problems import build_logistic, build_truss, random_box_qp, random_qp
from asal.problems.qp import ExactQP, qp_dual_and_moreau, qp_subproblem_minimizer
from asal.problems.truss import N_MEMBERS, TrussProblem, areas_mm2
from asal.projections import CappedBox, Product, Slab
from asal.rng import lognormal_params


def test_subproblem_minimizer_examples(rng):
    Q = np.array([[2.0, 0.5], [0.5, 1.0]])
    q = np.array([1.0, -2.0])
    qp = ExactQP(Q, q, np.zeros((1, 2)), [0.0])
    np.testing.assert_allclose(qp_subproblem_minimizer(qp, [0.3], 1.0), -np.linalg.solve(Q, q), atol=1e-14)
    qp = ExactQP(np.eye(3), np.zeros(3), np.eye(3), np.zeros(3))
    np.testing.assert_array_equal(qp_subproblem_minimizer(qp, np.zeros(3), 1.0), np.zeros(3))
    for _ in range(20):
        qp = random_qp(rng, 8, 4)
        lam, alpha = rng.standard_normal(4), rng.uniform(0.1, 10)
        x = qp_subproblem_minimizer(qp, lam, alpha)
        grad = qp.gradient(x) + qp.A.T @ (alpha * qp.constraint(x) - lam)
        assert np.linalg.norm(grad) <= 1e-9


def test_dual_and_moreau_at_kkt_multiplier(rng):
    qp = random_qp(rng, 7, 3)
    x_star, lam_star = qp.kkt()
    _, grad = qp_dual_and_moreau(qp, lam_star, 0.8)
    assert np.linalg.norm(grad) <= 1e-10
    np.testing.assert_allclose(qp.prox_dual(lam_star, 0.8), lam_star, atol=1e-10)


def test_moreau_gradient_finite_differences(rng):
    """Central differences of the envelope value, evaluated through the prox definition."""
    for _ in range(5):
        qp = random_qp(rng, 6, 3)
        alpha = rng.uniform(0.3, 3)
        u = rng.standard_normal(3)
        h = 1e-5
        fd = np.array([(qp.moreau_value(u + h * e, alpha) - qp.moreau_value(u - h * e, alpha)) / (2 * h)
                       for e in np.eye(3)])
        _, grad = qp_dual_and_moreau(qp, u, alpha)
        assert np.linalg.norm(fd - grad) <= 1e-5 * max(1.0, np.linalg.norm(grad))


def test_moreau_identity_and_lipschitz(rng):
    for _ in range(20):
        qp = random_qp(rng, 6, 3)
        alpha = rng.uniform(0.1, 5)
        u, v = rng.normal(0, 3, 3), rng.normal(0, 3, 3)
        np.testing.assert_allclose(qp.moreau_gradient(u, alpha), qp_dual_and_moreau(qp, u, alpha)[1], atol=1e-9)
        d = np.linalg.norm(qp.moreau_gradient(u, alpha) - qp.moreau_gradient(v, alpha))
        assert d <= (1 + 1e-6) * np.linalg.norm(u - v) / alpha


def test_dual_strong_convexity(rng):
    for _ in range(10):
        qp = random_qp(rng, 8, 4)
        mu_q = qp.dual_strong_convexity()
        for _ in range(20):
            l1, l2 = rng.standard_normal(4), rng.standard_normal(4)
            lhs = (qp.dual_gradient(l2) - qp.dual_gradient(l1)) @ (l2 - l1)
            assert lhs >= mu_q * np.sum((l2 - l1) ** 2) * (1 - 1e-10)


def test_exact_qp_validation(rng):
    with pytest.raises(ConfigurationError):
        ExactQP([[1.0, 2.0], [0.0, 1.0]], [0, 0], [[1, 1]], [0])
    with pytest.raises(ConfigurationError):
        random_qp(rng, 2, 3)
    box = random_box_qp(rng, 5, 2, 3)
    with pytest.raises(UnsupportedOperation):
        box.subproblem_minimizer(np.zeros(2), 1.0)
    assert box.mu == pytest.approx(0.0, abs=1e-12)
    x_feas = box.feasible_set.project(np.linalg.lstsq(box.A, box.b, rcond=None)[0])
    assert box.feasible_set.lower[0] == -1.0 and x_feas.shape == (5,)


def _dataset(rng, N=20, n=5):
    return Dataset(rng.standard_normal((N, n)), np.where(rng.uniform(size=N) < 0.5, -1.0, 1.0))


def test_logistic_structure(rng):
    ds = _dataset(rng)
    prob = build_logistic(ds, seed=3)
    desc = prob.info["logistic"]
    assert (desc.b1, desc.b2, desc.gamma) == (0.1, 0.02, 1 / 20)
    assert prob.n == 7 and prob.m == 3 and isinstance(prob.feasible_set, Product)
    x = rng.standard_normal(7)
    w = x[:5]
    np.testing.assert_allclose(prob.constraint(x), [desc.a1 @ w - 0.1, desc.a2 @ w + x[5] - 0.02,
                                                    -desc.a2 @ w + x[6] - 0.02], atol=1e-14)
    np.testing.assert_array_equal(prob.feasible_set.project(np.r_[w, -1.0, 2.0])[5:], [0.0, 2.0])
    slab = build_logistic(ds, seed=3, encoding="slab_in_X")
    assert slab.m == 1 and isinstance(slab.feasible_set, Slab)
    np.testing.assert_array_equal(slab.info["logistic"].a2, desc.a2)
    with pytest.raises(ConfigurationError):
        build_logistic(Dataset(np.zeros((0, 3)), np.zeros(0)))
    with pytest.raises(ConfigurationError):
        build_logistic(ds, encoding="other")


def test_logistic_objective_matches_formula(rng):
    ds = _dataset(rng)
    prob = build_logistic(ds)
    obj = prob.objective
    x = rng.standard_normal(prob.n)
    w = x[:5]
    loss = np.mean(np.log1p(np.exp(-ds.labels * (ds.features @ w)))) + 0.5 / 20 * w @ w
    assert obj.objective_value(x) == pytest.approx(loss, rel=1e-12)
    i = 4
    z, y = ds.labels[i], ds.features[i]
    g = -z / (1 + np.exp(z * (w @ y))) * y + w / 20
    np.testing.assert_allclose(obj.sample_gradient(x, i)[:5], g, rtol=1e-12, atol=1e-15)
    assert obj.sample_value(np.zeros(prob.n), i) == pytest.approx(math.log(2))


def test_truss_structure():
    prob = build_truss()
    assert prob.n == 8 and prob.m == 1
    spec = prob.info["truss"]
    X = prob.feasible_set
    np.testing.assert_array_equal(X.lower, np.r_[np.full(7, 10.0), 0.0])
    np.testing.assert_array_equal(X.upper, np.r_[np.full(7, 50.0), 150.0])
    x = np.r_[np.full(7, 20.0), 10.0]
    assert prob.constraint(x)[0] == pytest.approx(140.0 + 10.0 - 150.0)
    np.testing.assert_allclose(areas_mm2(x), np.full(7, 2e4))
    capped = build_truss(encoding="cap_in_X")
    assert capped.m == 0 and isinstance(capped.feasible_set, CappedBox)
    assert spec.member_constants[0] == pytest.approx(1 / (2 * math.sqrt(3)))
    with pytest.raises(ConfigurationError):
        build_truss(encoding="nope")
    bad = np.full((7, 7), 0.99)
    np.fill_diagonal(bad, 1.0)
    bad[0, 1] = bad[1, 0] = -0.99
    with pytest.raises(ConfigurationError):
        build_truss(spec=TrussProblem(correlation=bad))


def test_truss_equal_limit_states():
    obj = build_truss(metric_pool_size=0).objective
    g = np.full((1, 7), 3.7)
    assert logsumexp(g, axis=1)[0] / 7 == pytest.approx((3.7 + math.log(7)) / 7, rel=1e-14)
    x = np.r_[np.full(7, 20.0), 0.0]
    ids = Draws(0, (0, 0), 3)
    gs = obj.limit_states(x, ids)
    np.testing.assert_allclose(obj.values(x, ids), logsumexp(gs, axis=1) / 7, rtol=1e-14)


def test_truss_gradient_formula(rng):
    obj = build_truss(metric_pool_size=0).objective
    x = np.r_[rng.uniform(12, 45, 7), 3.0]
    ids = Draws(1, (2, 3), 4)
    sigma, force = obj.realize(ids)
    c = obj.spec.member_constants
    g = force[:, None] / (c * x[:7]) - sigma
    w = np.exp(g - g.max(axis=1, keepdims=True))
    w /= w.sum(axis=1, keepdims=True)
    expected = -w * force[:, None] / (c * x[:7] ** 2) / 7
    np.testing.assert_allclose(obj.gradients(x, ids)[:, :7], expected, rtol=1e-12)
    assert np.all(obj.gradients(x, ids)[:, 7] == 0)


def test_truss_logsumexp_overflow_safe():
    obj = build_truss(metric_pool_size=0).objective
    # tiny areas make g huge; the value must stay finite
    x = np.r_[np.full(7, 1e-6), 0.0]
    vals = obj.values(x, Draws(0, (0, 0), 5))
    assert np.all(np.isfinite(vals))
    g = np.array([[1e6, 1e6 - 1, -1e6]])
    assert logsumexp(g, axis=1)[0] == pytest.approx(1e6 + math.log1p(math.exp(-1)), rel=1e-15)


def test_truss_lognormal_moments():
    obj = build_truss(metric_pool_size=0).objective
    mu, s = lognormal_params(100.0, 20.0)
    assert s**2 == pytest.approx(math.log(1.04))
    assert mu == pytest.approx(math.log(100) - math.log(1.04) / 2)
    sigma, force = obj.realize(Draws(7, (0,), 1_000_000))
    assert np.mean(sigma[:, 0]) == pytest.approx(100, rel=0.01)
    assert np.std(sigma[:, 0]) == pytest.approx(20, rel=0.01)
    assert np.mean(sigma[:, 4]) == pytest.approx(200, rel=0.01)
    assert np.mean(force) == pytest.approx(1000, rel=0.01)  # kN -> internal unit is 1:1 at 1e3 mm^2
    assert np.std(force) == pytest.approx(400, rel=0.01)
    ls = np.log(sigma)
    assert np.corrcoef(ls[:, 0], ls[:, 1])[0, 1] == pytest.approx(0.8, abs=0.02)
    assert np.corrcoef(ls[:, 0], ls[:, 3])[0, 1] == pytest.approx(0.5, abs=0.02)
    assert np.corrcoef(ls[:, 2], ls[:, 6])[0, 1] == pytest.approx(0.8, abs=0.02)


def test_truss_pool_metrics_match_generic_path(rng):
    obj = build_truss(metric_pool_size=2000).objective
    x = np.r_[rng.uniform(12, 45, N_MEMBERS), 1.0]
    ids = obj.metric_ids
    np.testing.assert_allclose(obj.true_gradient(x), obj.gradients(x, ids).mean(axis=0), rtol=1e-12)
    assert obj.objective_value(x) == pytest.approx(float(obj.values(x, ids).mean()), rel=1e-12)


def test_truss_unit_invariance():
    """Changing the internal area unit rescales x but leaves the objective unchanged."""
    a = build_truss(spec=TrussProblem(), metric_pool_size=500).objective
    b = build_truss(spec=TrussProblem(area_unit_mm2=1e4), metric_pool_size=500).objective
    x_mm2 = np.array([4e4, 4e4, 1.3e4, 1.3e4, 1.3e4, 1.3e4, 1.3e4])
    va = a.objective_value(np.r_[x_mm2 / 1e3, 0.0])
    vb = b.objective_value(np.r_[x_mm2 / 1e4, 0.0])
    assert va == pytest.approx(vb, rel=1e-12)
