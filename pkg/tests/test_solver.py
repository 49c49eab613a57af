import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from asal.adaptive import SamplerConfig, ToleranceSchedule
from asal.auglag import stationarity_error
from asal.core import ConfigurationError, NumericalError
from asal.problems import random_qp
from asal.problems.qp import ExactQP
from asal.projections import Box
from asal.solver import (TRACE_FIELDS, SolverConfig, best_feasibility_iterate, post_optimization_step,
                         run_asal, run_fixed_baseline)


def noisy_qp(seed=0, n=6, m=3, noise=0.3):
    return random_qp(np.random.default_rng(seed), n, m, noise=noise)


def finite_qp(rng, n=4, m=2, N=8, box=True):
    base = random_qp(rng, n, m)
    X = Box(-2 * np.ones(n), 2 * np.ones(n)) if box else None
    return ExactQP(base.Q, base.q, base.A, base.b, feasible_set=X, noise_points=rng.standard_normal((N, n)))


def cfg(**kw):
    base = dict(alpha=1.0, eta=0.05, sampler=SamplerConfig(s_l=2, s_min=2, s_max=10**4),
                tolerance=ToleranceSchedule(tau0=1.0), initial_sample_size=4, budget_gradient_evals=20_000)
    base.update(kw)
    return SolverConfig(**base)


def test_config_validation():
    with pytest.raises(ConfigurationError):
        cfg(alpha=0.0)
    with pytest.raises(ConfigurationError):
        cfg(budget_gradient_evals=0)
    with pytest.raises(ConfigurationError):
        cfg(initial_sample_size=1)
    with pytest.raises(ConfigurationError):
        cfg(mode="fixed")
    with pytest.raises(ConfigurationError):
        cfg().fixed(1)
    with pytest.raises(ConfigurationError):
        cfg(mode="other")
    assert cfg().fixed(7).label == "fixed:7" and cfg().label == "adaptive"


def test_fixed_point_start():
    rng = np.random.default_rng(1)
    base = random_qp(rng, 5, 2)
    qp = ExactQP(base.Q, base.q, base.A, base.b, noise_points=np.zeros((6, 5)))
    x_star, lam_star = qp.kkt()
    state, trace = run_asal(qp.problem(), cfg(max_outer=5, initial_sample_size=2), x_star, lam_star)
    assert [o.inner_iters for o in trace.outer] == [1] * 5
    np.testing.assert_allclose(state.lam, lam_star, atol=1e-9)
    np.testing.assert_allclose(state.x, x_star, atol=1e-9)


def test_full_batch_outer_iteration_matches_reference():
    rng = np.random.default_rng(2)
    qp = finite_qp(rng)
    prob = qp.problem()
    N = qp.objective.population
    config = cfg(eta=0.05, alpha=0.7, max_outer=1, max_inner_per_outer=40,
                 tolerance=ToleranceSchedule(tau0=0.0)).fixed(N)
    state, trace = run_fixed_baseline(prob, config)

    # standalone projected gradient on L(., 0; alpha), one step per record
    Q, q, A, b = qp.Q, qp.q, qp.A, qp.b
    pts = qp.objective.points
    lower, upper = prob.feasible_set.lower, prob.feasible_set.upper
    x, lam = np.clip(np.zeros(4), lower, upper), np.zeros(2)
    iterates = []
    for _ in range(40):
        grads = (Q @ x + q) + pts
        g = grads.sum(axis=0) / N + A.T @ (0.7 * (A @ x - b) - lam)
        r = (np.clip(x - 0.05 * g, lower, upper) - x) / 0.05
        x = x + 0.05 * r
        iterates.append(x)
    assert trace.outer[0].inner_iters == 40
    assert trace.outer[0].x.tobytes() == iterates[-1].tobytes()
    feas = [float(np.linalg.norm(A @ v - b)) for v in iterates]
    assert trace.column("feasibility_error").tolist() == feas


def test_full_batch_baseline_equals_adaptive_at_population():
    rng = np.random.default_rng(3)
    qp = finite_qp(rng)
    N = qp.objective.population
    sampler = SamplerConfig(s_l=N, s_min=N, s_max=N)
    a = run_asal(qp.problem(), cfg(sampler=sampler, initial_sample_size=N, budget_gradient_evals=2000))[1]
    b = run_fixed_baseline(qp.problem(), cfg(sampler=sampler, initial_sample_size=N,
                                            budget_gradient_evals=2000), batch_size=N)[1]
    assert [r.row()[:7] for r in a.records] == [r.row()[:7] for r in b.records]


def test_seed_determinism():
    one = run_asal(noisy_qp().problem(), cfg(seed=5, budget_gradient_evals=5000))[1]
    two = run_asal(noisy_qp().problem(), cfg(seed=5, budget_gradient_evals=5000))[1]
    other = run_asal(noisy_qp().problem(), cfg(seed=6, budget_gradient_evals=5000))[1]
    assert [r.row() for r in one.records] == [r.row() for r in two.records]
    assert [r.row() for r in one.records] != [r.row() for r in other.records]
    assert tuple(f for f in TRACE_FIELDS) == tuple(type(one.records[0]).__dataclass_fields__)


def _check_trace_invariants(trace, config):
    cum = trace.column("cum_grad_evals")
    assert np.all(np.diff(cum) > 0)
    last = trace.records[-1].batch_size
    assert cum[-1] <= config.budget_gradient_evals + last
    for prev, cur in zip(trace.outer, trace.outer[1:]):
        assert cur.x_start.tobytes() == prev.x.tobytes()  # warm start
        assert cur.lam.tobytes() == prev.lam_next.tobytes()
    for o in trace.outer:
        if o.lam_next is not None:
            np.testing.assert_allclose(o.lam_next - o.lam, -config.alpha * o.c_val, rtol=0, atol=1e-12)
    ks = trace.column("k")
    assert np.all(np.diff(ks) >= 0)


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 1000), st.floats(0.2, 3.0), st.floats(0.01, 0.1), st.integers(500, 6000),
       st.sampled_from(["adaptive", "fixed"]))
def test_trace_invariants(seed, alpha, eta, budget, mode):
    prob = noisy_qp(seed % 7).problem()
    config = cfg(alpha=alpha, eta=eta, seed=seed, budget_gradient_evals=budget)
    if mode == "fixed":
        config = config.fixed(16)
    _, trace = run_asal(prob, config)
    _check_trace_invariants(trace, config)
    assert trace.stop_reason == "budget"


def test_finite_sum_invariants_and_batch_cap():
    rng = np.random.default_rng(4)
    qp = finite_qp(rng, N=10)
    config = cfg(sampler=SamplerConfig(s_l=2, s_min=2, s_max=100), budget_gradient_evals=3000)
    _, trace = run_asal(qp.problem(), config)
    _check_trace_invariants(trace, config)
    assert trace.column("batch_size").max() <= 10


def test_budget_stop_skips_dual_update():
    config = cfg(tolerance=ToleranceSchedule(tau0=0.0), budget_gradient_evals=400)
    state, trace = run_asal(noisy_qp().problem(), config)
    assert trace.stop_reason == "budget"
    assert len(trace.outer) == 1 and trace.outer[0].lam_next is None
    np.testing.assert_array_equal(state.lam, np.zeros(3))
    assert state.k == 0


def test_max_outer_stop():
    _, trace = run_asal(noisy_qp().problem(), cfg(max_outer=3, tolerance=ToleranceSchedule(tau0=1e6)))
    assert trace.stop_reason == "max_outer" and trace.n_outer == 3


def test_divergence_raises_numerical_error():
    with pytest.raises(NumericalError, match="outer"):
        run_asal(noisy_qp().problem(), cfg(eta=50.0, alpha=50.0))


def test_initial_point_projected():
    qp = finite_qp(np.random.default_rng(5))
    _, trace = run_asal(qp.problem(), cfg(max_outer=1), x_init=np.full(4, 10.0))
    np.testing.assert_array_equal(trace.outer[0].x_start, np.full(4, 2.0))


def test_stationarity_record_uses_next_multiplier():
    qp = noisy_qp()
    prob = qp.problem()
    config = cfg(max_outer=4)
    _, trace = run_asal(prob, config)
    for o in trace.outer:
        rec = [r for r in trace.records if r.k == o.k][-1]
        direct = stationarity_error(prob.feasible_set, prob.objective, o.x, prob.constraint, o.lam_next,
                                    config.eta)
        assert rec.stationarity_error == pytest.approx(direct, rel=1e-10)


def test_sample_size_carried_across_outer_iterations():
    _, trace = run_asal(noisy_qp(noise=2.0).problem(), cfg(budget_gradient_evals=20_000))
    recs = trace.records
    for a, b in zip(recs, recs[1:]):
        if b.k == a.k + 1:
            assert b.batch_size == trace.outer[a.k].batch_size


def test_post_optimization():
    qp = noisy_qp(noise=0.1)
    prob = qp.problem()
    config = cfg(budget_gradient_evals=20_000)
    _, trace = run_asal(prob, config)
    best = best_feasibility_iterate(trace)
    state = post_optimization_step(prob, trace, config, config.alpha, config.eta, 1e30)
    assert state.t == 1 and state.k == best.k

    state = post_optimization_step(prob, trace, config, config.alpha, config.eta, 1e-4, max_inner=2000)
    X, obj, c = prob.feasible_set, prob.objective, prob.constraint
    before = (np.linalg.norm(c(best.x)), stationarity_error(X, obj, best.x, c, best.lam_next, config.eta))
    after = (np.linalg.norm(c(state.x)), stationarity_error(X, obj, state.x, c, state.lam, config.eta))
    assert after[1] < before[1]
    np.testing.assert_allclose(state.lam, best.lam - config.alpha * c(state.x), atol=1e-12)

    # a continued run from a near-stationary point stays near-stationary
    x_sub = qp.subproblem_minimizer(best.lam, config.alpha)
    r = post_optimization_step(prob, trace, config, config.alpha, config.eta, 1e-5, max_inner=5000)
    assert np.linalg.norm(r.x - x_sub) <= 0.1
