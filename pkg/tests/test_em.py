import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from mi_irl.em import (
    RewardEnsemble,
    center_features,
    e_step,
    hard_responsibilities,
    m_step,
    mixture_log_likelihood,
    random_init,
    responsibility_change,
    run_em,
    supervised_baseline,
    warmstart,
)
from mi_irl.errors import ValidationError
from mi_irl.maxent import FitOptions, MaxEntModel, fit_weighted_mle, log_likelihood


@pytest.fixture(scope="module")
def setup(small_world):
    inst, policies, trajs, labels = small_world
    model = MaxEntModel(inst.mdp, inst.fmap, inst.config.max_len)
    fmap = center_features(inst.mdp, inst.fmap, trajs)
    return inst, model.with_features(fmap), trajs, labels


def test_e_step_and_likelihood_match_direct_formula(setup):
    _, model, trajs, _ = setup
    ens = random_init(model.dim, 2, seed=3)
    ll = np.array([[np.log(r) + log_likelihood(model, th, t) for r, th in zip(ens.weights, ens.params)]
                   for t in trajs[:10]])
    direct = np.exp(ll - np.logaddexp.reduce(ll, axis=1, keepdims=True))
    np.testing.assert_allclose(e_step(ens, model, trajs[:10]), direct, atol=1e-12)
    total = np.logaddexp.reduce(ll, axis=1).sum()
    assert mixture_log_likelihood(ens, model, trajs[:10]) == pytest.approx(total, rel=1e-12)


def test_centering_zeroes_mean_feature(setup):
    _, model, trajs, _ = setup
    np.testing.assert_allclose(model.features(trajs).mean(axis=0), 0.0, atol=1e-10)
    assert model.fmap.centered


def test_run_em_is_monotone_from_random_start(setup):
    _, model, trajs, _ = setup
    ens, u, trace = run_em(model, trajs, random_init(model.dim, 2, seed=0), epsilon=1e-3, max_iters=15)
    assert trace.iterations >= 1
    assert trace.is_monotone(1e-8)
    assert np.all(np.diff(trace.objectives()) >= -1e-8)
    np.testing.assert_allclose(u.sum(axis=1), 1.0)
    np.testing.assert_allclose(ens.weights, u.mean(axis=0), atol=0.2)


def test_single_component_em_is_mle(setup):
    _, model, trajs, _ = setup
    init = RewardEnsemble(np.ones(1), np.zeros((1, model.dim)))
    ens, u, trace = run_em(model, trajs, init, l2=0.0, fit_opts=FitOptions(tol=1e-8, max_iters=5000))
    ref = fit_weighted_mle(model, trajs, np.ones(len(trajs)), opts=FitOptions(tol=1e-8, max_iters=5000))
    np.testing.assert_allclose(ens.params[0], ref.theta, atol=1e-5)
    assert trace.iterations == 1 and trace.converged


def test_m_step_weights_are_column_means(setup):
    _, model, trajs, labels = setup
    u = hard_responsibilities(labels, 2) * 0.8 + 0.1
    ens = m_step(u, model, trajs, random_init(model.dim, 2, 0), fit_opts=FitOptions(max_iters=20))
    np.testing.assert_allclose(ens.weights, u.mean(axis=0))


def test_degenerate_component_keeps_parameters(setup):
    _, model, trajs, _ = setup
    prev = random_init(model.dim, 2, 1)
    u = np.zeros((len(trajs), 2))
    u[:, 0] = 1.0
    flags = []
    ens = m_step(u, model, trajs, prev, fit_opts=FitOptions(max_iters=20), flags=flags)
    np.testing.assert_array_equal(ens.params[1], prev.params[1])
    assert any("degenerate" in f for f in flags)
    assert ens.weights[1] < 1e-9


def test_warmstart_and_supervised(setup):
    _, model, trajs, labels = setup
    for method in ("kmeans", "gmm"):
        ens, u0 = warmstart(model, trajs, 2, method, "mean", seed=0)
        np.testing.assert_allclose(ens.weights, u0.mean(axis=0))
        np.testing.assert_allclose(ens.params, (u0.T @ model.features(trajs)) / u0.sum(axis=0)[:, None])
    sup = supervised_baseline(model, trajs, labels)
    np.testing.assert_allclose(sup.weights, np.bincount(labels) / len(labels))
    with pytest.raises(ValidationError):
        supervised_baseline(model, trajs, np.zeros(len(trajs), dtype=int), K=2)


def test_random_init_range():
    ens = random_init(4, 3, seed=5)
    assert np.all(np.abs(ens.params) <= 1) and np.allclose(ens.weights, 1 / 3)
    np.testing.assert_array_equal(ens.params, random_init(4, 3, seed=5).params)


def test_validation():
    with pytest.raises(ValidationError):
        RewardEnsemble(np.array([0.5, 0.6]), np.zeros((2, 2)))
    with pytest.raises(ValidationError):
        responsibility_change(np.ones((2, 1)), np.ones((3, 1)))


@settings(max_examples=50, deadline=None)
@given(st.integers(1, 20), st.integers(1, 5), st.integers(0, 10_000))
def test_responsibility_change_bounds(n, k, seed):
    rng = np.random.default_rng(seed)
    a, b = rng.dirichlet(np.ones(k), size=n), rng.dirichlet(np.ones(k), size=n)
    c = responsibility_change(a, b)
    assert 0.0 <= c <= 2.0 + 1e-12
    assert responsibility_change(a, a) == 0.0
    assert c == pytest.approx(responsibility_change(b, a))
