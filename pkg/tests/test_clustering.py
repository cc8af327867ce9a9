import numpy as np
import pytest

from mi_irl.clustering import gaussian_mixture, kmeans

from oracles import kmeans_optimal_inertia


@pytest.mark.parametrize("seed", range(5))
def test_kmeans_reaches_brute_force_optimum(seed):
    rng = np.random.default_rng(seed)
    X = np.vstack([rng.normal(c, 0.3, size=(3, 2)) for c in ([0, 0], [3, 0], [0, 3])])
    res = kmeans(X, 3, seed=seed)
    assert res.inertia == pytest.approx(kmeans_optimal_inertia(X, 3), rel=1e-9)


def test_kmeans_handles_duplicates_and_is_deterministic():
    X = np.array([[0.0, 0], [0, 0], [0, 0], [1, 1]])
    res = kmeans(X, 3, seed=0)
    assert len(set(res.labels.tolist())) == 3 or res.repaired
    again = kmeans(X, 3, seed=0)
    np.testing.assert_array_equal(res.labels, again.labels)


def test_gmm_recovers_separated_components():
    rng = np.random.default_rng(1)
    X = np.vstack([rng.normal(0, 0.5, size=(100, 2)), rng.normal(5, 0.5, size=(50, 2))])
    res = gaussian_mixture(X, 2, seed=0)
    np.testing.assert_allclose(res.responsibilities.sum(axis=1), 1.0)
    assert sorted(np.round(res.weights, 1).tolist()) == [0.3, 0.7]
    assert np.all(res.variances >= 1e-6)


def test_gmm_variance_floor_on_point_mass():
    X = np.vstack([np.zeros((5, 2)), np.ones((5, 2))])
    res = gaussian_mixture(X, 2, seed=0)
    assert np.all(np.isfinite(res.responsibilities))
    assert np.all(res.variances >= 1e-6)
