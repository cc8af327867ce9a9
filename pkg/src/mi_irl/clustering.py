"""Feature-space clustering used to warm-start EM."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ValidationError
from .seeding import child_seeds


@dataclass
class KMeansResult:
    labels: np.ndarray
    centers: np.ndarray
    inertia: float
    iterations: int
    repaired: bool = False


def _sq_dists(X, C):
    return ((X[:, None, :] - C[None, :, :]) ** 2).sum(axis=2)


def kmeans_plusplus(X, K, rng):
    """k-means++ seeding: each new center drawn with probability proportional to D^2."""
    N = X.shape[0]
    centers = [X[rng.integers(N)]]
    for _ in range(1, K):
        d2 = _sq_dists(X, np.array(centers)).min(axis=1)
        total = d2.sum()
        idx = rng.integers(N) if total <= 0 else rng.choice(N, p=d2 / total)
        centers.append(X[idx])
    return np.array(centers, dtype=float)


def _lloyd(X, centers, max_iter):
    K = centers.shape[0]
    labels = None
    repaired = False
    for it in range(1, max_iter + 1):
        d2 = _sq_dists(X, centers)
        new_labels = d2.argmin(axis=1)
        counts = np.bincount(new_labels, minlength=K)
        for k in np.flatnonzero(counts == 0):
            # empty cluster: re-seed at the point farthest from its current center
            far = int(d2[np.arange(len(X)), new_labels].argmax())
            centers[k] = X[far]
            d2 = _sq_dists(X, centers)
            new_labels = d2.argmin(axis=1)
            repaired = True
        if labels is not None and np.array_equal(labels, new_labels):
            break
        labels = new_labels
        for k in range(K):
            members = labels == k
            if members.any():
                centers[k] = X[members].mean(axis=0)
    inertia = float(_sq_dists(X, centers)[np.arange(len(X)), labels].sum())
    return KMeansResult(labels, centers, inertia, it, repaired)


def kmeans(X, K, seed, n_init=10, max_iter=300) -> KMeansResult:
    """Lloyd's algorithm from ``n_init`` k-means++ seedings; keeps the lowest inertia."""
    X = np.asarray(X, dtype=float)
    if not 1 <= K <= X.shape[0]:
        raise ValidationError(f"need 1 <= K <= N, got K={K}, N={X.shape[0]}")
    best = None
    for s in child_seeds(seed, n_init):
        res = _lloyd(X, kmeans_plusplus(X, K, np.random.default_rng(s)), max_iter)
        if best is None or res.inertia < best.inertia - 1e-12:
            best = res
    return best


@dataclass
class GmmResult:
    responsibilities: np.ndarray
    means: np.ndarray
    variances: np.ndarray
    weights: np.ndarray
    log_likelihood: float
    iterations: int
    converged: bool


def _diag_log_density(X, means, variances):
    return -0.5 * (
        (((X[:, None, :] - means[None]) ** 2) / variances[None]).sum(axis=2)
        + np.log(2 * np.pi * variances).sum(axis=1)[None]
    )


def gaussian_mixture(X, K, seed, var_floor=1e-6, max_iter=200, tol=1e-8) -> GmmResult:
    """Diagonal-covariance Gaussian mixture fitted by EM, initialized from k-means."""
    X = np.asarray(X, dtype=float)
    N, F = X.shape
    km = kmeans(X, K, seed)
    resp = np.eye(K)[km.labels]
    prev = -np.inf
    ll = -np.inf
    converged = False
    for it in range(1, max_iter + 1):
        nk = resp.sum(axis=0) + 1e-12
        weights = nk / N
        means = (resp.T @ X) / nk[:, None]
        variances = np.maximum((resp.T @ X**2) / nk[:, None] - means**2, var_floor)
        log_joint = np.log(weights)[None] + _diag_log_density(X, means, variances)
        m = log_joint.max(axis=1, keepdims=True)
        log_norm = m[:, 0] + np.log(np.exp(log_joint - m).sum(axis=1))
        resp = np.exp(log_joint - log_norm[:, None])
        ll = float(log_norm.sum())
        if abs(ll - prev) <= tol * max(1.0, abs(ll)):
            converged = True
            break
        prev = ll
    return GmmResult(resp, means, variances, weights, ll, it, converged)
