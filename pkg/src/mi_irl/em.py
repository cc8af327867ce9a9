"""Multiple-intent EM over MaxEnt reward components, with clustering warm starts.

Rows of a responsibility matrix ``u`` are demonstrations, columns are mixture
components. The E-step never evaluates the dynamics term ``q(tau)``: it is
shared by every component and cancels in the row normalization.

With a ridge penalty ``l2`` the quantity EM ascends is

    sum_i ln sum_k rho_k p(tau_i | theta_k)  -  N * l2 * sum_k |theta_k|^2

and each component fit uses ``l2 / rho_k`` on its normalized objective so the
M-step maximizes exactly that. ``EmTrace`` records it as ``objective``.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from .clustering import gaussian_mixture, kmeans
from .errors import ValidationError
from .maxent import FitOptions, MaxEntModel, fit_weighted_mle
from .mdp import FeatureMap, TabularMdp, discount_weights, feature_matrix

DEGENERATE_MASS = 1e-12
DEFAULT_L2 = 1e-4


@dataclass(frozen=True, eq=False)
class RewardEnsemble:
    """Mixture weights ``rho`` and one reward parameter vector per component."""

    weights: np.ndarray
    params: np.ndarray

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=float)
        p = np.atleast_2d(np.asarray(self.params, dtype=float))
        if w.ndim != 1 or p.shape[0] != w.shape[0]:
            raise ValidationError("need one parameter vector per mixture weight")
        if np.any(w < 0) or abs(w.sum() - 1.0) > 1e-9:
            raise ValidationError("ensemble weights must be non-negative and sum to 1")
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "params", p)

    @property
    def num_components(self) -> int:
        return self.weights.shape[0]

    def permuted(self, order):
        order = list(order)
        return RewardEnsemble(self.weights[order], self.params[order])

    def to_dict(self):
        return {"weights": self.weights.tolist(), "params": self.params.tolist()}

    @classmethod
    def from_dict(cls, d):
        return cls(np.asarray(d["weights"], dtype=float), np.asarray(d["params"], dtype=float))


def validate_responsibilities(u):
    u = np.asarray(u, dtype=float)
    if u.ndim != 2 or np.any(u < 0) or not np.allclose(u.sum(axis=1), 1.0, atol=1e-9, rtol=0):
        raise ValidationError("responsibility rows must be probability vectors")
    return u


def hard_responsibilities(labels, K=None):
    labels = np.asarray(labels, dtype=int)
    K = labels.max() + 1 if K is None else K
    return np.eye(K)[labels]


@dataclass
class EmRecord:
    iteration: int
    ensemble: RewardEnsemble
    change: float
    log_likelihood: float
    objective: float
    nll: float
    wall_time_s: float
    flags: list = field(default_factory=list)


@dataclass
class EmTrace:
    records: list = field(default_factory=list)
    initial: dict = field(default_factory=dict)
    converged: bool = False

    @property
    def iterations(self):
        return len(self.records)

    def objectives(self):
        return np.array([self.initial["objective"]] + [r.objective for r in self.records])

    def log_likelihoods(self):
        return np.array([self.initial["log_likelihood"]] + [r.log_likelihood for r in self.records])

    def is_monotone(self, atol=1e-8):
        return bool(np.all(np.diff(self.objectives()) >= -atol))

    def to_dict(self):
        return {
            "converged": self.converged,
            "initial": self.initial,
            "records": [
                {
                    "iteration": r.iteration,
                    "ensemble": r.ensemble.to_dict(),
                    "change": r.change,
                    "log_likelihood": r.log_likelihood,
                    "objective": r.objective,
                    "nll": r.nll,
                    "wall_time_s": r.wall_time_s,
                    "flags": r.flags,
                }
                for r in self.records
            ],
        }


def _log_joint(ensemble, model, features):
    with np.errstate(divide="ignore"):
        log_rho = np.log(ensemble.weights)
    log_z = np.array([model.log_partition(th) for th in ensemble.params])
    return log_rho[None, :] + features @ ensemble.params.T - log_z[None, :]


def _normalize_rows(log_joint):
    m = log_joint.max(axis=1, keepdims=True)
    bad = ~np.isfinite(m[:, 0])
    m[bad] = 0.0
    log_norm = m[:, 0] + np.log(np.exp(log_joint - m).sum(axis=1))
    with np.errstate(invalid="ignore"):
        u = np.exp(log_joint - log_norm[:, None])
    bad |= ~np.all(np.isfinite(u), axis=1)
    if bad.any():
        u[bad] = 1.0 / log_joint.shape[1]
    return u, log_norm, np.flatnonzero(bad)


def e_step(ensemble: RewardEnsemble, model: MaxEntModel, trajs, features=None) -> np.ndarray:
    """Posterior intent memberships ``u[i, k] ~ rho_k exp(theta_k . phi_i - ln Z(theta_k))``."""
    if features is None:
        if len(trajs) == 0:
            raise ValidationError("need at least one trajectory")
        features = model.features(trajs)
    return _normalize_rows(_log_joint(ensemble, model, features))[0]


def mixture_log_likelihood(ensemble, model, trajs, features=None, log_q=None):
    """Total ``sum_i ln p(tau_i | ensemble)`` including the dynamics term."""
    if features is None:
        features = model.features(trajs)
    if log_q is None:
        log_q = model.log_base_measures(trajs)
    _, log_norm, _ = _normalize_rows(_log_joint(ensemble, model, features))
    return float(log_norm.sum() + log_q.sum())


def responsibility_change(u_new, u_old) -> float:
    """Mean over demonstrations of the L1 change in responsibilities; lies in [0, 2]."""
    u_new = np.asarray(u_new, dtype=float)
    u_old = np.asarray(u_old, dtype=float)
    if u_new.shape != u_old.shape:
        raise ValidationError(f"shape mismatch {u_new.shape} vs {u_old.shape}")
    return float(np.abs(u_new - u_old).sum() / u_new.shape[0])


def _fit_component(model, features, weights, init_theta, l2, fit_opts):
    opts = FitOptions(**{**vars(fit_opts or FitOptions()), "l2": l2})
    return fit_weighted_mle(model, None, weights, init_theta, opts, features=features)


def m_step(u, model: MaxEntModel, trajs, prev_ensemble: RewardEnsemble, features=None,
           l2=DEFAULT_L2, fit_opts=None, flags=None) -> RewardEnsemble:
    """Closed-form mixture weights plus a warm-started weighted MLE per component."""
    u = validate_responsibilities(u)
    if features is None:
        features = model.features(trajs)
    N, K = u.shape
    mass = u.sum(axis=0)
    rho = mass / N
    params = prev_ensemble.params.copy()
    for k in range(K):
        if mass[k] < DEGENERATE_MASS:
            rho[k] = DEGENERATE_MASS
            if flags is not None:
                flags.append(f"degenerate component {k}: kept previous parameters")
            continue
        res = _fit_component(model, features, u[:, k], params[k], l2 / rho[k], fit_opts)
        if not res.converged and flags is not None:
            flags.append(f"component {k}: fit stopped at gradient norm {res.grad_norm:.2e}")
        params[k] = res.theta
    return RewardEnsemble(rho / rho.sum(), params)


def _penalized(log_lik, ensemble, N, l2):
    return log_lik - N * l2 * float((ensemble.params**2).sum())


def run_em(model: MaxEntModel, trajs, init: RewardEnsemble, epsilon=1e-2, max_iters=100,
           l2=DEFAULT_L2, fit_opts=None, init_u=None):
    """Alternate E- and M-steps until the responsibility change drops below ``epsilon``.

    Iteration ``t`` refits the ensemble from the current responsibilities,
    recomputes them and compares. ``init_u`` (e.g. warm-start memberships) is
    only used to report the change of the very first E-step.

    Returns ``(ensemble, responsibilities, trace)``.
    """
    if epsilon <= 0:
        raise ValidationError("epsilon must be positive")
    features = model.features(trajs)
    log_q_sum = float(model.log_base_measures(trajs).sum())
    N = features.shape[0]

    t0 = time.perf_counter()
    ensemble = init
    u, log_norm, bad = _normalize_rows(_log_joint(ensemble, model, features))
    ll = float(log_norm.sum()) + log_q_sum
    trace = EmTrace()
    trace.initial = {
        "ensemble": ensemble.to_dict(),
        "log_likelihood": ll,
        "objective": _penalized(ll, ensemble, N, l2),
        "change_from_init_u": None if init_u is None else responsibility_change(u, init_u),
    }
    for it in range(1, max_iters + 1):
        flags = [f"uniform fallback for rows {bad.tolist()}"] if bad.size else []
        ensemble = m_step(u, model, trajs, ensemble, features, l2, fit_opts, flags)
        u_new, log_norm, bad = _normalize_rows(_log_joint(ensemble, model, features))
        change = responsibility_change(u_new, u)
        ll = float(log_norm.sum()) + log_q_sum
        trace.records.append(
            EmRecord(it, ensemble, change, ll, _penalized(ll, ensemble, N, l2), -ll / N,
                     time.perf_counter() - t0, flags)
        )
        u = u_new
        if change < epsilon:
            trace.converged = True
            break
    return ensemble, u, trace


def center_features(mdp: TabularMdp, fmap: FeatureMap, trajs) -> FeatureMap:
    """Shift every transition feature by one constant so the dataset mean of ``phi(tau)`` is zero.

    The shift is the mean trajectory feature divided by the mean discounted
    trajectory length.
    """
    if len(trajs) == 0:
        raise ValidationError("need at least one trajectory")
    phi = feature_matrix(mdp, fmap, trajs)
    lengths = np.array([discount_weights(mdp, len(t) - 1).sum() for t in trajs])
    if lengths.mean() <= 0:
        return FeatureMap(fmap.values, centered=True)
    shift = phi.mean(axis=0) / lengths.mean()
    return FeatureMap(fmap.values - shift, centered=True)


def _cluster(features, K, method, seed):
    if method == "kmeans":
        return hard_responsibilities(kmeans(features, K, seed).labels, K)
    if method == "gmm":
        return gaussian_mixture(features, K, seed).responsibilities
    raise ValidationError(f"unknown clustering method {method!r}")


def ensemble_from_memberships(model, features, u, init="mean", l2=DEFAULT_L2, fit_opts=None):
    """Mixture weights from column means of ``u``; parameters by weighted mean or weighted MLE."""
    N, K = u.shape
    mass = u.sum(axis=0)
    if np.any(mass <= 0):
        raise ValidationError("every component needs positive membership mass")
    rho = mass / N
    if init == "mean":
        params = (u.T @ features) / mass[:, None]
    elif init == "mle":
        params = np.array([
            _fit_component(model, features, u[:, k], None, l2 / rho[k], fit_opts).theta for k in range(K)
        ])
    else:
        raise ValidationError(f"unknown init {init!r}")
    return RewardEnsemble(rho, params)


def warmstart(model: MaxEntModel, trajs, K, method="kmeans", init="mean", seed=0, l2=DEFAULT_L2,
              fit_opts=None, features=None):
    """Cluster demonstrations in feature space and derive an initial ensemble.

    Returns ``(ensemble, memberships)``.
    """
    if features is None:
        features = model.features(trajs)
    if not 1 <= K <= features.shape[0]:
        raise ValidationError(f"need 1 <= K <= N, got K={K}")
    u0 = _cluster(features, K, method, seed)
    return ensemble_from_memberships(model, features, u0, init, l2, fit_opts), u0


def random_init(dim, K, seed) -> RewardEnsemble:
    """Parameters uniform on ``[-1, 1]^F`` and uniform mixture weights."""
    rng = np.random.default_rng(seed)
    return RewardEnsemble(np.full(K, 1.0 / K), rng.uniform(-1.0, 1.0, size=(K, dim)))


def supervised_baseline(model: MaxEntModel, trajs, labels, K=None, l2=DEFAULT_L2, fit_opts=None,
                        features=None) -> RewardEnsemble:
    """Per-label MLE fits with mixture weights equal to label frequencies."""
    labels = np.asarray(labels, dtype=int)
    K = int(labels.max()) + 1 if K is None else K
    if np.any(labels < 0) or np.any(labels >= K):
        raise ValidationError("labels must be intent indices in [0, K)")
    counts = np.bincount(labels, minlength=K)
    if np.any(counts == 0):
        raise ValidationError(f"empty label class(es): {np.flatnonzero(counts == 0).tolist()}")
    if features is None:
        features = model.features(trajs)
    return ensemble_from_memberships(model, features, hard_responsibilities(labels, K), "mle", l2, fit_opts)
