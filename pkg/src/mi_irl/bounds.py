"""Cluster-separation diagnostics and the warm-start epsilon-optimality bound.

Given trajectory feature vectors labelled by the intent that can generate
them, ``assess_assumptions`` measures the separation margins, cluster radii,
atypical mass and clustering error that the mean-initialization bound is
stated in, and records which assumption clauses hold. ``warmstart_bound``
turns those constants into the bound on the first E-step's responsibility
change, which ``verify_bound_on_instance`` compares with the observed change.

Intent label ``-1`` marks a trajectory no expert generates; it counts
towards every intent's complement set.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, field

import numpy as np
from scipy.optimize import linear_sum_assignment

from .em import e_step, responsibility_change, warmstart
from .errors import ValidationError
from .maxent import MaxEntModel, enumerate_trajectories
from .mdp import FeatureMap, Policy, TabularMdp, Trajectory, log_base_measure

LOG_OVERFLOW = 700.0


def separation_margin(probe, set_a, set_b) -> float:
    """Largest ``g`` such that ``probe . (a - b) >= g`` for every ``a`` in A and ``b`` in B."""
    probe = np.asarray(probe, dtype=float)
    A = np.atleast_2d(np.asarray(set_a, dtype=float))
    B = np.atleast_2d(np.asarray(set_b, dtype=float))
    if A.size == 0 or B.size == 0:
        raise ValidationError("both sets must be non-empty")
    if A.shape[1] != probe.size or B.shape[1] != probe.size:
        raise ValidationError("probe and set dimensions differ")
    return float((A @ probe).min() - (B @ probe).max())


def _margins(probes, A, B):
    """Vectorized ``separation_margin`` for each row of ``probes``."""
    if len(A) == 0 or len(B) == 0:
        return np.full(len(probes), np.inf)
    return (probes @ A.T).min(axis=1) - (probes @ B.T).max(axis=1)


def mean_intercluster_margin(features, labels) -> float:
    """Mean over intent pairs of the smallest feature distance between their trajectories."""
    X = np.asarray(features, dtype=float)
    labels = np.asarray(labels)
    ks = np.unique(labels[labels >= 0])
    vals = []
    for i, a in enumerate(ks):
        for b in ks[i + 1:]:
            d = np.linalg.norm(X[labels == a][:, None, :] - X[labels == b][None, :, :], axis=2)
            vals.append(d.min())
    return float(np.mean(vals)) if vals else float("nan")


@dataclass
class SeparationReport:
    d: float
    gamma_margin: float
    zeta: float
    delta: float
    radii: np.ndarray
    d_tilde: float
    gamma_tilde: float
    cluster_masses: np.ndarray  # Q_k per cluster (matched intent)
    complement_masses: np.ndarray  # Q_~k per cluster
    phi_bar: np.ndarray  # mean feature of each cluster
    cluster_sizes: np.ndarray
    cluster_to_intent: np.ndarray
    checks: dict = field(default_factory=dict)
    q_source: str = "empirical"
    cone_angles: np.ndarray | None = None
    beta: float = float("nan")
    epsilon_bound: float = float("nan")

    @property
    def certified(self) -> bool:
        return all(self.checks.values())

    def to_dict(self):
        d = asdict(self)
        for k, v in d.items():
            if isinstance(v, np.ndarray):
                d[k] = v.tolist()
        d["certified"] = self.certified
        return d

    def summary(self) -> str:
        lines = [f"d={self.d:.4g} gamma={self.gamma_margin:.4g} zeta={self.zeta:.4g} delta={self.delta:.4g} "
                 f"(Q: {self.q_source})",
                 f"beta={self.beta:.4g} epsilon bound={self.epsilon_bound:.4g}"]
        for name, ok in self.checks.items():
            lines.append(f"  [{'ok' if ok else 'VIOLATED'}] {name}")
        return "\n".join(lines)


def _typical_split(X, intents, atypical_fraction):
    """Per intent, mark the ``atypical_fraction`` of trajectories with the weakest margin as atypical."""
    typical = np.ones(len(X), dtype=bool)
    if atypical_fraction <= 0:
        return typical
    for k in np.unique(intents[intents >= 0]):
        idx = np.flatnonzero(intents == k)
        m = _margins(X[idx], X[idx], X[intents != k])
        n_drop = int(np.floor(atypical_fraction * idx.size))
        if n_drop:
            typical[idx[np.argsort(m, kind="stable")[:n_drop]]] = False
    return typical


def assess_assumptions(features, intents, clusters=None, typical=None, atypical_fraction=0.0, q=None):
    """Measure the separation constants on a labelled set of trajectory features.

    ``features``: ``(N, F)`` trajectory features. ``intents``: generating
    intent per row (``-1`` for none). ``clusters``: clustering partition of
    the rows that received a cluster (``-1`` for rows outside the clustered
    dataset); defaults to the intents themselves. ``typical``: boolean mask;
    by default built by dropping ``atypical_fraction`` of each intent.
    ``q``: base-measure mass per row; without it every row weighs the same
    and the report is marked empirical.
    """
    X = np.asarray(features, dtype=float)
    intents = np.asarray(intents, dtype=int)
    ks = np.unique(intents[intents >= 0])
    K = ks.size
    if K < 1 or not np.array_equal(ks, np.arange(K)):
        raise ValidationError("intents must be labelled 0..K-1 (or -1)")
    clusters = intents.copy() if clusters is None else np.asarray(clusters, dtype=int)
    typical = _typical_split(X, intents, atypical_fraction) if typical is None else np.asarray(typical, bool)
    q_source = "empirical" if q is None else "exact"
    q = np.ones(len(X)) / len(X) if q is None else np.asarray(q, dtype=float)

    plus = [np.flatnonzero((intents == k) & typical) for k in range(K)]
    minus = [np.flatnonzero((intents == k) & ~typical) for k in range(K)]
    other = [np.flatnonzero(intents != k) for k in range(K)]
    if any(p.size == 0 for p in plus):
        raise ValidationError("every intent needs at least one typical trajectory")

    Q = np.array([q[intents == k].sum() for k in range(K)])
    Q_minus = np.array([q[m].sum() for m in minus])
    zeta = float(np.max(Q_minus / Q))

    d = min(_margins(X[plus[k]], X[plus[k]], X[other[k]]).min() for k in range(K))
    gamma = min(_margins(X[plus[k]], X[plus[k]], X[minus[k]]).min() for k in range(K))
    radii = np.array([
        0.5 * np.linalg.norm(X[p][:, None] - X[p][None], axis=2).max() for p in plus
    ])

    atypical_ok = True
    for k in range(K):
        if minus[k].size:
            P = X[minus[k]]
            atypical_ok &= bool(np.all(_margins(P, X[plus[k]], X[other[k]]) >= -d))
            atypical_ok &= bool(np.all(_margins(P, X[plus[k]], X[minus[k]]) >= -gamma))

    ball_ok = True
    if np.isfinite(d):
        for k in range(K):
            norms = np.linalg.norm(X[plus[k]], axis=1)
            bound = np.min(np.where(norms > 0, d / (2 * np.maximum(norms, 1e-300)), np.inf))
            ball_ok &= bool(radii[k] < bound)

    # clustering: match clusters to intents by overlap, then measure misfits
    c_ids = np.unique(clusters[clusters >= 0])
    overlap = np.array([[np.sum((clusters == c) & (intents == k)) for k in range(K)] for c in c_ids])
    rows, cols = linear_sum_assignment(-overlap)
    c_to_k = np.full(c_ids.size, -1)
    c_to_k[rows] = cols
    sizes = np.array([np.sum(clusters == c) for c in c_ids])
    phi_bar = np.array([X[clusters == c].mean(axis=0) for c in c_ids])
    delta = 0.0
    misfit_ok = True
    for ci, c in enumerate(c_ids):
        members = np.flatnonzero(clusters == c)
        k = c_to_k[ci]
        if k < 0:
            delta = 1.0
            misfit_ok = False
            continue
        bad = members[~((intents[members] == k) & typical[members])]
        delta = max(delta, bad.size / members.size)
        if bad.size:
            misfit_ok &= bool(np.all(_margins(X[bad], X[plus[k]], X[other[k]]) >= -d))
            misfit_ok &= bool(np.all(_margins(X[bad], X[plus[k]], X[minus[k]]) >= -gamma))

    matched = np.where(c_to_k >= 0, c_to_k, 0)
    total_q = q.sum()
    checks = {
        "separation: atypical mass zeta < 1/2": zeta < 0.5,
        "separation: typical trajectories separate with d > 0": bool(d > 0),
        "separation: typical trajectories separate atypical ones with gamma > 0": bool(gamma > 0),
        "separation: atypical trajectories overlap by at most d and gamma": atypical_ok,
        "compactness: typical sets fit in balls of radius r_k < d / (2|phi|)": ball_ok,
        "clustering: error delta < 1/2": delta < 0.5,
        "clustering: misclustered trajectories overlap by at most d and gamma": misfit_ok,
        "clusters match intents one-to-one": bool(np.all(c_to_k >= 0) and c_ids.size == K),
    }
    norms = np.linalg.norm(phi_bar, axis=1)
    r_c = radii[matched]
    with np.errstate(divide="ignore", invalid="ignore"):
        angles = np.arcsin(np.clip(np.where(norms > 0, r_c / norms, np.nan), -1, 1))
    return SeparationReport(
        d=float(d),
        gamma_margin=float(gamma),
        zeta=zeta,
        delta=float(delta),
        radii=r_c,
        d_tilde=float((1 - 2 * delta) * d),
        gamma_tilde=float((1 - 2 * delta) * gamma),
        cluster_masses=Q[matched],
        complement_masses=total_q - Q[matched],
        phi_bar=phi_bar,
        cluster_sizes=sizes,
        cluster_to_intent=c_to_k,
        checks=checks,
        q_source=q_source,
        cone_angles=angles,
    )


def _log_beta_pair(k, kp, zeta, d_t, g_t, sizes, Q, Q_c, radii, phi_norms):
    log1mz = np.log1p(-zeta)
    # typical-vs-atypical factor (1-z)^2 e^g / (z + (1-z) e^g), written to survive g = inf
    if zeta == 0:
        f1 = 0.0
    else:
        f1 = 2 * log1mz - np.logaddexp(np.log(zeta) - g_t, log1mz)
    # |C_k| (1-z) Q_k' e^d / (|C_k'| ((1-z) Q_k e^d + Q_~k)), divided through by e^d
    with np.errstate(divide="ignore"):
        f2 = (np.log(sizes[k]) + log1mz + np.log(Q[kp]) - np.log(sizes[kp])
              - np.logaddexp(log1mz + np.log(Q[k]), np.log(Q_c[k]) - d_t))
    f3 = d_t - 2 * radii[k] * phi_norms[k]
    return f1 + f2 + f3


def warmstart_bound(report: SeparationReport, cluster_sizes=None, K=None):
    """Epsilon-optimality bound of the mean-initialized warm start.

    ``epsilon = 2 delta + (1 - delta) 2 (K - 1) / (beta + K - 1)``. Beta is
    evaluated in log space; if it overflows, beta is infinite and epsilon
    reduces to ``2 delta``. Returns ``(epsilon, beta)`` and stores both on
    the report.
    """
    sizes = np.asarray(report.cluster_sizes if cluster_sizes is None else cluster_sizes, dtype=float)
    K = sizes.size if K is None else K
    if K < 2:
        report.beta, report.epsilon_bound = float("inf"), 2 * report.delta
        return report.epsilon_bound, report.beta
    phi_norms = np.linalg.norm(report.phi_bar, axis=1)
    log_beta = min(
        _log_beta_pair(k, kp, report.zeta, report.d_tilde, report.gamma_tilde, sizes,
                       report.cluster_masses, report.complement_masses, report.radii, phi_norms)
        for k in range(K) for kp in range(K) if k != kp
    )
    beta = float("inf") if log_beta > LOG_OVERFLOW else float(np.exp(log_beta))
    delta = report.delta
    eps = 2 * delta if np.isinf(beta) else 2 * delta + (1 - delta) * 2 * (K - 1) / (beta + K - 1)
    report.beta, report.epsilon_bound = beta, float(eps)
    return report.epsilon_bound, report.beta


def epsilon_from_constants(beta, delta, K):
    """The bound as a plain function of its constants."""
    if np.isinf(beta):
        return 2 * delta
    return 2 * delta + (1 - delta) * 2 * (K - 1) / (beta + K - 1)


def trajectory_owners(traj: Trajectory, policies):
    """Indices of the policies that assign the trajectory positive probability."""
    return [k for k, pi in enumerate(policies)
            if all(pi.probs[s, a] > 0 for s, a in zip(traj.states[:-1], traj.actions))]


def population_sets(model: MaxEntModel, policies, limit=200):
    """Enumerate the trajectory class and label each trajectory by its generating policy.

    Returns ``(features, intents, q)`` or ``None`` when the class is larger
    than ``limit``. A trajectory several policies can generate is listed once
    per owner.
    """
    feats, owners, qs = [], [], []
    for i, t in enumerate(enumerate_trajectories(model.mdp, model.horizon)):
        if i >= limit:
            return None
        phi = model.features([t])[0]
        lq = np.exp(log_base_measure(model.mdp, t))
        for k in trajectory_owners(t, policies) or [-1]:
            feats.append(phi)
            owners.append(k)
            qs.append(lq)
    return np.array(feats), np.array(owners), np.array(qs)


@dataclass
class BoundCheck:
    epsilon_bound: float
    observed_change: float
    guaranteed: bool
    report: SeparationReport | None

    @property
    def holds(self):
        return self.observed_change <= self.epsilon_bound + 1e-12


def verify_bound_on_instance(model: MaxEntModel, trajs, K, seed, labels, policies=None, limit=200):
    """Compare the first E-step's responsibility change after mean warm start with the bound.

    With expert ``policies`` and an enumerable trajectory class, the
    separation constants and masses are measured on the full class (exact
    ``q``); otherwise on the demonstrations themselves.
    """
    features = model.features(trajs)
    labels = np.asarray(labels, dtype=int)
    ensemble, u0 = warmstart(model, trajs, K, "kmeans", "mean", seed, features=features)
    observed = responsibility_change(e_step(ensemble, model, trajs, features=features), u0)
    if K == 1:
        return BoundCheck(0.0, observed, True, None)

    cluster_of_row = u0.argmax(axis=1)
    pop = population_sets(model, policies, limit) if policies is not None else None
    if pop is None:
        report = assess_assumptions(features, labels, cluster_of_row)
    else:
        pf, pi, pq = pop
        # demonstrations are appended so the clustering error is measured on them
        X = np.vstack([pf, features])
        intents = np.r_[pi, labels]
        clusters = np.r_[np.full(len(pf), -1), cluster_of_row]
        q = np.r_[pq, np.zeros(len(features))]
        report = assess_assumptions(X, intents, clusters, q=q)
    eps, _ = warmstart_bound(report)
    return BoundCheck(eps, observed, report.certified, report)


def separated_bandit(K, arms_per_intent, scale, jitter, seed, gamma=0.9):
    """One-step MDP whose arms carry features ``scale * e_k + noise`` for intent ``k``.

    Returns ``(mdp, fmap, policies)``; policy ``k`` is uniform over intent ``k``'s arms.
    """
    rng = np.random.default_rng(seed)
    n_arms = K * arms_per_intent
    S = n_arms + 1
    T = np.zeros((S, n_arms, S))
    T[0, np.arange(n_arms), 1 + np.arange(n_arms)] = 1.0
    T[1:, :, :] = 0.0
    T[np.arange(1, S), :, np.arange(1, S)] = 1.0
    p0 = np.zeros(S)
    p0[0] = 1.0
    mdp = TabularMdp(T, p0, gamma, frozenset(range(1, S)))
    values = np.zeros((S, n_arms, S, K))
    probs = np.zeros((K, S, n_arms))
    for a in range(n_arms):
        k = a // arms_per_intent
        values[0, a, 1 + a] = scale * np.eye(K)[k] + jitter * rng.uniform(-1, 1, size=K)
        probs[k, 0, a] = 1.0 / arms_per_intent
    probs[:, 1:, :] = 1.0 / n_arms
    return mdp, FeatureMap(values), [Policy(p) for p in probs]
