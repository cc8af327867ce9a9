"""Evaluation of learned reward ensembles and soft clusterings."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field

import numpy as np

from .em import RewardEnsemble, validate_responsibilities
from .errors import ValidationError
from .flow import transport
from .mdp import FeatureMap, TabularMdp, minimizing_policy, policy_evaluation, value_iteration
from .seeding import child_seeds


def evd(mdp: TabularMdp, fmap: FeatureMap, theta_gt, theta_learned, tol=1e-8, learned_fmap=None) -> float:
    """Expected value difference from the start distribution, scored under the ground-truth reward.

    Both policies are evaluated by the same exact routine, so identical
    policies give exactly zero. ``learned_fmap`` lets the learned reward live
    on a different (e.g. centered) feature map over the same MDP.
    """
    learned_fmap = fmap if learned_fmap is None else learned_fmap
    _, pi_gt = value_iteration(mdp, theta_gt, fmap, tol)
    _, pi_l = value_iteration(mdp, theta_learned, learned_fmap, tol)
    v_gt = policy_evaluation(mdp, pi_gt, theta_gt, fmap, tol)
    v_l = v_gt if np.array_equal(pi_gt.probs, pi_l.probs) else policy_evaluation(mdp, pi_l, theta_gt, fmap, tol)
    out = float(mdp.start_dist @ (v_gt - v_l))
    if -10 * tol <= out < 0:
        out = 0.0
    return out


def value_span(mdp, fmap, theta, tol=1e-8) -> float:
    """``E_{s~p0}[v_best(s) - v_worst(s)]``, the largest regret any policy can incur."""
    _, pi_best = value_iteration(mdp, theta, fmap, tol)
    v_best = policy_evaluation(mdp, pi_best, theta, fmap, tol)
    v_worst, _ = minimizing_policy(mdp, theta, fmap, tol)
    return float(mdp.start_dist @ (v_best - v_worst))


@dataclass
class GevdReport:
    pairwise_evd: np.ndarray
    flow: np.ndarray
    gevd: float
    normalizer: float
    normalized_gevd: float
    flags: list = field(default_factory=list)

    def pairings(self, min_flow=1e-9):
        """``(gt_index, learned_index, flow, evd)`` for every used pairing, costliest first."""
        rows = [
            (i, j, float(self.flow[i, j]), float(self.pairwise_evd[i, j]))
            for i, j in zip(*np.nonzero(self.flow > min_flow))
        ]
        return sorted(rows, key=lambda r: -r[2] * r[3])

    def to_dict(self):
        d = asdict(self)
        d["pairwise_evd"] = self.pairwise_evd.tolist()
        d["flow"] = self.flow.tolist()
        return d

    def table(self) -> str:
        lines = [f"GEVD {self.gevd:.4f}  normalized {self.normalized_gevd:.4f}  (normalizer {self.normalizer:.4f})",
                 "  gt  learned    flow       EVD"]
        for i, j, w, e in self.pairings():
            lines.append(f"  {i:>2}  {j:>7}  {w:7.4f}  {e:8.4f}")
        return "\n".join(lines)


def gevd(mdp, fmap, ensemble_gt: RewardEnsemble, ensemble_learned: RewardEnsemble, tol=1e-8,
         learned_fmap=None) -> GevdReport:
    """Optimal split-and-pair of two weighted reward ensembles under pairwise EVD."""
    E = np.array([
        [evd(mdp, fmap, tg, tl, tol, learned_fmap) for tl in ensemble_learned.params]
        for tg in ensemble_gt.params
    ])
    w, total = transport(ensemble_gt.weights, ensemble_learned.weights, E)
    spans = np.array([value_span(mdp, fmap, tg, tol) for tg in ensemble_gt.params])
    normalizer = float(ensemble_gt.weights @ spans)
    flags = []
    if normalizer <= 1e-12:
        flags.append("degenerate normalizer: ground-truth rewards admit no regret")
        normalized = 0.0
    else:
        normalized = total / normalizer
        if normalized > 1.0 or normalized < 0.0:
            flags.append(f"normalized GEVD {normalized:.3g} clipped to [0, 1]")
            normalized = min(max(normalized, 0.0), 1.0)
    return GevdReport(E, w, total, normalizer, normalized, flags)


# fsum is correctly rounded, so these sums do not depend on cluster order


def _entropy(p):
    p = p[p > 0]
    return -math.fsum(p * np.log(p))


def _mutual_information(joint):
    pu = np.array([math.fsum(r) for r in joint])
    pv = np.array([math.fsum(c) for c in joint.T])
    nz = joint > 0
    return math.fsum(joint[nz] * np.log(joint[nz] / np.outer(pu, pv)[nz]))


def soft_contingency(u, v):
    """Joint ``p(k, k') = (1/N) sum_i u[i, k] v[i, k']``."""
    return (u.T @ v) / u.shape[0]


def _exact_contingency(u, v):
    # entrywise fsum: invariant to column order and to swapping u and v, bit for bit
    return np.array([[math.fsum(a * b) for b in v.T] for a in u.T]) / u.shape[0]


@dataclass
class AnidReport:
    mutual_information: float
    entropy_u: float
    entropy_v: float
    expected_mi: float
    expected_mi_stderr: float
    anid: float
    mc_samples: int
    mc_seed: int
    flags: list = field(default_factory=list)

    def to_dict(self):
        return asdict(self)


def _dirichlet_rows(rng, n, k):
    if k == 1:
        return np.ones((n, 1))
    return rng.dirichlet(np.full(k, 1.0 / k), size=n)


def expected_random_mi(n, k1, k2, samples, seed):
    """Monte Carlo mean and standard error of the MI between random soft clusterings.

    Rows are drawn from ``Dirichlet(1/K)``. The smaller-K matrix is always drawn
    first, so swapping the argument order reproduces the same samples.
    """
    ka, kb = sorted((k1, k2))
    vals = np.empty(samples)
    for i, s in enumerate(child_seeds(seed, samples)):
        rng = np.random.default_rng(s)
        a = _dirichlet_rows(rng, n, ka)
        b = _dirichlet_rows(rng, n, kb)
        vals[i] = _mutual_information(soft_contingency(a, b))
    stderr = float(vals.std(ddof=1) / np.sqrt(samples)) if samples > 1 else 0.0
    return float(vals.mean()), stderr


def anid(u, v, mc_samples=1000, mc_seed=0) -> AnidReport:
    """Chance-adjusted max-normalized information distance between two soft clusterings."""
    u = validate_responsibilities(u)
    v = validate_responsibilities(v)
    if u.shape[0] != v.shape[0]:
        raise ValidationError(f"clusterings cover different item counts ({u.shape[0]} vs {v.shape[0]})")
    joint = _exact_contingency(u, v)
    mi = _mutual_information(joint)
    hu = _entropy(np.array([math.fsum(r) for r in joint]))
    hv = _entropy(np.array([math.fsum(c) for c in joint.T]))
    emi, stderr = expected_random_mi(u.shape[0], u.shape[1], v.shape[1], mc_samples, mc_seed)
    flags = []
    denom = max(hu, hv) - emi
    if denom <= 1e-12:
        flags.append("degenerate denominator: both clusterings carry no information")
        value = 0.0
    else:
        value = 1.0 - (mi - emi) / denom
        if not 0.0 <= value <= 1.0:
            value = min(max(value, 0.0), 1.0)
    return AnidReport(mi, hu, hv, emi, stderr, value, mc_samples, mc_seed, flags)
