"""Exact maximum-entropy trajectory model over finite-horizon tabular MDPs.

``p(tau | theta) = q(tau) exp(theta . phi(tau)) / Z(theta)`` where ``q`` is the
dynamics base measure and the trajectory class holds every feasible episode
that either enters a terminal state or reaches ``horizon`` states.

Forward and backward messages are time-indexed because the discount enters
the per-step weight, and both run in log space over the nonzero transitions
only, which keeps gridworld-sized problems cheap.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import NumericalError, ValidationError
from .mdp import FeatureMap, TabularMdp, Trajectory, feature_matrix, log_base_measure


def _segment_logsumexp(x, starts, seg_ids):
    m = np.maximum.reduceat(x, starts)
    m = np.where(np.isfinite(m), m, 0.0)
    with np.errstate(divide="ignore"):
        return np.log(np.add.reduceat(np.exp(x - m[seg_ids]), starts)) + m


def _logsumexp(x):
    m = np.max(x)
    if not np.isfinite(m):
        return m
    return float(np.log(np.sum(np.exp(x - m))) + m)


class MaxEntModel:
    """Precomputed sparse transition structure for one (MDP, feature map, horizon)."""

    def __init__(self, mdp: TabularMdp, fmap: FeatureMap, horizon: int):
        fmap.check_compatible(mdp)
        if horizon < 1:
            raise ValidationError("horizon must be at least 1")
        self.mdp = mdp
        self.fmap = fmap
        self.horizon = int(horizon)

        # edges sorted by (src, action, dst); every state owns >= 1 edge
        src, act, dst = np.nonzero(mdp.transition)
        self._src, self._act, self._dst = src, act, dst
        with np.errstate(divide="ignore"):
            self._log_p = np.log(mdp.transition[src, act, dst])
            self._log_p0 = np.log(mdp.start_dist)
        self._phi = fmap.values[src, act, dst]
        self._src_starts = np.flatnonzero(np.r_[True, src[1:] != src[:-1]])
        self._src_seg = np.cumsum(np.r_[False, src[1:] != src[:-1]])
        self._src_ids = src[self._src_starts]
        self._src_live = ~mdp.terminal_mask[src]

        order = np.argsort(dst, kind="stable")
        d_sorted = dst[order]
        self._dst_order = order
        self._dst_starts = np.flatnonzero(np.r_[True, d_sorted[1:] != d_sorted[:-1]])
        self._dst_ids = d_sorted[self._dst_starts]
        self._dst_seg = np.cumsum(np.r_[False, d_sorted[1:] != d_sorted[:-1]])
        self._disc = mdp.discount ** np.arange(max(self.horizon - 1, 0))

    @property
    def dim(self):
        return self.fmap.dim

    def features(self, trajs: Sequence[Trajectory]) -> np.ndarray:
        return feature_matrix(self.mdp, self.fmap, trajs)

    def log_base_measures(self, trajs: Sequence[Trajectory]) -> np.ndarray:
        return np.array([log_base_measure(self.mdp, t) for t in trajs])

    def with_features(self, fmap: FeatureMap) -> "MaxEntModel":
        return MaxEntModel(self.mdp, fmap, self.horizon)

    def check_trajectory(self, traj: Trajectory):
        """Reject trajectories outside the model's trajectory class."""
        traj.validate(self.mdp, self.horizon)

    def _edge_rewards(self, theta):
        theta = np.asarray(theta, dtype=float)
        if theta.shape != (self.dim,):
            raise ValidationError(f"theta has shape {theta.shape}, expected ({self.dim},)")
        if not np.all(np.isfinite(theta)):
            raise ValidationError("theta must be finite")
        return self._phi @ theta

    def _backward(self, r):
        """``log_beta[t, s]``: log weight of all completions from state ``s`` at position ``t``."""
        L, S = self.horizon, self.mdp.num_states
        log_beta = np.zeros((L, S))
        term = self.mdp.terminal_mask
        for t in range(L - 2, -1, -1):
            x = self._log_p + self._disc[t] * r + log_beta[t + 1, self._dst]
            lb = np.zeros(S)
            lb[self._src_ids] = _segment_logsumexp(x, self._src_starts, self._src_seg)
            lb[term] = 0.0
            log_beta[t] = lb
        return log_beta

    def _forward(self, r):
        """``log_alpha[t, s]``: log weight of feasible prefixes sitting at ``s`` at position ``t``."""
        L, S = self.horizon, self.mdp.num_states
        log_alpha = np.full((L, S), -np.inf)
        log_alpha[0] = self._log_p0
        for t in range(L - 1):
            la_src = np.where(self._src_live, log_alpha[t, self._src], -np.inf)
            x = (la_src + self._log_p + self._disc[t] * r)[self._dst_order]
            nxt = np.full(S, -np.inf)
            nxt[self._dst_ids] = _segment_logsumexp(x, self._dst_starts, self._dst_seg)
            log_alpha[t + 1] = nxt
        return log_alpha

    def log_partition(self, theta) -> float:
        r = self._edge_rewards(theta)
        log_beta = self._backward(r)
        out = _logsumexp(self._log_p0 + log_beta[0])
        if not np.isfinite(out):
            raise NumericalError(f"log partition is not finite ({out})")
        return out

    def log_partition_and_expectation(self, theta):
        """Return ``(ln Z(theta), E[phi(tau)])`` from one forward-backward sweep."""
        r = self._edge_rewards(theta)
        log_beta = self._backward(r)
        log_z = _logsumexp(self._log_p0 + log_beta[0])
        if not np.isfinite(log_z):
            raise NumericalError(f"log partition is not finite ({log_z})")
        log_alpha = self._forward(r)
        occupancy = np.zeros_like(r)
        base = self._log_p - log_z
        for t in range(self.horizon - 1):
            la_src = np.where(self._src_live, log_alpha[t, self._src], -np.inf)
            occupancy += self._disc[t] * np.exp(la_src + base + self._disc[t] * r + log_beta[t + 1, self._dst])
        return log_z, occupancy @ self._phi


def log_partition(model: MaxEntModel, theta) -> float:
    return model.log_partition(theta)


def expected_features(model: MaxEntModel, theta) -> np.ndarray:
    """``E_{tau ~ p(.|theta)}[phi(tau)]``, the gradient of ``ln Z``."""
    return model.log_partition_and_expectation(theta)[1]


def log_likelihood(model: MaxEntModel, theta, traj: Trajectory) -> float:
    model.check_trajectory(traj)
    theta = np.asarray(theta, dtype=float)
    return log_base_measure(model.mdp, traj) + float(model.features([traj])[0] @ theta) - model.log_partition(theta)


def enumerate_trajectories(mdp: TabularMdp, horizon: int):
    """Yield every trajectory in the class with positive base measure.

    Exponential in the horizon; meant for small verification instances.
    """
    stack = [(int(s),) for s in np.flatnonzero(mdp.start_dist > 0)]
    stack = [(states, ()) for states in stack]
    while stack:
        states, actions = stack.pop()
        s = states[-1]
        if mdp.terminal_mask[s] or len(states) == horizon:
            yield Trajectory(states, actions)
            continue
        for a in range(mdp.num_actions):
            for s2 in np.flatnonzero(mdp.transition[s, a] > 0):
                stack.append((states + (int(s2),), actions + (a,)))


@dataclass
class FitOptions:
    tol: float = 1e-5
    max_iters: int = 500
    l2: float = 0.0
    armijo: float = 1e-4


@dataclass
class FitResult:
    theta: np.ndarray
    objective: float
    grad_norm: float
    iterations: int
    converged: bool


def weighted_objective(model, features, weights, theta, l2=0.0, log_z=None):
    """Normalized weighted log-likelihood minus the ridge term (``ln q`` omitted)."""
    w = np.asarray(weights, dtype=float)
    w = w / w.sum()
    if log_z is None:
        log_z = model.log_partition(theta)
    return float(w @ features @ theta - log_z - l2 * theta @ theta)


def fit_weighted_mle(model: MaxEntModel, trajs, weights, init_theta=None, opts: FitOptions | None = None,
                     features=None) -> FitResult:
    """Maximize ``sum_i w_i ln p(tau_i | theta) - l2 |theta|^2`` with normalized weights.

    Gradient ascent with Barzilai-Borwein step proposals and Armijo
    backtracking; every accepted step increases the objective, so a warm
    start can only improve. ``features`` may be passed to skip recomputing
    ``phi(tau_i)``.
    """
    opts = opts or FitOptions()
    w = np.asarray(weights, dtype=float)
    if features is None:
        features = model.features(trajs)
    if w.shape != (features.shape[0],):
        raise ValidationError("need exactly one weight per trajectory")
    if np.any(w < 0) or w.sum() <= 0:
        raise ValidationError("weights must be non-negative and not all zero")
    w = w / w.sum()
    target = w @ features

    theta = np.zeros(model.dim) if init_theta is None else np.array(init_theta, dtype=float)

    def evaluate(th):
        log_z, ef = model.log_partition_and_expectation(th)
        f = float(target @ th - log_z - opts.l2 * th @ th)
        return f, target - ef - 2.0 * opts.l2 * th

    f, g = evaluate(theta)
    step = 1.0 / max(1.0, np.max(np.abs(g)))
    it = 0
    while it < opts.max_iters:
        gnorm = np.max(np.abs(g))
        if gnorm <= opts.tol:
            return FitResult(theta, f, gnorm, it, True)
        it += 1
        gg = g @ g
        while True:
            cand = theta + step * g
            try:
                f_cand = float(target @ cand - model.log_partition(cand) - opts.l2 * cand @ cand)
            except NumericalError:
                f_cand = -np.inf
            if f_cand >= f + opts.armijo * step * gg:
                break
            step *= 0.5
            if step < 1e-18:
                return FitResult(theta, f, gnorm, it, False)
        f_new, g_new = evaluate(cand)
        s, y = cand - theta, g - g_new
        sy = s @ y
        theta, f, g = cand, f_new, g_new
        step = (s @ s) / sy if sy > 1e-300 else 2.0 * step
    gnorm = np.max(np.abs(g))
    return FitResult(theta, f, gnorm, it, gnorm <= opts.tol)
