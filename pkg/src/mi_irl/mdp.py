"""Tabular MDPs, transition features, exact planning and trajectory sampling.

Conventions used throughout the package:

* ``transition[s, a, s2]`` is ``p(s2 | s, a)``.
* Terminal states are absorbing and episode-ending. Entering a terminal
  state is a regular transition (it earns its reward); nothing is earned
  afterwards, so terminal state values are pinned to zero.
* Rewards are linear in transition features, ``R(s, a, s2) = theta . phi(s, a, s2)``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import ConvergenceError, ValidationError

PROB_ATOL = 1e-9


@dataclass(frozen=True, eq=False)
class TabularMdp:
    transition: np.ndarray
    start_dist: np.ndarray
    discount: float
    terminal_states: frozenset = frozenset()

    def __post_init__(self):
        T = np.asarray(self.transition, dtype=float)
        p0 = np.asarray(self.start_dist, dtype=float)
        object.__setattr__(self, "transition", T)
        object.__setattr__(self, "start_dist", p0)
        object.__setattr__(self, "terminal_states", frozenset(int(s) for s in self.terminal_states))
        object.__setattr__(self, "discount", float(self.discount))
        if T.ndim != 3 or T.shape[0] != T.shape[2] or T.shape[0] < 1 or T.shape[1] < 1:
            raise ValidationError(f"transition must have shape (S, A, S), got {T.shape}")
        S = T.shape[0]
        if np.any(T < 0) or not np.allclose(T.sum(axis=2), 1.0, atol=PROB_ATOL, rtol=0):
            raise ValidationError("every transition row T[s, a, :] must be a probability vector")
        if p0.shape != (S,) or np.any(p0 < 0) or abs(p0.sum() - 1.0) > PROB_ATOL:
            raise ValidationError("start_dist must be a probability vector over states")
        if not 0.0 <= self.discount < 1.0:
            raise ValidationError(f"discount must lie in [0, 1), got {self.discount}")
        for s in self.terminal_states:
            if not 0 <= s < S:
                raise ValidationError(f"terminal state {s} out of range")
            if not np.allclose(T[s, :, s], 1.0, atol=PROB_ATOL, rtol=0):
                raise ValidationError(f"terminal state {s} is not absorbing")
        T.setflags(write=False)
        p0.setflags(write=False)
        mask = np.zeros(S, dtype=bool)
        mask[list(self.terminal_states)] = True
        mask.setflags(write=False)
        object.__setattr__(self, "_terminal_mask", mask)

    @property
    def num_states(self) -> int:
        return self.transition.shape[0]

    @property
    def num_actions(self) -> int:
        return self.transition.shape[1]

    @property
    def terminal_mask(self) -> np.ndarray:
        return self._terminal_mask


@dataclass(frozen=True, eq=False)
class FeatureMap:
    """Transition features ``values[s, a, s2, :]``.

    ``centered`` records that the map was shifted so that a particular
    dataset has zero mean trajectory feature (see ``em.center_features``).
    """

    values: np.ndarray
    centered: bool = False

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.ndim != 4 or v.shape[0] != v.shape[2] or v.shape[3] < 1:
            raise ValidationError(f"feature values must have shape (S, A, S, F), got {v.shape}")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    @classmethod
    def from_state_features(cls, state_features, num_actions, centered=False):
        """Broadcast per-state features ``phi(s2)`` over ``(s, a)``."""
        sf = np.asarray(state_features, dtype=float)
        S, F = sf.shape
        values = np.broadcast_to(sf[None, None, :, :], (S, num_actions, S, F)).copy()
        return cls(values, centered=centered)

    @property
    def dim(self) -> int:
        return self.values.shape[3]

    def rewards(self, theta) -> np.ndarray:
        """Reward tensor ``R[s, a, s2]`` for parameters ``theta``."""
        theta = np.asarray(theta, dtype=float)
        if theta.shape != (self.dim,):
            raise ValidationError(f"theta has shape {theta.shape}, expected ({self.dim},)")
        return self.values @ theta

    def check_compatible(self, mdp: TabularMdp):
        if self.values.shape[:3] != mdp.transition.shape:
            raise ValidationError(
                f"feature map covers {self.values.shape[:3]} transitions, MDP has {mdp.transition.shape}"
            )


@dataclass(frozen=True)
class Trajectory:
    states: tuple
    actions: tuple

    def __post_init__(self):
        object.__setattr__(self, "states", tuple(int(s) for s in self.states))
        object.__setattr__(self, "actions", tuple(int(a) for a in self.actions))
        if len(self.states) < 1 or len(self.actions) != len(self.states) - 1:
            raise ValidationError("a trajectory needs n >= 1 states and n - 1 actions")

    def __len__(self):
        return len(self.states)

    def transitions(self):
        return zip(self.states[:-1], self.actions, self.states[1:])

    def validate(self, mdp: TabularMdp, max_len: int | None = None):
        """Raise ``ValidationError`` unless the trajectory is feasible and well-terminated."""
        n = len(self.states)
        if max_len is not None and n > max_len:
            raise ValidationError(f"trajectory length {n} exceeds horizon {max_len}")
        S, A = mdp.num_states, mdp.num_actions
        if any(not 0 <= s < S for s in self.states) or any(not 0 <= a < A for a in self.actions):
            raise ValidationError("state or action index out of range")
        if any(mdp.terminal_mask[s] for s in self.states[:-1]):
            raise ValidationError("trajectory continues past a terminal state")
        if max_len is not None and n < max_len and not mdp.terminal_mask[self.states[-1]]:
            raise ValidationError("trajectory stops early at a non-terminal state")
        for s, a, s2 in self.transitions():
            if mdp.transition[s, a, s2] <= 0:
                raise ValidationError(f"zero-probability transition ({s}, {a}, {s2})")


@dataclass(frozen=True, eq=False)
class Policy:
    probs: np.ndarray

    def __post_init__(self):
        p = np.asarray(self.probs, dtype=float)
        if p.ndim != 2 or np.any(p < 0) or not np.allclose(p.sum(axis=1), 1.0, atol=PROB_ATOL, rtol=0):
            raise ValidationError("policy rows must be probability vectors")
        p.setflags(write=False)
        object.__setattr__(self, "probs", p)

    @classmethod
    def uniform(cls, num_states, num_actions):
        return cls(np.full((num_states, num_actions), 1.0 / num_actions))

    def support(self) -> np.ndarray:
        return self.probs > 0


def discount_weights(mdp: TabularMdp, length: int) -> np.ndarray:
    """``gamma ** t`` for ``t = 0 .. length - 1``."""
    return mdp.discount ** np.arange(length)


def trajectory_features(mdp: TabularMdp, fmap: FeatureMap, traj: Trajectory) -> np.ndarray:
    fmap.check_compatible(mdp)
    n = len(traj) - 1
    if n == 0:
        return np.zeros(fmap.dim)
    s = np.asarray(traj.states)
    a = np.asarray(traj.actions)
    per_step = fmap.values[s[:-1], a, s[1:]]
    return discount_weights(mdp, n) @ per_step


def feature_matrix(mdp: TabularMdp, fmap: FeatureMap, trajs: Sequence[Trajectory]) -> np.ndarray:
    """Stack ``trajectory_features`` for a dataset into an ``(N, F)`` array."""
    return np.array([trajectory_features(mdp, fmap, t) for t in trajs]).reshape(len(trajs), fmap.dim)


def discounted_length(mdp: TabularMdp, traj: Trajectory) -> float:
    return float(discount_weights(mdp, len(traj) - 1).sum())


def log_base_measure(mdp: TabularMdp, traj: Trajectory) -> float:
    """``ln q(tau) = ln p0(s1) + sum_t ln T(s_{t+1} | s_t, a_t)``."""
    with np.errstate(divide="ignore"):
        out = np.log(mdp.start_dist[traj.states[0]])
        for s, a, s2 in traj.transitions():
            out += np.log(mdp.transition[s, a, s2])
    return float(out)


def _expected_step_reward(mdp, theta, fmap):
    fmap.check_compatible(mdp)
    r = np.einsum("ijk,ijk->ij", mdp.transition, fmap.rewards(theta))
    r[mdp.terminal_mask] = 0.0
    return r


def _bellman_q(mdp, r_sa, v):
    q = r_sa + mdp.discount * (mdp.transition @ v)
    q[mdp.terminal_mask] = 0.0
    return q


def _greedy_policy(q, tie_tol):
    best = q.max(axis=1, keepdims=True)
    ties = q >= best - tie_tol
    return Policy(ties / ties.sum(axis=1, keepdims=True))


def value_iteration(mdp, reward_params, fmap, tol=1e-8, max_iters=100_000, tie_tol=None):
    """Optimal state values and the uniform-over-ties greedy policy.

    Iterates the Bellman optimality operator until successive values differ by
    at most ``tol`` in the max norm. Actions whose Q-value is within
    ``tie_tol`` of the best are treated as tied; the default
    ``2 * tol / (1 - gamma)`` covers the value error left at convergence.

    Returns ``(values, policy)``.
    """
    if tol <= 0:
        raise ValidationError("tol must be positive")
    if tie_tol is None:
        tie_tol = max(tol, 2.0 * tol / (1.0 - mdp.discount))
    r_sa = _expected_step_reward(mdp, reward_params, fmap)
    v = np.zeros(mdp.num_states)
    residual = np.inf
    for _ in range(max_iters):
        v_new = _bellman_q(mdp, r_sa, v).max(axis=1)
        residual = np.max(np.abs(v_new - v))
        v = v_new
        if residual <= tol:
            return v, _greedy_policy(_bellman_q(mdp, r_sa, v), tie_tol)
    raise ConvergenceError(
        f"value iteration did not converge in {max_iters} iterations (residual {residual:.3g})",
        residual=residual,
        iterations=max_iters,
    )


def minimizing_policy(mdp, reward_params, fmap, tol=1e-8, max_iters=100_000, tie_tol=None):
    """Policy minimizing the reward, with values evaluated under the original reward."""
    _, policy = value_iteration(mdp, -np.asarray(reward_params, dtype=float), fmap, tol, max_iters, tie_tol)
    return policy_evaluation(mdp, policy, reward_params, fmap, tol), policy


def policy_evaluation(mdp, policy: Policy, reward_params, fmap, tol=1e-8):
    """State values of ``policy`` under ``R = theta . phi``.

    Solves the Bellman expectation equations directly (terminal values fixed
    at zero) and checks the fixed-point residual against ``tol``.
    """
    if policy.probs.shape != (mdp.num_states, mdp.num_actions):
        raise ValidationError("policy shape does not match the MDP")
    r_sa = _expected_step_reward(mdp, reward_params, fmap)
    pi = policy.probs
    live = ~mdp.terminal_mask
    P = np.einsum("sa,sat->st", pi, mdp.transition)[np.ix_(live, live)]
    r = (pi * r_sa).sum(axis=1)[live]
    v = np.zeros(mdp.num_states)
    if live.any():
        v[live] = np.linalg.solve(np.eye(P.shape[0]) - mdp.discount * P, r)
    residual = np.max(np.abs(_policy_backup(mdp, pi, r_sa, v) - v))
    if not residual <= tol:
        raise ConvergenceError(f"policy evaluation residual {residual:.3g} exceeds tol", residual=residual)
    return v


def _policy_backup(mdp, pi, r_sa, v):
    return (pi * _bellman_q(mdp, r_sa, v)).sum(axis=1)


def _categorical(rng, cdf_rows):
    u = rng.random(cdf_rows.shape[0])
    idx = (cdf_rows < u[:, None]).sum(axis=1)
    return np.minimum(idx, cdf_rows.shape[1] - 1)


def sample_trajectories(mdp, policy: Policy, n, max_len, seed):
    """Sample ``n`` i.i.d. episodes, stopping at terminal states or at ``max_len`` states."""
    if n < 1 or max_len < 1:
        raise ValidationError("n and max_len must be at least 1")
    rng = np.random.default_rng(seed)
    start_cdf = np.cumsum(mdp.start_dist)
    pi_cdf = np.cumsum(policy.probs, axis=1)
    T_cdf = np.cumsum(mdp.transition, axis=2)

    states = np.full((n, max_len), -1, dtype=np.int64)
    actions = np.full((n, max_len - 1), -1, dtype=np.int64)
    lengths = np.ones(n, dtype=np.int64)
    states[:, 0] = _categorical(rng, np.broadcast_to(start_cdf, (n, mdp.num_states)))
    alive = ~mdp.terminal_mask[states[:, 0]]
    for t in range(max_len - 1):
        idx = np.flatnonzero(alive)
        if idx.size == 0:
            break
        s = states[idx, t]
        a = _categorical(rng, pi_cdf[s])
        s2 = _categorical(rng, T_cdf[s, a])
        actions[idx, t] = a
        states[idx, t + 1] = s2
        lengths[idx] += 1
        alive[idx] = ~mdp.terminal_mask[s2]
    return [Trajectory(states[i, : lengths[i]], actions[i, : lengths[i] - 1]) for i in range(n)]
