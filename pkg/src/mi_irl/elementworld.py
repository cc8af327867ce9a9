"""ElementWorld: a seeded cylindrical gridworld with one reward intent per element.

Row 0 is the start row, row ``height - 1`` holds the terminal goals, and the
rows in between are split into ``num_elements`` lanes whose boundaries jitter
from row to row. The x-axis wraps around.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .em import RewardEnsemble
from .errors import ValidationError
from .mdp import FeatureMap, Policy, TabularMdp, sample_trajectories, value_iteration
from .seeding import child_seed, child_seeds

START, GOAL = 0, 1
# action order: up, down, left, right
MOVES = ((1, 0), (-1, 0), (0, -1), (0, 1))
ELEMENT_COST = -1.0
OTHER_ELEMENT_COST = -10.0


@dataclass(frozen=True)
class ElementWorldConfig:
    num_elements: int = 3
    wind: float = 0.1
    height: int = 6
    width: int | None = None
    seed: int = 0
    gamma: float = 0.99
    cluster_weights: tuple | None = None
    horizon: int | None = None

    def __post_init__(self):
        if self.num_elements < 1:
            raise ValidationError("num_elements must be >= 1")
        if not 0.0 <= self.wind <= 1.0:
            raise ValidationError("wind must lie in [0, 1]")
        if self.height < 3:
            raise ValidationError("height must be >= 3")
        if self.width is not None and self.width < self.num_elements:
            raise ValidationError(f"width {self.width} cannot hold {self.num_elements} element lanes")
        if self.cluster_weights is not None:
            w = np.asarray(self.cluster_weights, dtype=float)
            if w.shape != (self.num_elements,) or np.any(w < 0) or abs(w.sum() - 1) > 1e-9:
                raise ValidationError("cluster_weights must be a probability vector of length num_elements")
            object.__setattr__(self, "cluster_weights", tuple(float(x) for x in w))

    @property
    def grid_width(self) -> int:
        return 4 * self.num_elements if self.width is None else self.width

    @property
    def max_len(self) -> int:
        return 3 * self.height if self.horizon is None else self.horizon

    @property
    def weights(self) -> np.ndarray:
        if self.cluster_weights is None:
            return np.full(self.num_elements, 1.0 / self.num_elements)
        return np.asarray(self.cluster_weights)


@dataclass(frozen=True, eq=False)
class ElementWorldInstance:
    config: ElementWorldConfig
    mdp: TabularMdp
    fmap: FeatureMap
    ground_truth: RewardEnsemble
    cell_types: np.ndarray  # (height, width) ints: 0 start, 1 goal, 2 + j element j
    state_features: np.ndarray = field(repr=False)

    @property
    def height(self):
        return self.cell_types.shape[0]

    @property
    def width(self):
        return self.cell_types.shape[1]

    def state_index(self, row, col):
        return row * self.width + col

    def render(self) -> str:
        """Plain-text grid, top row first: ``S`` start, ``G`` goal, digits for elements."""
        chars = {START: "S", GOAL: "G"}
        lines = []
        for row in self.cell_types[::-1]:
            lines.append("".join(chars.get(c, str(c - 2 + 1)) for c in row))
        return "\n".join(lines)


def intent_params(num_elements: int, k: int) -> np.ndarray:
    theta = np.full(num_elements + 2, OTHER_ELEMENT_COST)
    theta[START] = ELEMENT_COST
    theta[GOAL] = 0.0
    theta[2 + k] = ELEMENT_COST
    return theta


def geometric_weights(p: float, num_elements: int) -> np.ndarray:
    """Normalized ``rho_k ~ p (1 - p)^k``; ``p = 0`` is taken as its uniform limit."""
    if not 0.0 <= p < 1.0:
        raise ValidationError("p must lie in [0, 1)")
    if p == 0.0:
        return np.full(num_elements, 1.0 / num_elements)
    w = p * (1.0 - p) ** np.arange(num_elements)
    return w / w.sum()


def _lane_row(rng, num_elements, width):
    base = (np.arange(num_elements) * width) // num_elements
    b = base + rng.integers(-1, 2, size=num_elements)
    if np.any(np.diff(np.r_[b, b[0] + width]) < 1):
        b = base
    ends = np.r_[b[1:], b[0] + width]
    row = np.empty(width, dtype=int)
    for j in range(num_elements):
        row[np.arange(b[j], ends[j]) % width] = 2 + j
    return row


def generate(config: ElementWorldConfig) -> ElementWorldInstance:
    E, h, W = config.num_elements, config.height, config.grid_width
    rng = np.random.default_rng(child_seed(config.seed, 0))

    cell_types = np.empty((h, W), dtype=int)
    cell_types[0] = START
    cell_types[h - 1] = GOAL
    for r in range(1, h - 1):
        cell_types[r] = _lane_row(rng, E, W)

    S, A = h * W, len(MOVES)
    dest = np.empty((S, A), dtype=int)
    for r in range(h):
        for c in range(W):
            for a, (dr, dc) in enumerate(MOVES):
                r2 = r + dr
                dest[r * W + c, a] = r * W + c if not 0 <= r2 < h else r2 * W + (c + dc) % W

    T = np.zeros((S, A, S))
    s_idx = np.arange(S)
    for a in range(A):
        T[s_idx, a, dest[:, a]] += 1.0 - config.wind
        for b in range(A):
            T[s_idx, a, dest[:, b]] += config.wind / A
    goals = [h * W - W + c for c in range(W)]
    T[goals] = 0.0
    T[goals, :, goals] = 1.0

    p0 = np.zeros(S)
    p0[:W] = 1.0 / W
    mdp = TabularMdp(T, p0, config.gamma, frozenset(goals))

    state_features = np.zeros((S, E + 2))
    state_features[s_idx, cell_types.reshape(-1)] = 1.0
    fmap = FeatureMap.from_state_features(state_features, A)

    gt = RewardEnsemble(config.weights, np.array([intent_params(E, k) for k in range(E)]))
    return ElementWorldInstance(config, mdp, fmap, gt, cell_types, state_features)


def intent_policies(instance: ElementWorldInstance, tol=1e-8):
    """Optimal stochastic (uniform-over-ties) policy for every ground-truth intent."""
    return [value_iteration(instance.mdp, theta, instance.fmap, tol)[1] for theta in instance.ground_truth.params]


def make_dataset(instance: ElementWorldInstance, n, seed, cluster_weights=None, policies=None, max_len=None):
    """Sample ``n`` demonstrations from the ground-truth intent mixture.

    Returns ``(trajectories, labels)``.
    """
    if n < 1:
        raise ValidationError("n must be >= 1")
    weights = instance.config.weights if cluster_weights is None else np.asarray(cluster_weights, dtype=float)
    E = instance.config.num_elements
    if weights.shape != (E,) or np.any(weights < 0) or abs(weights.sum() - 1) > 1e-9:
        raise ValidationError("cluster_weights must be a probability vector over intents")
    max_len = instance.config.max_len if max_len is None else max_len
    if policies is None:
        policies = intent_policies(instance)

    label_seed, *traj_seeds = child_seeds(seed, E + 1)
    labels = np.random.default_rng(label_seed).choice(E, size=n, p=weights)
    trajs = [None] * n
    for k in range(E):
        idx = np.flatnonzero(labels == k)
        if idx.size == 0:
            continue
        for i, t in zip(idx, sample_trajectories(instance.mdp, policies[k], idx.size, max_len, traj_seeds[k])):
            trajs[i] = t
    return trajs, labels
