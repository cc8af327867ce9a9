import numpy as np
import pytest

from mi_irl.errors import ValidationError
from mi_irl.mdp import (
    FeatureMap,
    Policy,
    TabularMdp,
    Trajectory,
    discounted_length,
    log_base_measure,
    minimizing_policy,
    policy_evaluation,
    sample_trajectories,
    trajectory_features,
    value_iteration,
)

from conftest import random_problem
from oracles import best_deterministic_value, policy_values_by_iteration, traj_phi, traj_q


def chain(gamma=0.9):
    # 0 -a0-> 1 -a0-> 2 (terminal); a1 stays put
    T = np.zeros((3, 2, 3))
    T[0, 0, 1] = T[1, 0, 2] = 1.0
    T[0, 1, 0] = T[1, 1, 1] = 1.0
    T[2, :, 2] = 1.0
    return TabularMdp(T, np.array([1.0, 0, 0]), gamma, {2})


def test_rejects_bad_inputs():
    T = np.full((2, 1, 2), 0.5)
    with pytest.raises(ValidationError):
        TabularMdp(T * 2, np.array([1.0, 0]), 0.9)
    with pytest.raises(ValidationError):
        TabularMdp(T, np.array([0.5, 0.4]), 0.9)
    with pytest.raises(ValidationError):
        TabularMdp(T, np.array([1.0, 0]), 1.0)
    with pytest.raises(ValidationError):
        TabularMdp(T, np.array([1.0, 0]), 0.9, {1})  # not absorbing
    with pytest.raises(ValidationError):
        Policy(np.array([[0.5, 0.6]]))
    with pytest.raises(ValidationError):
        FeatureMap(np.zeros((2, 1, 3, 1)))


def test_trajectory_validation():
    mdp = chain()
    Trajectory([0, 1, 2], [0, 0]).validate(mdp, 5)
    with pytest.raises(ValidationError):
        Trajectory([0, 2], [0]).validate(mdp, 5)  # impossible transition
    with pytest.raises(ValidationError):
        Trajectory([0, 1], [0]).validate(mdp, 5)  # stops early
    with pytest.raises(ValidationError):
        Trajectory([0, 0, 0], [1, 1]).validate(mdp, 2)  # too long
    Trajectory([0, 0], [1]).validate(mdp, 2)


def test_features_and_base_measure_match_loops():
    for seed in range(10):
        mdp, fmap, _, rng = random_problem(seed, S=4, A=2)
        s = [int(rng.choice(4, p=mdp.start_dist))]
        a = []
        for _ in range(4):
            a.append(int(rng.integers(2)))
            s.append(int(rng.choice(4, p=mdp.transition[s[-1], a[-1]])))
        t = Trajectory(s, a)
        np.testing.assert_allclose(trajectory_features(mdp, fmap, t), traj_phi(fmap.values, mdp.discount, s, a),
                                   atol=1e-12)
        assert log_base_measure(mdp, t) == pytest.approx(np.log(traj_q(mdp.transition, mdp.start_dist, s, a)))
        assert discounted_length(mdp, t) == pytest.approx(sum(mdp.discount**k for k in range(4)))


def test_value_iteration_matches_best_deterministic_policy():
    for seed in range(12):
        mdp, fmap, _, rng = random_problem(seed, S=3, A=2, F=2)
        theta = rng.normal(size=2)
        R = fmap.rewards(theta)
        T, p0, g, term = mdp.transition, mdp.start_dist, mdp.discount, set(mdp.terminal_states)
        v, pi = value_iteration(mdp, theta, fmap, tol=1e-10)
        assert p0 @ v == pytest.approx(best_deterministic_value(T, p0, g, term, R), abs=1e-6)
        v_pi = policy_values_by_iteration(T, p0, g, term, R, pi.probs)
        np.testing.assert_allclose(v_pi, v, atol=1e-6)
        v_min, _ = minimizing_policy(mdp, theta, fmap, tol=1e-10)
        assert p0 @ v_min == pytest.approx(best_deterministic_value(T, p0, g, term, R, sign=-1), abs=1e-6)


def test_policy_evaluation_matches_iteration():
    for seed in range(10):
        mdp, fmap, _, rng = random_problem(seed, S=4, A=3, F=2)
        probs = rng.dirichlet(np.ones(3), size=4)
        theta = rng.normal(size=2)
        v = policy_evaluation(mdp, Policy(probs), theta, fmap)
        oracle = policy_values_by_iteration(mdp.transition, mdp.start_dist, mdp.discount,
                                            set(mdp.terminal_states), fmap.rewards(theta), probs)
        np.testing.assert_allclose(v, oracle, atol=1e-8)


def test_ties_are_uniform():
    mdp = chain()
    fmap = FeatureMap(np.zeros((3, 2, 3, 1)))
    _, pi = value_iteration(mdp, np.zeros(1), fmap)
    np.testing.assert_allclose(pi.probs, 0.5)


def test_terminal_states_earn_nothing():
    mdp = chain(0.5)
    fmap = FeatureMap(np.ones((3, 2, 3, 1)))
    v, pi = value_iteration(mdp, np.array([1.0]), fmap)
    assert v[2] == 0.0
    # staying forever earns 1 / (1 - 0.5) = 2 from state 0
    assert v[0] == pytest.approx(2.0, abs=1e-6)
    # from state 1, leaving earns 1 but staying earns 2
    assert pi.probs[1, 1] == 1.0
    np.testing.assert_allclose(pi.probs[0], 0.5)


def test_sampling_frequencies_follow_q():
    mdp = chain()
    pi = Policy(np.array([[0.7, 0.3], [0.2, 0.8], [0.5, 0.5]]))
    trajs = sample_trajectories(mdp, pi, 20000, 3, seed=4)
    counts = {}
    for t in trajs:
        t.validate(mdp, 3)
        counts[(tuple(t.states), tuple(t.actions))] = counts.get((tuple(t.states), tuple(t.actions)), 0) + 1
    expected = {((0, 1, 2), (0, 0)): 0.7 * 0.2, ((0, 1, 1), (0, 1)): 0.7 * 0.8,
                ((0, 0, 1), (1, 0)): 0.3 * 0.7, ((0, 0, 0), (1, 1)): 0.3 * 0.3}
    assert set(counts) == set(expected)
    for k, p in expected.items():
        assert counts[k] / 20000 == pytest.approx(p, abs=0.015)


def test_sampling_is_seeded():
    mdp = chain()
    pi = Policy.uniform(3, 2)
    a = sample_trajectories(mdp, pi, 50, 4, seed=9)
    b = sample_trajectories(mdp, pi, 50, 4, seed=9)
    assert [t.states for t in a] == [t.states for t in b]
