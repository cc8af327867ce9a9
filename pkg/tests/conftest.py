import numpy as np
import pytest

from mi_irl.elementworld import ElementWorldConfig, generate, intent_policies, make_dataset
from mi_irl.mdp import FeatureMap, TabularMdp

from oracles import random_mdp_arrays


def random_problem(seed, S=None, A=None, F=None, horizon=None):
    """Random small MDP, transition feature map and horizon for oracle comparisons."""
    rng = np.random.default_rng(seed)
    S = S or int(rng.integers(1, 6))
    A = A or int(rng.integers(1, 4))
    F = F or int(rng.integers(1, 4))
    T, p0, gamma, terminals = random_mdp_arrays(rng, S, A)
    phi = rng.normal(size=(S, A, S, F))
    horizon = horizon or int(rng.integers(1, 6))
    return TabularMdp(T, p0, gamma, frozenset(terminals)), FeatureMap(phi), horizon, rng


@pytest.fixture(scope="session")
def small_world():
    inst = generate(ElementWorldConfig(num_elements=2, wind=0.1, height=4, seed=3))
    policies = intent_policies(inst)
    trajs, labels = make_dataset(inst, 40, seed=11, policies=policies)
    return inst, policies, trajs, labels


ACCEPTANCE_LINES = []


@pytest.fixture(scope="session")
def acceptance_log():
    """Collects one summary line per acceptance criterion, echoed after the run."""
    return ACCEPTANCE_LINES


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
