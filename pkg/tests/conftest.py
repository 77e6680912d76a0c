import itertools

import numpy as np
import pytest

from missionplanner.mission_model import build_model
from missionplanner.presets import case_one, mission_config, single_goal
from missionplanner.solver import extract_policy, value_iteration


def brute_force_values(mdp):
    """Optimal values by evaluating every deterministic stationary policy"""
    kernels = mdp.dense_transitions()
    costs = mdp.cost_matrix()
    n = mdp.n_states
    rows = np.arange(n)
    best = np.full(n, np.inf)
    for choice in itertools.product(range(mdp.n_actions), repeat=n):
        cols = np.array(choice)
        p = kernels[cols, rows, :]
        v = np.linalg.solve(np.eye(n) - mdp.discount * p, costs[rows, cols])
        best = np.minimum(best, v)
    return best


@pytest.fixture
def oracle():
    return brute_force_values


@pytest.fixture
def single_goal_config():
    return single_goal()


@pytest.fixture
def case_one_config():
    return case_one()


@pytest.fixture(scope="session")
def single_goal_model():
    return build_model(single_goal())


@pytest.fixture(scope="session")
def two_goal_model():
    return build_model(mission_config(2))


@pytest.fixture(scope="session")
def case_one_solution():
    model = build_model(case_one())
    values, report = value_iteration(model, tolerance=1e-8)
    return model, values, extract_policy(model, values)
