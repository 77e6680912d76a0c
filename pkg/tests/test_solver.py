import numpy as np
import pytest
from scipy import sparse

from missionplanner.errors import ContractError
from missionplanner.mdp import TabularMdp, random_tabular_mdp
from missionplanner.solver import (
    action_values,
    bellman_residual,
    bellman_sweeps,
    evaluate_policy,
    extract_policy,
    state_action_values,
    value_iteration,
)


def test_value_iteration_matches_policy_enumeration(oracle):
    rng = np.random.default_rng(2024)
    for _ in range(100):
        mdp = random_tabular_mdp(rng, int(rng.integers(2, 7)), int(rng.integers(2, 4)), discount=0.9)
        values, report = value_iteration(mdp, tolerance=1e-10)
        assert report.converged
        best = oracle(mdp)
        np.testing.assert_allclose(values.values, best, atol=1e-6)
        # the greedy policy attains the optimum
        achieved = evaluate_policy(mdp, extract_policy(mdp, values))
        np.testing.assert_allclose(achieved.values, best, atol=1e-6)


def test_single_goal_convergence_is_monotone(single_goal_model):
    values, report = value_iteration(single_goal_model, tolerance=1e-6)
    assert report.converged
    history = report.residual_history
    assert all(b <= a + 1e-12 for a, b in zip(history, history[1:]))
    assert report.final_residual < 1e-6
    assert bellman_residual(single_goal_model, values) < 1e-5


def test_ties_go_to_lowest_action_id():
    costs = np.array([[1.0, 1.0, 1.0]])
    loop = sparse.csr_matrix(np.array([[1.0]]))
    mdp = TabularMdp(costs, [loop, loop, loop], discount=0.5, action_ids=[4, 7, 9])
    values, _ = value_iteration(mdp, tolerance=1e-12)
    assert extract_policy(mdp, values).actions.tolist() == [4]
    assert values.values[0] == pytest.approx(2.0)


def test_tolerance_must_be_positive(single_goal_model):
    with pytest.raises(ContractError):
        value_iteration(single_goal_model, tolerance=0.0)


def test_non_convergence_is_reported_not_raised(single_goal_model):
    _, report = value_iteration(single_goal_model, tolerance=1e-12, max_sweeps=2)
    assert not report.converged
    assert report.iterations == 2
    assert len(report.residual_history) == 2


def test_action_values_are_negated_q(single_goal_model):
    model = single_goal_model
    values, _ = value_iteration(model, tolerance=1e-6)
    scores = action_values(model, values)
    for index in (0, 17, 1234, 4607):
        np.testing.assert_allclose(state_action_values(model, values, index), scores[index], atol=1e-9)
    policy = extract_policy(model, values)
    chosen = scores[np.arange(model.n_states), policy.actions - 1]
    np.testing.assert_allclose(chosen, scores.max(axis=1), atol=1e-8)


def test_evaluate_policy_of_optimal_policy(single_goal_model):
    values, _ = value_iteration(single_goal_model, tolerance=1e-9)
    policy = extract_policy(single_goal_model, values)
    evaluated = evaluate_policy(single_goal_model, policy)
    np.testing.assert_allclose(evaluated.values, values.values, atol=1e-6)


def test_tabular_shape_contract():
    with pytest.raises(ContractError):
        TabularMdp(np.zeros((2, 2)), [sparse.eye(2)], discount=0.9)
    with pytest.raises(ContractError):
        TabularMdp(np.zeros((2, 1)), [sparse.eye(3)], discount=0.9)


def _chain(discount=0.9):
    # A -> B at cost 1, B absorbing at cost 0
    step = sparse.csr_matrix(np.array([[0.0, 1.0], [0.0, 1.0]]))
    return TabularMdp(np.array([[1.0], [0.0]]), [step], discount=discount)


def test_two_state_chain():
    mdp = _chain()
    values, report = value_iteration(mdp, tolerance=1e-12)
    assert report.converged
    np.testing.assert_allclose(values.values, [1.0, 0.0])
    assert action_values(mdp, values)[0, 0] == pytest.approx(-1.0)


def test_zero_discount_values_are_cheapest_immediate_cost():
    rng = np.random.default_rng(11)
    mdp = random_tabular_mdp(rng, 6, 3, discount=0.0)
    values, report = value_iteration(mdp, tolerance=1e-9)
    assert report.converged
    np.testing.assert_allclose(values.values, mdp.cost_matrix().min(axis=1))


def test_all_zero_costs_converge_in_one_sweep():
    rng = np.random.default_rng(12)
    mdp = random_tabular_mdp(rng, 5, 2, discount=0.9)
    zero = TabularMdp(np.zeros_like(mdp.costs), mdp.transitions, mdp.discount)
    values, report = value_iteration(zero, tolerance=1e-9)
    assert report.converged
    assert report.iterations == 1
    assert not values.values.any()


def test_residuals_contract_by_the_discount():
    rng = np.random.default_rng(13)
    for _ in range(20):
        mdp = random_tabular_mdp(rng, int(rng.integers(2, 9)), int(rng.integers(1, 4)), discount=0.9)
        _, report = value_iteration(mdp, tolerance=1e-10)
        history = report.residual_history
        assert all(b <= mdp.discount * a + 1e-12 for a, b in zip(history, history[1:]))


def test_bellman_residual_of_zero_values():
    rng = np.random.default_rng(14)
    mdp = random_tabular_mdp(rng, 7, 3)
    residual = bellman_residual(mdp, np.zeros(mdp.n_states))
    assert residual == pytest.approx(float(mdp.cost_matrix().min(axis=1).max()))


@pytest.mark.parametrize("factor", [0.25, 3.0])
def test_scaling_costs_scales_values_and_keeps_policy(factor):
    rng = np.random.default_rng(15)
    mdp = random_tabular_mdp(rng, 6, 3)
    values, _ = value_iteration(mdp, tolerance=1e-11)
    scaled = mdp.scaled(factor)
    scaled_values, _ = value_iteration(scaled, tolerance=1e-11)
    np.testing.assert_allclose(scaled_values.values, factor * values.values, rtol=1e-8, atol=1e-8)
    np.testing.assert_array_equal(extract_policy(scaled, scaled_values).actions,
                                  extract_policy(mdp, values).actions)


def test_seeded_sweeps_continue_value_iteration():
    rng = np.random.default_rng(16)
    mdp = random_tabular_mdp(rng, 5, 2)
    values, report = value_iteration(mdp, tolerance=1e-12, max_sweeps=3)
    resumed = bellman_sweeps(mdp, np.zeros(mdp.n_states), 3)
    np.testing.assert_allclose(resumed.values, values.values)
    assert bellman_sweeps(mdp, values, 0).values is not values.values
    with pytest.raises(ContractError):
        bellman_sweeps(mdp, np.zeros(mdp.n_states + 1), 1)
    with pytest.raises(ContractError):
        bellman_sweeps(mdp, values, -1)
