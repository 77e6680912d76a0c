import numpy as np
import pytest

from missionplanner.errors import ContractError, StateValidationError
from missionplanner.mission_model import build_model
from missionplanner.presets import single_goal
from missionplanner.simulator import (
    Scenario,
    ScenarioEvent,
    case_one_milestones,
    case_one_scenario,
    event_order_check,
    run_mission,
    step,
)
from missionplanner.solver import extract_policy, value_iteration
from missionplanner.state_space import MissionState


@pytest.fixture(scope="module")
def stochastic_setup():
    model = build_model(single_goal())
    values, _ = value_iteration(model, tolerance=1e-6)
    return model, extract_policy(model, values)


def _rng(seed=0):
    return np.random.Generator(np.random.PCG64(seed))


def test_case_one_duty_cycle(case_one_solution, case_one_config):
    model, _, policy = case_one_solution
    records = run_mission(case_one_scenario(case_one_config), policy, model)
    assert len(records) == 13
    milestones = list(case_one_milestones(case_one_config).values())
    assert event_order_check(records, milestones)
    assert not event_order_check(records, milestones[::-1])
    assert records[-1].state.location == case_one_config.base_cell

    raised = next(r.epoch for r in records if r.state.goal_priorities[0] == 2)
    committed = next(r.epoch for r in records if r.state.commitment == 1)
    assert raised == 3
    assert committed - raised <= 1
    assert records[3].event_applied == "set_goal_priority(1,2)"


def test_empty_checklist_is_satisfied(case_one_solution, case_one_config):
    model, _, policy = case_one_solution
    records = run_mission(case_one_scenario(case_one_config), policy, model)
    assert event_order_check(records, [])


def test_zero_horizon_returns_initial_state(case_one_solution, case_one_config):
    model, _, policy = case_one_solution
    scenario = case_one_scenario(case_one_config, horizon=0)
    scenario.events = []
    records = run_mission(scenario, policy, model)
    assert len(records) == 1
    assert records[0].state == scenario.initial_state


def test_same_seed_same_trajectory(stochastic_setup):
    model, policy = stochastic_setup
    start = MissionState(1, (True,), (1,), 0, 0, 0, 0)
    scenario = Scenario(start, horizon=40, seed=123)
    assert run_mission(scenario, policy, model) == run_mission(scenario, policy, model)


def test_transitions_have_positive_probability(stochastic_setup):
    model, policy = stochastic_setup
    start = MissionState(2, (True,), (2,), 6, 0, 1, 0)
    records = run_mission(Scenario(start, horizon=40, seed=5), policy, model)
    for current, following in zip(records, records[1:]):
        successors = model.transition_distribution(current.state, current.action)
        assert successors.get(following.state, 0.0) > 0.0
        following.state.validate(model.layout)


def test_idle_at_base_is_a_fixed_point(case_one_solution):
    model = case_one_solution[0]
    state = MissionState(1, (True,), (0,), 1, 0, 0, 0)
    next_state, record = step(state, lambda s: 1, model, _rng())
    assert next_state == state
    assert record.action == 1
    assert record.cost == 0.0


def test_commit_from_adjacent_cell_reaches_goal(case_one_solution):
    model = case_one_solution[0]
    state = MissionState(1, (True,), (1,), 3, 0, 0, 0)
    next_state, _ = step(state, lambda s: 2, model, _rng())
    assert next_state.location == 5
    assert next_state.commitment == 1


def test_scripted_event_overrides_the_digit(case_one_solution):
    model = case_one_solution[0]
    state = MissionState(1, (True,), (0,), 1, 0, 0, 0)
    next_state, record = step(state, lambda s: 1, model, _rng(), [ScenarioEvent.set_threat(2)], epoch=4)
    assert record.state.threat == 2
    assert record.epoch == 4
    assert record.event_applied == "set_threat(2)"
    assert next_state.threat == 2


def test_events_on_other_digits(case_one_solution):
    model = case_one_solution[0]
    state = MissionState(1, (True,), (0,), 1, 0, 0, 0)
    events = [ScenarioEvent.set_fault(4), ScenarioEvent.set_range(1, False), ScenarioEvent.set_goal_priority(1, 1)]
    _, record = step(state, lambda s: 1, model, _rng(), events)
    assert record.state.fault == 4
    assert record.state.range_flags == (False,)
    assert record.state.goal_priorities == (1,)


def test_scenario_validation(case_one_config):
    layout = case_one_config.state_layout
    scenario = case_one_scenario(case_one_config)
    scenario.events.append((13, ScenarioEvent.set_threat(1)))
    with pytest.raises(ContractError):
        scenario.validate(layout)
    with pytest.raises(StateValidationError):
        ScenarioEvent.set_goal_priority(2, 1).validate(layout)
    with pytest.raises(StateValidationError):
        ScenarioEvent.set_threat(3).validate(layout)
    with pytest.raises(StateValidationError):
        ScenarioEvent.set_fault(0).validate(layout)
