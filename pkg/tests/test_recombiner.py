import time
from dataclasses import replace
from types import SimpleNamespace

import numpy as np
import pytest

from missionplanner.bench import run_comparison
from missionplanner.decomposer import SubMdpKind, decompose
from missionplanner.errors import ContractError, MissionCompleteError, SolveError
from missionplanner.mission_model import build_model
from missionplanner.presets import mission_config, paper3goal, single_goal
from missionplanner.recombiner import (
    Agent,
    Candidate,
    MetaMode,
    PriorityParams,
    SubSolution,
    assign_agents,
    build_combined_policy,
    localize_action,
    map_local_action,
    meta_policy_action,
    priority_score,
    replan,
    seed_values,
    select_best_candidate,
    solve_all,
    update_progress,
)
from missionplanner.solver import Policy, SolveReport, ValueFunction, extract_policy, value_iteration
from missionplanner.state_space import MissionState
from missionplanner.verifier import compare_policies
from missionplanner.workers.sub_solver import get_worker_status

MAPPING = {
    1: [1, 2, 5, 6, 9, 10],
    2: [1, 3, 5, 7, 9, 10],
    3: [1, 4, 5, 8, 9, 10],
}


@pytest.fixture(scope="module")
def single_goal_pipeline():
    config = single_goal().model_copy(update={"local_cost_includes_distance": True})
    model = build_model(config)
    plan = decompose(model)
    solutions = solve_all(plan, tolerance=1e-8)
    return model, plan, solutions


def test_action_mapping_table():
    for goal, expected in MAPPING.items():
        assert [map_local_action(a, goal) for a in range(1, 7)] == expected


def test_localize_inverts_mapping():
    for goal in (1, 2, 3):
        for a_local in range(1, 7):
            assert localize_action(map_local_action(a_local, goal), goal) == a_local
    # commitment to another goal reads as no commitment in the same mode
    assert localize_action(3, 1) == 1
    assert localize_action(7, 1) == 3


@pytest.mark.parametrize("a_local, goal", [(0, 1), (7, 1), (1, 0), (1, 4)])
def test_action_mapping_rejects_out_of_range(a_local, goal):
    with pytest.raises(ContractError):
        map_local_action(a_local, goal)


def test_mapping_generalises_to_other_goal_counts():
    assert [map_local_action(a, 1, goal_count=1) for a in range(1, 7)] == [1, 2, 3, 4, 5, 6]
    assert [map_local_action(a, 2, goal_count=2) for a in range(1, 7)] == [1, 3, 4, 6, 7, 8]


def test_select_best_candidate_breaks_ties_by_sub_id():
    candidates = [Candidate(3, 2, 5.0, goal_index=3), Candidate(1, 2, 5.0, goal_index=1), Candidate(2, 1, 4.0, 2)]
    assert select_best_candidate(candidates) == (2, 1)
    assert select_best_candidate([Candidate(2, 4, 1.0, goal_index=2)]) == (7, 2)
    with pytest.raises(MissionCompleteError):
        select_best_candidate([])


def test_single_goal_combined_policy_equals_global(single_goal_pipeline):
    model, plan, solutions = single_goal_pipeline
    values, _ = value_iteration(model, tolerance=1e-8)
    global_policy = extract_policy(model, values)
    for mode in MetaMode:
        combined = build_combined_policy(plan, solutions, model, mode)
        np.testing.assert_array_equal(combined.actions, global_policy.actions)
        assert (combined.chosen_sub == 1).all()


def test_meta_policy_matches_combined_policy(single_goal_pipeline):
    model, plan, solutions = single_goal_pipeline
    combined = build_combined_policy(plan, solutions, model)
    for index in (0, 99, 2048, 4607):
        state = model.state_at(index)
        assert meta_policy_action(state, solutions) == (combined.actions[index], 1)
        assert meta_policy_action(state, solutions, MetaMode.PRIORITY) == (combined.actions[index], 1)
        assert meta_policy_action(state, solutions, MetaMode.SUB_VALUE) == (combined.actions[index], 1)


def test_completed_subs_are_not_eligible(single_goal_pipeline):
    model, _, solutions = single_goal_pipeline
    done = [update_progress(replace(s, completion_threshold=-1.0), [0.0]) for s in solutions]
    assert all(s.completion for s in done)
    with pytest.raises(MissionCompleteError):
        meta_policy_action(model.state_at(0), done)


def test_solve_all_raises_on_non_convergence(single_goal_pipeline):
    _, plan, _ = single_goal_pipeline
    with pytest.raises(SolveError) as info:
        solve_all(plan, tolerance=1e-12, max_sweeps=1)
    assert info.value.sub_id == 1


def test_worker_status_tracks_runs(single_goal_pipeline):
    _, plan, _ = single_goal_pipeline
    before = get_worker_status()["total_runs"]
    solve_all(plan, tolerance=1e-6, threads=2)
    status = get_worker_status()
    assert status["total_runs"] == before + 1
    assert not status["is_running"]
    assert status["last_stats"]["jobs"] == len(plan.sub_mdps)
    assert status["last_stats"]["converged"] == len(plan.sub_mdps)


def test_priority_urgency_reads_the_current_state(single_goal_pipeline):
    _, plan, _ = single_goal_pipeline
    sub = plan.sub_mdps[0]
    urgency_only = PriorityParams(w_r=0.0, w_u=1.0, w_k=0.0)
    assert priority_score(sub, params=urgency_only) == 2.0
    for level in (0, 1, 2):
        state = MissionState(1, (True,), (level,), 1, 0, 0, 0)
        assert priority_score(sub, params=urgency_only, state=state) == float(level)


def test_progress_is_a_running_mean_and_completion_sticks(single_goal_pipeline):
    solution = single_goal_pipeline[2][0]
    solution = replace(solution, completion_threshold=2.5)
    first = update_progress(solution, [1.0, 3.0])
    assert first.progress == pytest.approx(2.0)
    assert first.updates == 2
    assert not first.completion
    second = update_progress(first, [5.0])
    assert second.progress == pytest.approx(3.0)
    assert second.completion
    third = update_progress(second, [-100.0])
    assert third.completion
    assert update_progress(third, []) is third


def test_assign_agents_respects_preconditions():
    ranked = [SimpleNamespace(sub_id=2, completion=False), SimpleNamespace(sub_id=1, completion=False),
              SimpleNamespace(sub_id=3, completion=True)]
    agents = [Agent(id=1, state=None), Agent(id=2, state=None)]
    queues = assign_agents(agents, ranked, preconditions={1: [3], 2: [1]})
    assert queues == {2: [], 1: [1, 2], 3: []}
    assert agents[0].assigned_subs == [1]


def test_replan_without_changes_reuses_solutions(single_goal_pipeline):
    _, plan, solutions = single_goal_pipeline
    assert replan(plan, solutions, []) == list(solutions)
    with pytest.raises(ContractError):
        replan(plan, solutions, [42])


def test_replan_resolves_changed_sub(single_goal_pipeline):
    _, plan, solutions = single_goal_pipeline
    fresh = replan(plan, solutions, [1], tolerance=1e-8)
    assert len(fresh) == 1
    assert fresh[0] is not solutions[0]
    np.testing.assert_array_equal(fresh[0].policy.actions, solutions[0].policy.actions)


def _scripted_solution(goal, local_action, value):
    """Goal sub-MDP stand-in over a single local state with return-form value `value`"""
    parent = SimpleNamespace(goal_count=3, n_actions=10, state_index=lambda state: 0)
    sub = SimpleNamespace(id=goal, kind=SubMdpKind.GOAL, goal_index=goal, parent=parent,
                          member_mask=np.array([True]), local_index=np.array([0]))
    return SubSolution(
        sub=sub,
        policy=Policy(np.array([local_action])),
        value=ValueFunction(np.array([-value])),
        expected_return=value,
        priority=0.0,
        report=SolveReport(converged=True),
        action_values=np.full((1, 6), value),
    )


def test_sub_value_mode_picks_the_highest_valued_sub():
    # local actions (4, 3, 4) with goal 2's sub-MDP valued highest
    solutions = [_scripted_solution(1, 4, 3.0), _scripted_solution(2, 3, 7.0), _scripted_solution(3, 4, 5.0)]
    state = MissionState(1, (True,) * 3, (0,) * 3, 1, 0, 0, 0)
    assert meta_policy_action(state, solutions, MetaMode.SUB_VALUE) == (5, 2)
    # summed scoring sees the same total for every proposal and falls back to the lowest sub id
    assert meta_policy_action(state, solutions, MetaMode.BEST_VALUE) == (6, 1)


@pytest.fixture(scope="module")
def two_goal_pipeline(two_goal_model):
    plan = decompose(two_goal_model)
    solutions = solve_all(plan, tolerance=1e-8)
    values, _ = value_iteration(two_goal_model, tolerance=1e-8)
    return two_goal_model, plan, solutions, values, extract_policy(two_goal_model, values)


def test_seed_values_sum_the_sub_values(two_goal_pipeline):
    model, plan, solutions, _, _ = two_goal_pipeline
    seed = seed_values(plan, solutions, model)
    rng = np.random.default_rng(21)
    for index in rng.integers(0, model.n_states, size=50):
        expected = sum(s.value.values[s.sub.local_index[index]] for s in solutions)
        assert seed.values[index] == pytest.approx(expected)


def test_sub_value_mode_matches_meta_policy(two_goal_pipeline):
    model, plan, solutions, _, _ = two_goal_pipeline
    combined = build_combined_policy(plan, solutions, model, MetaMode.SUB_VALUE)
    rng = np.random.default_rng(22)
    for index in rng.integers(0, model.n_states, size=50):
        action, sub_id = meta_policy_action(model.state_at(int(index)), solutions, MetaMode.SUB_VALUE)
        assert action == combined.actions[index]
        assert sub_id == combined.chosen_sub[index]


def test_refinement_converges_to_the_global_policy(two_goal_pipeline):
    model, plan, solutions, values, global_policy = two_goal_pipeline
    plain = build_combined_policy(plan, solutions, model)
    refined = build_combined_policy(plan, solutions, model, refine_sweeps=500)
    assert refined.refine_sweeps == 500
    np.testing.assert_array_equal(refined.chosen_sub, plain.chosen_sub)
    before = compare_policies(plain, global_policy, model, values, tie_aware=True)
    after = compare_policies(refined, global_policy, model, values, tie_aware=True)
    assert after.match_percent == 100.0
    assert after.match_percent >= before.match_percent
    with pytest.raises(ContractError):
        build_combined_policy(plan, solutions, model, refine_sweeps=-1)


@pytest.mark.slow
def test_paper_scale_pipeline():
    run = run_comparison(paper3goal())
    record = run.record
    assert record.global_states == 331776
    assert record.sub_state_counts == [4608, 4608, 4608]
    assert record.tie_aware_match_percent >= record.match_percent
    assert record.memory_ratio > 10
    assert record.runtime_ratio >= 20
    # single-pass recombination of coupled goals, measured at 64.1%
    assert record.tie_aware_match_percent >= 60.0
    assert run.tie_aware_report.match_percent == record.tie_aware_match_percent
    assert run.combined_policy.actions.min() >= 1
    assert run.combined_policy.actions.max() <= 10

    start = time.monotonic()
    refined = build_combined_policy(run.plan, run.solutions, run.model, refine_sweeps=40)
    refine_seconds = time.monotonic() - start
    report = compare_policies(refined, run.global_policy, run.model, run.global_values, tie_aware=True)
    assert report.match_percent >= 99.9
    assert record.global_seconds / (record.decomposed_seconds + refine_seconds) >= 3
