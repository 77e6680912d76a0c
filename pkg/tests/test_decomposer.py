import numpy as np
import pytest

from missionplanner.decomposer import (
    SubMdpKind,
    decompose,
    decompose_with,
    merge_candidates,
    overlap,
    partition,
    project_state,
    quadrant_regions,
)
from missionplanner.errors import ContractError, CoverageError
from missionplanner.mission_model import build_model
from missionplanner.presets import paper3goal
from missionplanner.schemas import Criterion, DecomposeOptions
from missionplanner.state_space import MissionState, encode_state


@pytest.fixture(scope="module")
def paper_model():
    return build_model(paper3goal())


@pytest.fixture(scope="module")
def goal_plan(paper_model):
    return decompose(paper_model)


def test_goal_plan_has_three_single_goal_subs(goal_plan):
    assert [s.id for s in goal_plan.sub_mdps] == [1, 2, 3]
    assert [s.kind for s in goal_plan.sub_mdps] == [SubMdpKind.GOAL] * 3
    assert [s.n_states for s in goal_plan.sub_mdps] == [4608] * 3
    assert goal_plan.membership.all()
    assert goal_plan.mapping(12345) == [1, 2, 3]


def test_goal_plan_summary(goal_plan):
    summary = goal_plan.summary()
    assert summary.global_states == 331776
    assert summary.min_memberships == summary.max_memberships == 3
    assert [s.focus for s in summary.sub_mdps] == ["goal 1", "goal 2", "goal 3"]


def test_goal_sub_local_index_is_the_projection(paper_model, goal_plan):
    sub = goal_plan.sub(2)
    rng = np.random.default_rng(9)
    for index in rng.integers(0, paper_model.n_states, size=200):
        state = paper_model.state_at(int(index))
        local = project_state(state, 2)
        assert sub.local_index[index] == encode_state(local, sub.model.layout)
        assert sub.projection(state) == local


def test_project_state_keeps_one_goal():
    state = MissionState(1, (True, False, True), (0, 2, 1), 1, 2, 2, 1)
    local = project_state(state, 2)
    assert local.range_flags == (False,)
    assert local.goal_priorities == (2,)
    assert local.commitment == 1
    assert project_state(state, 3).commitment == 0


def test_t_max_below_goal_size_leaves_states_uncovered(paper_model):
    with pytest.raises(CoverageError) as info:
        decompose(paper_model, t_max=4000)
    assert info.value.total_uncovered == paper_model.n_states


def test_partition_needs_positive_t_max(paper_model):
    with pytest.raises(ContractError):
        partition(paper_model, Criterion.GOAL, t_max=0)


def test_goal_subs_on_different_goals_do_not_overlap(goal_plan):
    a, b, _ = goal_plan.sub_mdps
    assert overlap(a, b) == 0.0
    assert overlap(a, a) == 1.0


def test_quadrants_of_four_by_two_grid():
    assert quadrant_regions((4, 2)) == [[0, 2], [1, 3], [4, 6], [5, 7]]


def test_location_plan_partitions_the_space(single_goal_model):
    plan = decompose(single_goal_model, criterion=Criterion.LOCATION)
    assert len(plan.sub_mdps) == 4
    assert [s.n_states for s in plan.sub_mdps] == [1152] * 4
    assert (plan.membership.sum(axis=1) == 1).all()


def test_fault_plan(single_goal_model):
    plan = decompose(single_goal_model, criterion=Criterion.FAULT)
    assert [s.focus for s in plan.sub_mdps] == [(f,) for f in range(1, 9)]
    assert [s.n_states for s in plan.sub_mdps] == [576] * 8


def test_restricted_sub_mdp_rows_stay_stochastic(single_goal_model):
    plan = decompose(single_goal_model, criterion=Criterion.LOCATION)
    sub = plan.sub(1)
    mass = sub.model.expected_values(np.ones(sub.n_states))
    np.testing.assert_allclose(mass, 1.0, atol=1e-9)


def test_overlapping_candidate_is_pruned(single_goal_model):
    options = DecomposeOptions(
        criterion=Criterion.LOCATION,
        weights=(0.0, 1.0, 0.0),
        regions=[[0, 1], [0, 1, 2], [2, 3, 4, 5, 6, 7]],
    )
    plan = decompose_with(single_goal_model, options)
    assert [s.focus for s in plan.sub_mdps] == [(0, 1), (2, 3, 4, 5, 6, 7)]
    assert any("pruned" in d for d in plan.diagnostics)
    assert plan.scores[1].spatial_coherence == pytest.approx(0.5)
    assert plan.scores[2].spatial_coherence == pytest.approx(0.25)


def test_merge_of_intersecting_candidates(single_goal_model):
    regions = partition(single_goal_model, Criterion.LOCATION, t_max=5000)
    faults = partition(single_goal_model, Criterion.FAULT, t_max=5000)
    mixed = merge_candidates(regions[0], faults[0], threshold=0.0, weights=(1.0, 1.0, 1.0))
    assert mixed is not None
    assert mixed.kind == SubMdpKind.MIXED
    assert mixed.n_states == 1152 + 576 - 144


def test_merge_rejections(single_goal_model):
    regions = partition(single_goal_model, Criterion.LOCATION, t_max=5000)
    faults = partition(single_goal_model, Criterion.FAULT, t_max=5000)
    # disjoint and both large
    assert merge_candidates(regions[0], regions[1], 0.0, (1.0, 1.0, 1.0)) is None
    notes = []
    assert merge_candidates(regions[0], faults[0], 0.0, (1.0, 1.0, 1.0), t_max=1000, diagnostics=notes) is None
    assert notes and "t_max" in notes[0]
    assert merge_candidates(regions[0], faults[0], threshold=1e9, weights=(1.0, 1.0, 1.0)) is None


def test_oversized_candidates_are_omitted(single_goal_model):
    notes = []
    assert partition(single_goal_model, Criterion.LOCATION, t_max=1000, diagnostics=notes) == []
    assert any("exceed" in n for n in notes)


def test_decomposition_is_deterministic(single_goal_model):
    options = DecomposeOptions(criterion=Criterion.MIXED, t_max=5000)
    first = decompose_with(single_goal_model, options)
    second = decompose_with(single_goal_model, options)
    assert first.summary() == second.summary()
    np.testing.assert_array_equal(first.membership, second.membership)
    assert [s.focus for s in first.sub_mdps] == [s.focus for s in second.sub_mdps]


def test_paper_model_fault_plan(paper_model):
    plan = decompose(paper_model, criterion=Criterion.FAULT, t_max=50000)
    assert [s.focus for s in plan.sub_mdps] == [(f,) for f in range(1, 9)]
    assert [s.n_states for s in plan.sub_mdps] == [41472] * 8
    assert (plan.membership.sum(axis=1) == 1).all()
