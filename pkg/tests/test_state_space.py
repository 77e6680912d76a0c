import numpy as np
import pytest

from missionplanner.errors import CapacityError, ContractError, StateValidationError
from missionplanner.state_space import (
    MissionState,
    StateLayout,
    decode_indices,
    decode_state,
    encode_digits,
    encode_state,
    enumerate_states,
    state_count,
)


def _formula(g: int) -> int:
    return 8 * (2 ** g) * (3 ** g) * (g + 1) * 8 * 3 * 2


def test_state_count_known_values():
    assert state_count(StateLayout(goal_count=1)) == 4608
    assert state_count(StateLayout(goal_count=2)) == 41472
    assert state_count(StateLayout(goal_count=3)) == 331776
    assert state_count(StateLayout(goal_count=4)) == 2_488_320
    assert state_count(StateLayout(goal_count=10)) == 255_409_127_424


def test_state_count_sweep_is_exact():
    for g in range(1, 11):
        assert state_count(StateLayout(goal_count=g)) == _formula(g)


def test_layout_rejects_zero_counts():
    with pytest.raises(ContractError):
        StateLayout(goal_count=0)


def test_layout_dims_order():
    layout = StateLayout(goal_count=2)
    assert layout.dims == (8, 2, 2, 3, 3, 8, 3, 3, 2)
    assert layout.location_axis == 5
    assert layout.commitment_axis == 6


def test_representative_vector_reads_field_order():
    layout = StateLayout(goal_count=3)
    state = MissionState.from_vector([1, 1, 0, 1, 0, 2, 1, 1, 0, 2, 1], layout)
    assert state.fault == 1
    assert state.range_flags == (True, False, True)
    assert state.goal_priorities == (0, 2, 1)
    assert (state.location, state.commitment, state.threat, state.nav_mode) == (1, 0, 2, 1)
    assert state.to_vector() == [1, 1, 0, 1, 0, 2, 1, 1, 0, 2, 1]


def test_mode_is_least_significant_digit():
    layout = StateLayout(goal_count=1)
    base = MissionState(1, (False,), (0,), 0, 0, 0, 0)
    assert encode_state(base, layout) == 0
    assert encode_state(base.replace(nav_mode=1), layout) == 1
    assert encode_state(base.replace(fault=2), layout) == 576


def test_encode_decode_bijection_random():
    layout = StateLayout(goal_count=3)
    rng = np.random.default_rng(7)
    for index in rng.integers(0, layout.total, size=1000):
        state = decode_state(int(index), layout)
        assert encode_state(state, layout) == index


def test_vectorised_digits_agree_with_scalar():
    layout = StateLayout(goal_count=2)
    rng = np.random.default_rng(11)
    indices = rng.integers(0, layout.total, size=1000)
    digits = decode_indices(indices, layout)
    np.testing.assert_array_equal(encode_digits(digits, layout), indices)
    for index, row in zip(indices[:50], digits[:50]):
        assert decode_state(int(index), layout).digits() == row.tolist()


@pytest.mark.parametrize("changes, field", [
    ({"fault": 9}, "fault"),
    ({"fault": 0}, "fault"),
    ({"commitment": 2}, "commitment"),
    ({"location": 8}, "location"),
    ({"threat": 3}, "threat"),
    ({"goal_priorities": (3,)}, "goal_priorities[1]"),
    ({"range_flags": (True, True)}, "range_flags"),
])
def test_out_of_bound_fields_are_named(changes, field):
    layout = StateLayout(goal_count=1)
    state = MissionState(1, (True,), (0,), 0, 0, 0, 0).replace(**changes)
    with pytest.raises(StateValidationError) as info:
        encode_state(state, layout)
    assert info.value.field == field


def test_decode_out_of_range():
    layout = StateLayout(goal_count=1)
    with pytest.raises(ContractError):
        decode_state(4608, layout)
    with pytest.raises(ContractError):
        decode_state(-1, layout)


def test_enumerate_small_layout_in_index_order():
    layout = StateLayout(fault_count=1, goal_count=1, location_count=1, threat_count=1, mode_count=1)
    pairs = list(enumerate_states(layout))
    assert len(pairs) == 12
    for index, state in pairs:
        assert encode_state(state, layout) == index


def test_enumerate_respects_cap():
    with pytest.raises(CapacityError) as info:
        enumerate_states(StateLayout(goal_count=3), cap=1000)
    assert info.value.requested == 331776
    assert info.value.limit == 1000
