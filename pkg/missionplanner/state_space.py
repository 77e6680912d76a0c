"""
Factored mission state space.

A mission state is the tuple (f, r_1..r_k, g_1..g_k, l, c, t, m). States are
numbered by a mixed-radix index whose digits, most significant first, are

    [f - 1, r_1 .. r_k, g_1 .. g_k, l, c, t, m]

so a flat value vector reshaped (C order) to `layout.dims` is a tensor with
one axis per state variable.
"""

from dataclasses import dataclass
from typing import Iterator, List, NewType, Optional, Sequence, Tuple

import numpy as np

from . import settings
from .errors import CapacityError, ContractError, StateValidationError

StateIndex = NewType("StateIndex", int)

RANGE_LEVELS = 2
PRIORITY_LEVELS = 3


@dataclass(frozen=True)
class StateLayout:
    """Counts of every state variable"""
    fault_count: int = 8
    goal_count: int = 3
    location_count: int = 8
    threat_count: int = 3
    mode_count: int = 2

    def __post_init__(self):
        for name in ("fault_count", "goal_count", "location_count", "threat_count", "mode_count"):
            value = getattr(self, name)
            if not isinstance(value, (int, np.integer)) or value < 1:
                raise ContractError(f"StateLayout.{name} must be an integer >= 1, got {value!r}")

    @property
    def range_levels(self) -> int:
        return RANGE_LEVELS

    @property
    def priority_levels(self) -> int:
        return PRIORITY_LEVELS

    @property
    def commitment_levels(self) -> int:
        return self.goal_count + 1

    @property
    def dims(self) -> Tuple[int, ...]:
        """Radix of every digit, most significant first"""
        k = self.goal_count
        return (
            (self.fault_count,)
            + (RANGE_LEVELS,) * k
            + (PRIORITY_LEVELS,) * k
            + (self.location_count, self.commitment_levels, self.threat_count, self.mode_count)
        )

    @property
    def digit_count(self) -> int:
        return 2 * self.goal_count + 5

    # digit positions
    @property
    def fault_axis(self) -> int:
        return 0

    def range_axis(self, goal: int) -> int:
        """Digit of r_goal (goal is 1-based)"""
        return goal

    def goal_axis(self, goal: int) -> int:
        """Digit of g_goal (goal is 1-based)"""
        return self.goal_count + goal

    @property
    def location_axis(self) -> int:
        return 2 * self.goal_count + 1

    @property
    def commitment_axis(self) -> int:
        return 2 * self.goal_count + 2

    @property
    def threat_axis(self) -> int:
        return 2 * self.goal_count + 3

    @property
    def mode_axis(self) -> int:
        return 2 * self.goal_count + 4

    @property
    def total(self) -> int:
        return state_count(self)

    def with_goals(self, goal_count: int) -> "StateLayout":
        return StateLayout(
            fault_count=self.fault_count,
            goal_count=goal_count,
            location_count=self.location_count,
            threat_count=self.threat_count,
            mode_count=self.mode_count,
        )


@dataclass(frozen=True)
class MissionState:
    fault: int
    range_flags: Tuple[bool, ...]
    goal_priorities: Tuple[int, ...]
    location: int
    commitment: int
    threat: int
    nav_mode: int

    def __post_init__(self):
        # normalise list inputs so states hash and compare by value
        object.__setattr__(self, "range_flags", tuple(bool(r) for r in self.range_flags))
        object.__setattr__(self, "goal_priorities", tuple(int(g) for g in self.goal_priorities))

    def validate(self, layout: StateLayout) -> "MissionState":
        """Raise StateValidationError naming the first field outside its bound"""
        k = layout.goal_count
        if not 1 <= self.fault <= layout.fault_count:
            raise StateValidationError("fault", self.fault, f"1..{layout.fault_count}")
        if len(self.range_flags) != k:
            raise StateValidationError("range_flags", self.range_flags, f"length {k}")
        if len(self.goal_priorities) != k:
            raise StateValidationError("goal_priorities", self.goal_priorities, f"length {k}")
        for j, g in enumerate(self.goal_priorities, start=1):
            if not 0 <= g < PRIORITY_LEVELS:
                raise StateValidationError(f"goal_priorities[{j}]", g, "0..2")
        if not 0 <= self.location < layout.location_count:
            raise StateValidationError("location", self.location, f"0..{layout.location_count - 1}")
        if not 0 <= self.commitment <= k:
            raise StateValidationError("commitment", self.commitment, f"0..{k}")
        if not 0 <= self.threat < layout.threat_count:
            raise StateValidationError("threat", self.threat, f"0..{layout.threat_count - 1}")
        if not 0 <= self.nav_mode < layout.mode_count:
            raise StateValidationError("nav_mode", self.nav_mode, f"0..{layout.mode_count - 1}")
        return self

    def digits(self) -> List[int]:
        return (
            [self.fault - 1]
            + [int(r) for r in self.range_flags]
            + list(self.goal_priorities)
            + [self.location, self.commitment, self.threat, self.nav_mode]
        )

    def to_vector(self) -> List[int]:
        """Flat [f, r.., g.., l, c, t, m] form with the 1-based fault"""
        vector = self.digits()
        vector[0] += 1
        return vector

    @classmethod
    def from_digits(cls, digits: Sequence[int], goal_count: int) -> "MissionState":
        k = goal_count
        return cls(
            fault=int(digits[0]) + 1,
            range_flags=tuple(bool(d) for d in digits[1:1 + k]),
            goal_priorities=tuple(int(d) for d in digits[1 + k:1 + 2 * k]),
            location=int(digits[1 + 2 * k]),
            commitment=int(digits[2 + 2 * k]),
            threat=int(digits[3 + 2 * k]),
            nav_mode=int(digits[4 + 2 * k]),
        )

    @classmethod
    def from_vector(cls, vector: Sequence[int], layout: StateLayout) -> "MissionState":
        """
        Build a state from the flat form (f, r_1..r_k, g_1..g_k, l, c, t, m).

        The representative 3-goal test state [1 1 0 1 0 2 1 1 0 2 1] reads as
        f=1, r=(1,0,1), g=(0,2,1), l=1, c=0, t=2, m=1.
        """
        if len(vector) != layout.digit_count:
            raise StateValidationError("vector", list(vector), f"length {layout.digit_count}")
        digits = list(vector)
        digits[0] = int(digits[0]) - 1
        return cls.from_digits(digits, layout.goal_count).validate(layout)

    def replace(self, **changes) -> "MissionState":
        from dataclasses import replace
        return replace(self, **changes)


def state_count(layout: StateLayout) -> int:
    """N = f_s * (2^g * 3^g * (g+1)) * l_s * t_s * m_s, exact"""
    g = int(layout.goal_count)
    return (
        int(layout.fault_count)
        * (2 ** g * 3 ** g * (g + 1))
        * int(layout.location_count)
        * int(layout.threat_count)
        * int(layout.mode_count)
    )


def encode_state(state: MissionState, layout: StateLayout) -> StateIndex:
    state.validate(layout)
    index = 0
    for digit, radix in zip(state.digits(), layout.dims):
        index = index * radix + digit
    return StateIndex(index)


def decode_state(index: int, layout: StateLayout) -> MissionState:
    total = state_count(layout)
    if not 0 <= int(index) < total:
        raise ContractError(f"state index {index} out of range [0, {total})")
    remaining = int(index)
    digits = []
    for radix in reversed(layout.dims):
        remaining, digit = divmod(remaining, radix)
        digits.append(digit)
    digits.reverse()
    return MissionState.from_digits(digits, layout.goal_count)


def enumerate_states(layout: StateLayout, cap: Optional[int] = None) -> Iterator[Tuple[StateIndex, MissionState]]:
    """Stream every (index, state) pair in index order"""
    limit = settings.ENUMERATION_CAP if cap is None else cap
    total = state_count(layout)
    if total > limit:
        raise CapacityError("enumerate_states", total, limit)
    return _enumerate(layout, total)


def _enumerate(layout: StateLayout, total: int) -> Iterator[Tuple[StateIndex, MissionState]]:
    dims = layout.dims
    k = layout.goal_count
    for index, digits in enumerate(np.ndindex(*dims)):
        yield StateIndex(index), MissionState.from_digits(digits, k)


# =====================================================
# Vectorised digit helpers
# =====================================================

def decode_indices(indices: np.ndarray, layout: StateLayout) -> np.ndarray:
    """(n,) indices -> (n, digit_count) digit matrix"""
    idx = np.asarray(indices, dtype=np.int64)
    return np.stack(np.unravel_index(idx, layout.dims), axis=-1)


def encode_digits(digits: np.ndarray, layout: StateLayout) -> np.ndarray:
    """(n, digit_count) digit matrix -> (n,) indices"""
    digits = np.asarray(digits, dtype=np.int64)
    return np.ravel_multi_index(tuple(digits[..., i] for i in range(digits.shape[-1])), layout.dims)


def all_digits(layout: StateLayout, cap: Optional[int] = None) -> np.ndarray:
    """Digit matrix of every state, row i belongs to index i"""
    limit = settings.ENUMERATION_CAP if cap is None else cap
    total = state_count(layout)
    if total > limit:
        raise CapacityError("all_digits", total, limit)
    return decode_indices(np.arange(total, dtype=np.int64), layout)
