"""
Closed-loop mission rollouts with scripted ground-station events.

A rollout is one decision per epoch: scripted events for the epoch are
applied first, the policy picks an action on the resulting state, and the
next state is drawn digit by digit from the mission model's factored
kernels with a PCG64 generator.
"""

import json
import logging
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Callable, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
from pydantic import ValidationError

from .errors import ConfigValidationError, ContractError, StateValidationError
from .mission_model import MissionModel
from .schemas import ModelConfig, ScenarioDocument, _format_loc
from .solver import Policy
from .state_space import PRIORITY_LEVELS, MissionState, StateLayout

logger = logging.getLogger("missionplanner.simulator")

GENERATOR_NAME = "PCG64"

PolicyLike = Union[Policy, Callable[[MissionState], int]]
Predicate = Callable[[MissionState], bool]


class EventKind(str, Enum):
    GOAL_PRIORITY = "set_goal_priority"
    THREAT = "set_threat"
    FAULT = "set_fault"
    RANGE = "set_range"


@dataclass(frozen=True)
class ScenarioEvent:
    kind: EventKind
    value: int
    goal: Optional[int] = None

    @classmethod
    def set_goal_priority(cls, goal: int, level: int) -> "ScenarioEvent":
        return cls(EventKind.GOAL_PRIORITY, int(level), int(goal))

    @classmethod
    def set_threat(cls, level: int) -> "ScenarioEvent":
        return cls(EventKind.THREAT, int(level))

    @classmethod
    def set_fault(cls, mode: int) -> "ScenarioEvent":
        return cls(EventKind.FAULT, int(mode))

    @classmethod
    def set_range(cls, goal: int, flag: bool) -> "ScenarioEvent":
        return cls(EventKind.RANGE, int(bool(flag)), int(goal))

    def __str__(self) -> str:
        if self.goal is None:
            return f"{self.kind.value}({self.value})"
        return f"{self.kind.value}({self.goal},{self.value})"

    def validate(self, layout: StateLayout) -> "ScenarioEvent":
        k = layout.goal_count
        if self.kind in (EventKind.GOAL_PRIORITY, EventKind.RANGE):
            if self.goal is None or not 1 <= self.goal <= k:
                raise StateValidationError("event.goal", self.goal, f"1..{k}")
        if self.kind == EventKind.GOAL_PRIORITY and not 0 <= self.value < PRIORITY_LEVELS:
            raise StateValidationError("event.level", self.value, f"0..{PRIORITY_LEVELS - 1}")
        if self.kind == EventKind.THREAT and not 0 <= self.value < layout.threat_count:
            raise StateValidationError("event.level", self.value, f"0..{layout.threat_count - 1}")
        if self.kind == EventKind.FAULT and not 1 <= self.value <= layout.fault_count:
            raise StateValidationError("event.mode", self.value, f"1..{layout.fault_count}")
        return self

    def apply(self, state: MissionState) -> MissionState:
        if self.kind == EventKind.THREAT:
            return state.replace(threat=self.value)
        if self.kind == EventKind.FAULT:
            return state.replace(fault=self.value)
        if self.kind == EventKind.GOAL_PRIORITY:
            levels = list(state.goal_priorities)
            levels[self.goal - 1] = self.value
            return state.replace(goal_priorities=tuple(levels))
        flags = list(state.range_flags)
        flags[self.goal - 1] = bool(self.value)
        return state.replace(range_flags=tuple(flags))


@dataclass
class Scenario:
    initial_state: MissionState
    horizon: int
    events: List[Tuple[int, ScenarioEvent]] = field(default_factory=list)
    seed: int = 0

    def validate(self, layout: StateLayout) -> "Scenario":
        if self.horizon < 0:
            raise ContractError(f"horizon must be >= 0, got {self.horizon}")
        self.initial_state.validate(layout)
        for epoch, event in self.events:
            if not 0 <= epoch <= self.horizon:
                raise ContractError(f"event {event} at epoch {epoch} is outside 0..{self.horizon}")
            event.validate(layout)
        return self

    def events_at(self, epoch: int) -> List[ScenarioEvent]:
        return [event for e, event in self.events if e == epoch]


@dataclass(frozen=True)
class TrajectoryRecord:
    epoch: int
    state: MissionState
    action: int
    cost: float
    event_applied: Optional[str] = None


def _choose(policy: PolicyLike, state: MissionState, model: MissionModel) -> int:
    if isinstance(policy, Policy):
        return policy.action_at(model.state_index(state))
    return int(policy(state))


def _sample(support: List[Tuple[int, float]], rng: np.random.Generator) -> int:
    if len(support) == 1:
        return support[0][0]
    values = [v for v, _ in support]
    probs = np.array([p for _, p in support])
    return int(rng.choice(values, p=probs / probs.sum()))


def step(
    state: MissionState,
    policy: PolicyLike,
    model: MissionModel,
    rng: np.random.Generator,
    pending_events: Sequence[ScenarioEvent] = (),
    epoch: int = 0,
) -> Tuple[MissionState, TrajectoryRecord]:
    """Apply this epoch's events, act, and sample the successor"""
    state.validate(model.layout)
    for event in pending_events:
        state = event.apply(state)
    action = _choose(policy, state, model)
    cost = model.cost(model.state_index(state), action)

    digits = [_sample(support, rng) for support in model.factor_distributions(state, action)]
    next_state = MissionState.from_digits(digits, model.layout.goal_count)
    record = TrajectoryRecord(
        epoch=epoch,
        state=state,
        action=action,
        cost=cost,
        event_applied="; ".join(str(e) for e in pending_events) or None,
    )
    return next_state, record


def run_mission(scenario: Scenario, policy: PolicyLike, model: MissionModel) -> List[TrajectoryRecord]:
    """horizon + 1 records; the same seed gives the same trajectory"""
    scenario.validate(model.layout)
    rng = np.random.Generator(np.random.PCG64(scenario.seed))
    state = scenario.initial_state
    records: List[TrajectoryRecord] = []
    for epoch in range(scenario.horizon + 1):
        next_state, record = step(state, policy, model, rng, scenario.events_at(epoch), epoch)
        records.append(record)
        state = next_state
    logger.info(
        f"🛩️ Rollout finished: {len(records)} epochs, seed {scenario.seed}, "
        f"total cost {sum(r.cost for r in records):.2f}"
    )
    return records


def event_order_check(trajectory: Sequence[TrajectoryRecord], predicates: Sequence[Predicate]) -> bool:
    """True iff the predicates hold at strictly increasing epochs"""
    remaining = list(predicates)
    for record in trajectory:
        if not remaining:
            break
        if remaining[0](record.state):
            remaining.pop(0)
    return not remaining


# =====================================================
# Scripted duty cycle
# =====================================================

def case_one_scenario(config: ModelConfig, horizon: int = 12, seed: int = 0) -> Scenario:
    """
    Goal 1 is raised to top priority at epoch 3; a threat spike hits on the
    way home at epoch 6 and clears two epochs later.
    """
    k = config.goal_count
    initial = MissionState(
        fault=1,
        range_flags=(True,) * k,
        goal_priorities=(0,) * k,
        location=config.base_cell,
        commitment=0,
        threat=0,
        nav_mode=0,
    )
    events = [
        (3, ScenarioEvent.set_goal_priority(1, 2)),
        (6, ScenarioEvent.set_threat(2)),
        (8, ScenarioEvent.set_threat(0)),
    ]
    return Scenario(initial_state=initial, horizon=horizon, events=events, seed=seed)


def case_one_milestones(config: ModelConfig) -> Dict[str, Predicate]:
    """Ordered duty-cycle milestones (dict order is the expected order)"""
    goal_cell = config.goal_cells[0]
    return {
        "priority_raised": lambda s: s.goal_priorities[0] == 2,
        "committed": lambda s: s.commitment == 1,
        "arrived": lambda s: s.location == goal_cell,
        "goal_reset": lambda s: s.goal_priorities[0] == 0 and s.commitment == 0,
        "agile_under_threat": lambda s: s.threat == 2 and s.nav_mode == 1,
        "threat_cleared": lambda s: s.threat == 0 and s.nav_mode == 0,
        "home": lambda s: s.location == config.base_cell,
    }


# =====================================================
# Scenario files
# =====================================================

def load_scenario(path: Union[str, Path], layout: StateLayout) -> Scenario:
    """Read a JSON scenario document and check it against `layout`"""
    path = Path(path)
    try:
        data = json.loads(path.read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as e:
        raise ConfigValidationError(f"scenario {str(path)!r} could not be read", [f"<root>: {e}"])
    try:
        document = ScenarioDocument.model_validate(data)
    except ValidationError as e:
        violations = [f"{_format_loc(err['loc'])}: {err['msg']}" for err in e.errors()]
        raise ConfigValidationError("invalid scenario", violations)

    kinds = {k.value for k in EventKind}
    unknown = [f"events[{i}].kind: {ev.kind!r} is not one of {sorted(kinds)}"
               for i, ev in enumerate(document.events) if ev.kind not in kinds]
    if unknown:
        raise ConfigValidationError("invalid scenario", unknown)

    events = []
    for ev in document.events:
        kind = EventKind(ev.kind)
        value = int(bool(ev.value)) if kind == EventKind.RANGE else ev.value
        events.append((ev.epoch, ScenarioEvent(kind, value, ev.goal)))
    scenario = Scenario(
        initial_state=MissionState.from_vector(document.initial_state, layout),
        horizon=document.horizon,
        events=events,
        seed=document.seed,
    )
    logger.info(f"📄 Loaded scenario from {path}: {len(events)} events over {scenario.horizon} epochs")
    return scenario.validate(layout)
