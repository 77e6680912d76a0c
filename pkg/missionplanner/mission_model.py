"""
UAV mission MDP.

Builds the action set, the consolidated cost and the factorised transition
kernel from a ModelConfig. The Bellman backup never materialises the
transition matrix: the value tensor is contracted axis by axis with the
threat, fault, range and priority kernels and gathered along the
deterministic location / commitment / mode digits.
"""

import itertools
import logging
import math
from dataclasses import dataclass
from functools import cached_property
from typing import Dict, List, Optional, Tuple

import numpy as np

from .errors import ConfigValidationError, ContractError
from .mdp import MdpModel
from .schemas import (
    DistanceMetric,
    FaultClass,
    ModelConfig,
    RangeDynamics,
    ValidationIssue,
    ValidationReport,
    config_violations,
)
from .state_space import MissionState, StateLayout, all_digits, decode_state, encode_state, state_count

logger = logging.getLogger("missionplanner.mission_model")

MASS_TOLERANCE = 1e-9


# =====================================================
# Actions
# =====================================================

@dataclass(frozen=True)
class ActionSpec:
    id: int
    label: str
    commit_goal: int  # 0 = no commitment
    agile: bool
    fault_class: FaultClass
    target_cell: int  # -1 = hold position
    next_commitment: int

    @property
    def is_commit(self) -> bool:
        return self.commit_goal > 0

    @property
    def charges_distance(self) -> bool:
        return self.is_commit or self.fault_class in (FaultClass.RECHARGE, FaultClass.REPAIR)


def action_count(goal_count: int) -> int:
    return 2 * goal_count + 4


def idle_action(goal_count: int, agile: bool = False) -> int:
    return goal_count + 2 if agile else 1


def commit_action(goal: int, goal_count: int, agile: bool = False) -> int:
    if not 1 <= goal <= goal_count:
        raise ContractError(f"goal {goal} outside 1..{goal_count}")
    return goal_count + 2 + goal if agile else 1 + goal


def recharge_action(goal_count: int) -> int:
    return 2 * goal_count + 3


def repair_action(goal_count: int) -> int:
    return 2 * goal_count + 4


def action_specs(config: ModelConfig) -> List[ActionSpec]:
    k = config.goal_count
    base = config.base_cell
    idle_target = base if config.idle_returns_to_base else -1
    specs = [ActionSpec(1, "no commitment", 0, False, FaultClass.NORMAL, idle_target, 0)]
    for j in range(1, k + 1):
        specs.append(ActionSpec(1 + j, f"commit goal {j}", j, False, FaultClass.NORMAL, config.goal_cells[j - 1], j))
    specs.append(ActionSpec(k + 2, "no commitment (agile)", 0, True, FaultClass.AGILE, idle_target, 0))
    for j in range(1, k + 1):
        specs.append(ActionSpec(k + 2 + j, f"commit goal {j} (agile)", j, True, FaultClass.AGILE,
                                config.goal_cells[j - 1], j))
    specs.append(ActionSpec(2 * k + 3, "recharge", 0, False, FaultClass.RECHARGE, base, 0))
    specs.append(ActionSpec(2 * k + 4, "repair", 0, False, FaultClass.REPAIR, base, 0))
    return specs


# =====================================================
# Grid geometry
# =====================================================

def cell_distance(config: ModelConfig, a: int, b: int) -> float:
    cols = config.grid_dims[1]
    ra, ca = divmod(a, cols)
    rb, cb = divmod(b, cols)
    if config.distance_metric == DistanceMetric.EUCLIDEAN:
        return math.hypot(ra - rb, ca - cb)
    return float(abs(ra - rb) + abs(ca - cb))


def step_toward(config: ModelConfig, cell: int, target: int) -> int:
    """One cell along a shortest path, rows first then columns"""
    if target < 0 or cell == target:
        return cell
    cols = config.grid_dims[1]
    r, c = divmod(cell, cols)
    tr, tc = divmod(target, cols)
    if r != tr:
        r += 1 if tr > r else -1
    else:
        c += 1 if tc > c else -1
    return r * cols + c


def distance_cost(config: ModelConfig, spec: ActionSpec, location: int) -> float:
    """h(a, l)"""
    if not spec.charges_distance:
        return 0.0
    return config.distance_scale * cell_distance(config, location, spec.target_cell)


# =====================================================
# Scalar cost
# =====================================================

def _spec_for(config: ModelConfig, action_id: int) -> ActionSpec:
    specs = action_specs(config)
    if not 1 <= action_id <= len(specs):
        raise ContractError(f"action {action_id} outside 1..{len(specs)}")
    return specs[action_id - 1]


def _state_cost(state: MissionState, config: ModelConfig) -> float:
    cost = 0.0
    for j, (g, r) in enumerate(zip(state.goal_priorities, state.range_flags)):
        committed = 1 if state.commitment == j + 1 else 0
        cost += config.goal_weights[j] * g * int(r) * (1 - committed)
        cost += config.range_penalties[j] * g * (1 - int(r))
    in_range = 1 if all(state.range_flags) else 0
    cost += config.fault_penalty_table[state.fault - 1][in_range]
    cost += config.threat_penalty_table[state.threat][state.nav_mode]
    return cost


def global_cost(state: MissionState, action_id: int, config: ModelConfig) -> float:
    """Goal, distance, fault, out-of-range and threat terms"""
    state.validate(config.state_layout)
    spec = _spec_for(config, action_id)
    return _state_cost(state, config) + distance_cost(config, spec, state.location)


def local_cost(state: MissionState, action_id: int, config: ModelConfig) -> float:
    """Single-goal cost without the distance term"""
    if config.goal_count != 1:
        raise ContractError(f"local_cost needs a single-goal layout, got goal_count={config.goal_count}")
    state.validate(config.state_layout)
    _spec_for(config, action_id)
    return _state_cost(state, config)


# =====================================================
# Model
# =====================================================

def _contract(x: np.ndarray, kernel: np.ndarray, axis: int) -> np.ndarray:
    """y[.., i, ..] = sum_j kernel[i, j] x[.., j, ..] along `axis`"""
    return np.moveaxis(np.tensordot(x, kernel, axes=([axis], [1])), -1, axis)


class MissionModel(MdpModel):
    """Factored mission MDP; immutable once built"""

    def __init__(self, config: ModelConfig, include_distance: bool = True):
        self.config = config
        self.layout: StateLayout = config.state_layout
        self.include_distance = include_distance
        self.discount = float(config.discount)
        self.actions = action_specs(config)
        self.action_ids = np.array([a.id for a in self.actions], dtype=np.int64)

        k = self.layout.goal_count
        self.goal_cells = np.asarray(config.goal_cells, dtype=np.int64)
        self.goal_weights = np.asarray(config.goal_weights, dtype=np.float64)
        self.range_penalties = np.asarray(config.range_penalties, dtype=np.float64)
        self.fault_penalty = np.asarray(config.fault_penalty_table, dtype=np.float64)
        self.threat_penalty = np.asarray(config.threat_penalty_table, dtype=np.float64)
        self.fault_kernels = {c: np.asarray(config.fault_kernels.for_class(c), dtype=np.float64) for c in FaultClass}
        self.priority_kernels = [np.asarray(kernel, dtype=np.float64) for kernel in config.priority_kernels]
        self.threat_kernel = np.asarray(config.threat_kernel, dtype=np.float64)
        p = config.range_decay_probability
        self.range_kernel = np.array([[1.0, 0.0], [p, 1.0 - p]])
        self.decays = config.range_dynamics == RangeDynamics.DECAY and p > 0.0

        cells = self.layout.location_count
        self.next_location = np.array(
            [[step_toward(config, l, a.target_cell) for a in self.actions] for l in range(cells)], dtype=np.int64)
        self.distance = np.array(
            [[distance_cost(config, a, l) for a in self.actions] for l in range(cells)], dtype=np.float64)
        self._goal_axes = [self.layout.goal_axis(j) for j in range(1, k + 1)]

    # ---------------------------------------------
    # MdpModel surface
    # ---------------------------------------------

    @property
    def n_states(self) -> int:
        return state_count(self.layout)

    @property
    def goal_count(self) -> int:
        return self.layout.goal_count

    def action(self, action_id: int) -> ActionSpec:
        if not 1 <= action_id <= len(self.actions):
            raise ContractError(f"action {action_id} outside 1..{len(self.actions)}")
        return self.actions[action_id - 1]

    @cached_property
    def digits(self) -> np.ndarray:
        """(N, digit_count) digit matrix, row i is state i"""
        return all_digits(self.layout)

    @cached_property
    def _costs(self) -> np.ndarray:
        k = self.layout.goal_count
        d = self.digits
        f = d[:, 0]
        r = d[:, 1:1 + k]
        g = d[:, 1 + k:1 + 2 * k]
        loc = d[:, 1 + 2 * k]
        c = d[:, 2 + 2 * k]
        t = d[:, 3 + 2 * k]
        m = d[:, 4 + 2 * k]
        committed = c[:, None] == np.arange(1, k + 1)[None, :]
        goal_term = (self.goal_weights * g * r * (~committed)).sum(axis=1)
        range_term = (self.range_penalties * g * (1 - r)).sum(axis=1)
        in_range = r.all(axis=1).astype(np.int64)
        state_cost = goal_term + range_term + self.fault_penalty[f, in_range] + self.threat_penalty[t, m]
        costs = np.repeat(state_cost[:, None], len(self.actions), axis=1)
        if self.include_distance:
            costs += self.distance[loc]
        return costs

    def cost_matrix(self) -> np.ndarray:
        return self._costs

    def expected_values(self, values: np.ndarray) -> np.ndarray:
        v = np.asarray(values, dtype=np.float64).reshape(self.layout.dims)
        out = np.empty((self.n_states, len(self.actions)))
        for pos, spec in enumerate(self.actions):
            out[:, pos] = self._backup(v, pos, spec).reshape(-1)
        return out

    def _backup(self, v: np.ndarray, pos: int, spec: ActionSpec) -> np.ndarray:
        layout = self.layout
        k = layout.goal_count
        loc_axis = layout.location_axis
        commit_axis = layout.commitment_axis

        # next mode is set by the action
        x = v[..., 1 if spec.agile else 0]
        # threat, then fault: axes become current-state axes
        x = x @ self.threat_kernel.T
        x = np.tensordot(self.fault_kernels[spec.fault_class], x, axes=([1], [0]))
        for j in range(1, k + 1):
            axis = layout.range_axis(j)
            if spec.fault_class == FaultClass.RECHARGE:
                x = np.take(x, [1], axis=axis)
            elif self.decays:
                x = _contract(x, self.range_kernel, axis)

        # deterministic location / commitment, then the priority kernels
        y = np.take(x, self.next_location[:, pos], axis=loc_axis)
        y = np.take(y, spec.next_commitment, axis=commit_axis)
        for j, axis in enumerate(self._goal_axes):
            y = _contract(y, self.priority_kernels[j], axis)
        y = np.expand_dims(y, commit_axis)
        out = np.array(np.broadcast_to(y, layout.dims[:-1]))

        # achieved goal: at goal j's cell while committed to j
        for j in range(1, k + 1):
            cell = int(self.goal_cells[j - 1])
            next_commit = 0 if spec.commit_goal == j else spec.next_commitment
            z = np.take(x, int(self.next_location[cell, pos]), axis=loc_axis)
            z = np.take(z, next_commit, axis=loc_axis)
            for i, axis in enumerate(self._goal_axes, start=1):
                if i == j:
                    z = np.take(z, [0], axis=axis)
                else:
                    z = _contract(z, self.priority_kernels[i - 1], axis)
            out[..., cell, j, :] = z

        return np.broadcast_to(out[..., None], layout.dims)

    # ---------------------------------------------
    # Sparse per-state view
    # ---------------------------------------------

    def factor_distributions(self, state: MissionState, action_id: int) -> List[List[Tuple[int, float]]]:
        """Per-digit (value, probability) supports of the next state, in digit order"""
        spec = self.action(action_id)
        k = self.layout.goal_count
        achieved = [
            state.location == self.goal_cells[j] and state.commitment == j + 1 for j in range(k)
        ]

        def support(row) -> List[Tuple[int, float]]:
            return [(i, float(p)) for i, p in enumerate(row) if p > 0.0]

        factors = [support(self.fault_kernels[spec.fault_class][state.fault - 1])]
        for r in state.range_flags:
            if spec.fault_class == FaultClass.RECHARGE:
                factors.append([(1, 1.0)])
            elif self.decays:
                factors.append(support(self.range_kernel[int(r)]))
            else:
                factors.append([(int(r), 1.0)])
        for j, g in enumerate(state.goal_priorities):
            factors.append([(0, 1.0)] if achieved[j] else support(self.priority_kernels[j][g]))
        next_commit = spec.next_commitment
        if spec.is_commit and achieved[spec.commit_goal - 1]:
            next_commit = 0
        factors.append([(int(self.next_location[state.location, action_id - 1]), 1.0)])
        factors.append([(next_commit, 1.0)])
        factors.append(support(self.threat_kernel[state.threat]))
        factors.append([(1 if spec.agile else 0, 1.0)])
        return factors

    def transition_distribution(self, state: MissionState, action_id: int) -> Dict[MissionState, float]:
        state.validate(self.layout)
        dist: Dict[MissionState, float] = {}
        for combo in itertools.product(*self.factor_distributions(state, action_id)):
            digits = [value for value, _ in combo]
            prob = math.prod(p for _, p in combo)
            nxt = MissionState.from_digits(digits, self.layout.goal_count)
            dist[nxt] = dist.get(nxt, 0.0) + prob
        return dist

    def transition(self, state: int, action_id: int) -> Tuple[np.ndarray, np.ndarray]:
        dist = self.transition_distribution(decode_state(state, self.layout), action_id)
        idx = np.array([encode_state(s, self.layout) for s in dist], dtype=np.int64)
        probs = np.array(list(dist.values()))
        order = np.argsort(idx)
        return idx[order], probs[order]

    def state_index(self, state: MissionState) -> int:
        return int(encode_state(state, self.layout))

    def state_at(self, index: int) -> MissionState:
        return decode_state(index, self.layout)


# =====================================================
# Builders
# =====================================================

def build_model(config: ModelConfig, include_distance: bool = True) -> MissionModel:
    """Validate `config` and build its mission model"""
    violations = config_violations(config)
    if violations:
        raise ConfigValidationError("invalid model config", violations)
    model = MissionModel(config, include_distance=include_distance)
    logger.info(
        f"🛩️ Built model {config.name!r}: {model.n_states:,} states, {model.n_actions} actions, "
        f"gamma={model.discount}"
    )
    return model


def transition_distribution(state: MissionState, action_id: int, config: ModelConfig) -> Dict[MissionState, float]:
    return MissionModel(config).transition_distribution(state, action_id)


def validate_model(model: MdpModel) -> ValidationReport:
    """Flag every (s, a) whose mass deviates from 1 and every negative cost"""
    mass = model.expected_values(np.ones(model.n_states))
    costs = model.cost_matrix()
    issues: List[ValidationIssue] = []
    for s, a in zip(*np.nonzero(np.abs(mass - 1.0) > MASS_TOLERANCE)):
        issues.append(ValidationIssue(state=int(s), action=int(model.action_ids[a]),
                                      kind="probability_mass", value=float(mass[s, a])))
    for s, a in zip(*np.nonzero(costs < 0.0)):
        issues.append(ValidationIssue(state=int(s), action=int(model.action_ids[a]),
                                      kind="negative_cost", value=float(costs[s, a])))
    report = ValidationReport(total_pairs=int(mass.size), issues=issues, issue_count=len(issues))
    if issues:
        logger.warning(f"⚠️ Model validation found {len(issues)} issues")
    else:
        logger.info(f"✅ Model valid ({mass.size:,} state-action pairs checked)")
    return report
