"""
Value iteration, greedy policy extraction and state-action scoring.

Values are expected discounted cost-to-go (V, minimised). Action scores in
return form are reported as -Q so that the best action is the argmax.
"""

import logging
import time
from dataclasses import dataclass, field
from typing import List, Optional, Tuple

import numpy as np

from . import settings
from .errors import ContractError
from .mdp import MdpModel
from .state_space import StateLayout

logger = logging.getLogger("missionplanner.solver")

# actions whose Q is within TIE_RTOL * (1 + |min Q|) of the minimum are tied
TIE_RTOL = 1e-10


@dataclass
class ValueFunction:
    values: np.ndarray
    layout: Optional[StateLayout] = None

    def __len__(self) -> int:
        return len(self.values)


@dataclass
class Policy:
    """One action id per state"""
    actions: np.ndarray
    layout: Optional[StateLayout] = None

    def __len__(self) -> int:
        return len(self.actions)

    def action_at(self, index: int) -> int:
        return int(self.actions[index])


@dataclass
class SolveReport:
    iterations: int = 0
    residual_history: List[float] = field(default_factory=list)
    wall_time: float = 0.0
    converged: bool = False

    @property
    def final_residual(self) -> float:
        return self.residual_history[-1] if self.residual_history else float("nan")


def _as_values(v) -> np.ndarray:
    return v.values if isinstance(v, ValueFunction) else np.asarray(v, dtype=np.float64)


def q_values(model: MdpModel, v) -> np.ndarray:
    """(N, A) Q(s, a) = J(s, a) + gamma * sum P(s'|s,a) V(s')"""
    return model.cost_matrix() + model.discount * model.expected_values(_as_values(v))


def greedy_positions(q: np.ndarray) -> np.ndarray:
    """Column of the lowest-id action within tie tolerance of each row minimum"""
    best = q.min(axis=1, keepdims=True)
    tied = q <= best + TIE_RTOL * (1.0 + np.abs(best))
    return np.argmax(tied, axis=1)


def value_iteration(
    model: MdpModel,
    tolerance: float = settings.DEFAULT_TOLERANCE,
    max_sweeps: int = settings.DEFAULT_MAX_SWEEPS,
    label: str = "model",
) -> Tuple[ValueFunction, SolveReport]:
    """Synchronous sweeps from V = 0 until the sup-norm change drops below `tolerance`"""
    if tolerance <= 0:
        raise ContractError(f"tolerance must be > 0, got {tolerance}")
    if max_sweeps < 1:
        raise ContractError(f"max_sweeps must be >= 1, got {max_sweeps}")

    start = time.monotonic()
    report = SolveReport()
    v = np.zeros(model.n_states)
    costs = model.cost_matrix()
    gamma = model.discount

    for sweep in range(1, max_sweeps + 1):
        v_next = (costs + gamma * model.expected_values(v)).min(axis=1)
        residual = float(np.max(np.abs(v_next - v))) if v.size else 0.0
        v = v_next
        report.residual_history.append(residual)
        report.iterations = sweep
        if sweep % settings.LOG_EVERY == 0:
            logger.debug(f"[{label}] sweep {sweep}: residual={residual:.3e}")
        if residual < tolerance:
            report.converged = True
            break

    report.wall_time = time.monotonic() - start
    if report.converged:
        logger.info(
            f"✅ [{label}] converged in {report.iterations} sweeps "
            f"(residual={report.final_residual:.3e}, {report.wall_time:.2f}s)"
        )
    else:
        logger.warning(
            f"⚠️ [{label}] not converged after {report.iterations} sweeps "
            f"(residual={report.final_residual:.3e})"
        )
    return ValueFunction(v, getattr(model, "layout", None)), report


def bellman_sweeps(model: MdpModel, v, sweeps: int, label: str = "model") -> ValueFunction:
    """`sweeps` synchronous Bellman updates starting from `v` instead of zero"""
    if sweeps < 0:
        raise ContractError(f"sweeps must be >= 0, got {sweeps}")
    values = np.array(_as_values(v), dtype=np.float64)
    if values.shape != (model.n_states,):
        raise ContractError(f"seed has {values.size:,} values, model has {model.n_states:,} states")
    costs = model.cost_matrix()
    residual = float("nan")
    for _ in range(sweeps):
        v_next = (costs + model.discount * model.expected_values(values)).min(axis=1)
        residual = float(np.max(np.abs(v_next - values))) if values.size else 0.0
        values = v_next
    if sweeps:
        logger.debug(f"[{label}] {sweeps} seeded sweeps, last residual={residual:.3e}")
    return ValueFunction(values, getattr(model, "layout", None))


def extract_policy(model: MdpModel, v) -> Policy:
    """argmin_a Q(s, a), ties to the lowest action id"""
    positions = greedy_positions(q_values(model, v))
    return Policy(model.action_ids[positions].copy(), getattr(model, "layout", None))


def action_values(model: MdpModel, v) -> np.ndarray:
    """(N, A) return-form scores -J + gamma * sum P W with W = -V"""
    return -q_values(model, v)


def state_action_values(model: MdpModel, v, state: int) -> np.ndarray:
    """Return-form scores of every action at one state"""
    values = _as_values(v)
    costs = model.cost_matrix()[state]
    scores = np.empty(len(model.action_ids))
    for pos, action_id in enumerate(model.action_ids):
        idx, probs = model.transition(state, int(action_id))
        scores[pos] = -costs[pos] + model.discount * float(probs @ (-values[idx]))
    return scores


def bellman_residual(model: MdpModel, v) -> float:
    values = _as_values(v)
    return float(np.max(np.abs(values - q_values(model, values).min(axis=1))))


def evaluate_policy(
    model: MdpModel,
    policy: Policy,
    tolerance: float = 1e-10,
    max_sweeps: int = 100_000,
) -> ValueFunction:
    """Iterative evaluation of a fixed policy"""
    positions = np.array([model.action_position(int(a)) for a in np.unique(policy.actions)])
    lookup = dict(zip(np.unique(policy.actions).tolist(), positions.tolist()))
    cols = np.array([lookup[int(a)] for a in policy.actions], dtype=np.int64)
    rows = np.arange(model.n_states)
    costs = model.cost_matrix()[rows, cols]
    v = np.zeros(model.n_states)
    for _ in range(max_sweeps):
        v_next = costs + model.discount * model.expected_values(v)[rows, cols]
        done = np.max(np.abs(v_next - v)) < tolerance if v.size else True
        v = v_next
        if done:
            break
    return ValueFunction(v, getattr(model, "layout", None))
