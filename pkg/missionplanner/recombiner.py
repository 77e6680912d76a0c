"""
Mission Planner - recombination
Priority ranking, offline sub-MDP solves, agent assignment, local -> global
action mapping and the meta-policy that stitches sub-MDP policies into one
global policy.
"""

import logging
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Callable, Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np

from . import settings
from .decomposer import DecompositionPlan, SubMdp, SubMdpKind, _goal_term
from .errors import ContractError, MissionCompleteError, SolveError
from .mission_model import MissionModel
from .solver import (
    TIE_RTOL,
    Policy,
    SolveReport,
    ValueFunction,
    action_values,
    bellman_sweeps,
    extract_policy,
    value_iteration,
)
from .state_space import MissionState
from .workers.sub_solver import solve_sub_mdps

logger = logging.getLogger("missionplanner.recombiner")

LOCAL_ACTION_COUNT = 6


# ============================================================
# 1. Action mapping
# ============================================================

def map_local_action(a_local: int, goal: int, goal_count: int = 3) -> int:
    """Goal sub-MDP action -> global action (for 3 goals: 1, 1+d, 5, 5+d, 9, 10)"""
    if not 1 <= a_local <= LOCAL_ACTION_COUNT:
        raise ContractError(f"local action {a_local} outside 1..{LOCAL_ACTION_COUNT}")
    if not 1 <= goal <= goal_count:
        raise ContractError(f"goal index {goal} outside 1..{goal_count}")
    k = goal_count
    return {1: 1, 2: 1 + goal, 3: k + 2, 4: k + 2 + goal, 5: 2 * k + 3, 6: 2 * k + 4}[a_local]


def localize_action(a_global: int, goal: int, goal_count: int = 3) -> int:
    """
    Global action as seen by goal `goal`'s sub-MDP.

    Commitment to another goal reads as no commitment in the same mode.
    """
    k = goal_count
    if not 1 <= a_global <= 2 * k + 4:
        raise ContractError(f"global action {a_global} outside 1..{2 * k + 4}")
    if a_global == 1:
        return 1
    if a_global <= k + 1:
        return 2 if a_global - 1 == goal else 1
    if a_global == k + 2:
        return 3
    if a_global <= 2 * k + 2:
        return 4 if a_global - k - 2 == goal else 3
    return 5 if a_global == 2 * k + 3 else 6


def _to_global_table(sub: SubMdp) -> np.ndarray:
    """local id -> global id lookup (index 0 unused)"""
    if sub.kind != SubMdpKind.GOAL:
        return np.arange(sub.model.n_actions + 1)
    k = sub.parent.goal_count
    return np.array([0] + [map_local_action(a, sub.goal_index, k) for a in range(1, LOCAL_ACTION_COUNT + 1)])


def _to_local_table(sub: SubMdp) -> np.ndarray:
    """global id -> local id lookup (index 0 unused)"""
    n = sub.parent.n_actions
    if sub.kind != SubMdpKind.GOAL:
        return np.arange(n + 1)
    k = sub.parent.goal_count
    return np.array([0] + [localize_action(a, sub.goal_index, k) for a in range(1, n + 1)])


# ============================================================
# 2. Solutions
# ============================================================

class MetaMode(str, Enum):
    PRIORITY = "priority"
    # each eligible sub scores its own proposal by its value at its local state
    SUB_VALUE = "sub_value"
    # each proposal is scored by every eligible sub and the scores are summed
    BEST_VALUE = "best_value"


@dataclass
class PriorityParams:
    w_r: float = 1.0  # reward
    w_u: float = 1.0  # urgency
    w_k: float = 1.0  # risk exposure


@dataclass(eq=False)
class SubSolution:
    sub: SubMdp
    policy: Policy
    value: ValueFunction
    expected_return: float
    priority: float
    report: SolveReport
    completion_threshold: float = 0.0
    completion: bool = False
    progress: float = 0.0
    updates: int = 0
    action_values: Optional[np.ndarray] = field(default=None, repr=False)

    @property
    def sub_id(self) -> int:
        return self.sub.id

    def local_action(self, state: MissionState) -> int:
        local = self.sub.local_index[self.sub.parent.state_index(state)]
        return int(self.policy.actions[local])


def _exposure(sub: SubMdp) -> np.ndarray:
    """Fault plus threat penalty of every sub-MDP state"""
    if sub.kind == SubMdpKind.GOAL:
        model: MissionModel = sub.model
        d = model.digits
        layout = model.layout
    else:
        model = sub.parent
        layout = model.layout
        d = model.digits[sub.member_mask]
    k = layout.goal_count
    in_range = d[:, 1:1 + k].all(axis=1).astype(np.int64)
    return (model.fault_penalty[d[:, layout.fault_axis], in_range]
            + model.threat_penalty[d[:, layout.threat_axis], d[:, layout.mode_axis]])


def priority_score(
    sub: SubMdp,
    solution: Optional[SubSolution] = None,
    params: PriorityParams = PriorityParams(),
    state: Optional[MissionState] = None,
) -> float:
    """rho = w_r * max reward + w_u * goal urgency + w_k * mean risk exposure"""
    parent = sub.parent
    layout = parent.layout
    goals = [sub.goal_index] if sub.kind == SubMdpKind.GOAL else list(range(1, layout.goal_count + 1))

    reward = float(_goal_term(parent, goals)[sub.member_mask].max())
    if state is not None:
        urgency = float(max(state.goal_priorities[g - 1] for g in goals))
    else:
        digits = parent.digits[sub.member_mask]
        urgency = float(max(digits[:, layout.goal_axis(g)].max() for g in goals))
    exposure = float(_exposure(sub).mean())
    return params.w_r * reward + params.w_u * urgency + params.w_k * exposure


def rank(solutions: Iterable[SubSolution]) -> List[SubSolution]:
    """Descending priority, ties by sub id"""
    return sorted(solutions, key=lambda s: (-s.priority, s.sub_id))


def solve_all(
    plan: DecompositionPlan,
    tolerance: float = settings.DEFAULT_TOLERANCE,
    max_sweeps: int = settings.DEFAULT_MAX_SWEEPS,
    params: PriorityParams = PriorityParams(),
    threads: Optional[int] = None,
    completion_threshold: float = 0.0,
    state: Optional[MissionState] = None,
    solve_fn: Callable = value_iteration,
    sub_ids: Optional[Sequence[int]] = None,
) -> List[SubSolution]:
    """Solve every (or every listed) sub-MDP and rank the solutions"""
    subs = [s for s in plan.sub_mdps if sub_ids is None or s.id in sub_ids]
    results = solve_sub_mdps(
        [(s.id, s.model, f"sub {s.id} {s.label}") for s in subs],
        tolerance=tolerance, max_sweeps=max_sweeps, threads=threads, solve_fn=solve_fn,
    )
    solutions = []
    for sub in subs:
        values, report = results[sub.id]
        if not report.converged:
            raise SolveError(sub.id, report)
        solutions.append(SubSolution(
            sub=sub,
            policy=extract_policy(sub.model, values),
            value=values,
            expected_return=float(np.mean(-values.values)),
            priority=priority_score(sub, None, params, state),
            report=report,
            completion_threshold=completion_threshold,
            action_values=action_values(sub.model, values),
        ))
    return rank(solutions)


# ============================================================
# 3. Agents
# ============================================================

@dataclass
class Agent:
    id: int
    state: MissionState
    assigned_subs: List[int] = field(default_factory=list)


def assign_agents(
    agents: Sequence[Agent],
    ranked: Sequence[SubSolution],
    preconditions: Optional[Dict[int, Sequence[int]]] = None,
    min_agents: int = 1,
) -> Dict[int, List[int]]:
    """Queue each agent on every incomplete sub whose preconditions are complete, in rank order"""
    preconditions = preconditions or {}
    complete = {s.sub_id for s in ranked if s.completion}
    queues: Dict[int, List[int]] = {s.sub_id: [] for s in ranked}
    for agent in agents:
        for sol in ranked:
            if sol.completion:
                continue
            if not all(p in complete for p in preconditions.get(sol.sub_id, ())):
                continue
            queues[sol.sub_id].append(agent.id)
            if sol.sub_id not in agent.assigned_subs:
                agent.assigned_subs.append(sol.sub_id)
    for sub_id, queue in queues.items():
        if len(queue) < min_agents:
            logger.debug(f"sub {sub_id} has {len(queue)} agents (< {min_agents}), inactive")
    return queues


# ============================================================
# 4. Meta-policy
# ============================================================

@dataclass(frozen=True)
class Candidate:
    sub_id: int
    local_action: int
    score: float
    goal_index: Optional[int] = None
    goal_count: int = 3

    @property
    def global_action(self) -> int:
        if self.goal_index is None:
            return self.local_action
        return map_local_action(self.local_action, self.goal_index, self.goal_count)


def select_best_candidate(candidates: Sequence[Candidate]) -> Tuple[int, int]:
    """Highest score wins, ties to the lowest sub id; returns (global action, sub id)"""
    if not candidates:
        raise MissionCompleteError("no eligible sub-MDP left")
    best = max(c.score for c in candidates)
    tied = [c for c in candidates if c.score >= best - TIE_RTOL * (1.0 + abs(best))]
    chosen = min(tied, key=lambda c: c.sub_id)
    return chosen.global_action, chosen.sub_id


def _candidate_score(global_action: int, eligible: Sequence[SubSolution], index: int) -> float:
    total = 0.0
    for sol in eligible:
        local_state = sol.sub.local_index[index]
        local_action = _to_local_table(sol.sub)[global_action]
        total += float(sol.action_values[local_state, local_action - 1])
    return total


def _sub_value(sol: SubSolution, index: int) -> float:
    """Return-form value of `sol`'s sub at its local image of global state `index`"""
    return float(-sol.value.values[sol.sub.local_index[index]])


def meta_policy_action(
    state: MissionState,
    solutions: Sequence[SubSolution],
    mode: MetaMode = MetaMode.BEST_VALUE,
) -> Tuple[int, int]:
    """(global action, chosen sub id) at one global state"""
    if not solutions:
        raise MissionCompleteError("no sub-MDP solutions")
    index = solutions[0].sub.parent.state_index(state)
    eligible = [s for s in solutions if not s.completion and s.sub.member_mask[index]]
    if not eligible:
        raise MissionCompleteError("every sub-MDP covering this state is complete")

    mode = MetaMode(mode)
    if mode == MetaMode.PRIORITY:
        top = rank(eligible)[0]
        return int(_to_global_table(top.sub)[top.local_action(state)]), top.sub_id

    candidates = []
    for sol in eligible:
        a_global = int(_to_global_table(sol.sub)[sol.local_action(state)])
        if mode == MetaMode.SUB_VALUE:
            score = _sub_value(sol, index)
        else:
            score = _candidate_score(a_global, eligible, index)
        candidates.append(Candidate(sub_id=sol.sub_id, local_action=a_global, score=score))
    return select_best_candidate(candidates)


@dataclass
class GlobalPolicy(Policy):
    chosen_sub: Optional[np.ndarray] = None
    refine_sweeps: int = 0


def seed_values(
    plan: DecompositionPlan,
    solutions: Sequence[SubSolution],
    model_global: MissionModel,
) -> ValueFunction:
    """Sum over member sub-MDPs of each sub's value at the state's local image"""
    n = model_global.n_states
    if plan.global_states != n:
        raise ContractError(f"plan covers {plan.global_states:,} states, model has {n:,}")
    seed = np.zeros(n)
    for sol in solutions:
        mask = sol.sub.member_mask
        seed[mask] += sol.value.values[sol.sub.local_index[mask]]
    return ValueFunction(seed, model_global.layout)


def build_combined_policy(
    plan: DecompositionPlan,
    solutions: Sequence[SubSolution],
    model_global: MissionModel,
    mode: MetaMode = MetaMode.BEST_VALUE,
    refine_sweeps: int = 0,
) -> GlobalPolicy:
    """
    Meta-policy action at every global state, all sub-MDPs eligible.

    With `refine_sweeps` > 0 the summed sub-MDP values seed that many
    Bellman sweeps on `model_global` and the actions become greedy in the
    result; `chosen_sub` still records the meta-policy's pick.
    """
    n = model_global.n_states
    if plan.global_states != n:
        raise ContractError(f"plan covers {plan.global_states:,} states, model has {n:,}")
    if refine_sweeps < 0:
        raise ContractError(f"refine_sweeps must be >= 0, got {refine_sweeps}")
    mode = MetaMode(mode)
    by_id = sorted(solutions, key=lambda s: s.sub_id)
    members = np.stack([s.sub.member_mask for s in by_id], axis=1)
    local = np.stack([np.where(s.sub.member_mask, s.sub.local_index, 0) for s in by_id], axis=1)
    proposals = np.stack([
        _to_global_table(s.sub)[s.policy.actions[local[:, i]]] for i, s in enumerate(by_id)
    ], axis=1)
    ids = np.array([s.sub_id for s in by_id])

    if mode == MetaMode.PRIORITY:
        choice = np.zeros(n, dtype=np.int64)
        for sol in reversed(rank(by_id)):
            col = int(np.flatnonzero(ids == sol.sub_id)[0])
            choice[members[:, col]] = col
    else:
        scores = np.full((n, len(by_id)), -np.inf)
        for d, own in enumerate(by_id):
            if mode == MetaMode.SUB_VALUE:
                total = -own.value.values[local[:, d]]
            else:
                total = np.zeros(n)
                for i, sol in enumerate(by_id):
                    local_actions = _to_local_table(sol.sub)[proposals[:, d]]
                    total += np.where(members[:, i], sol.action_values[local[:, i], local_actions - 1], 0.0)
            scores[:, d] = np.where(members[:, d], total, -np.inf)
        best = scores.max(axis=1, keepdims=True)
        tied = scores >= best - TIE_RTOL * (1.0 + np.abs(best))
        choice = np.argmax(tied, axis=1)

    rows = np.arange(n)
    actions = proposals[rows, choice].astype(np.int64)
    if refine_sweeps:
        seeded = bellman_sweeps(model_global, seed_values(plan, by_id, model_global), refine_sweeps,
                                label="refine")
        actions = extract_policy(model_global, seeded).actions
    policy = GlobalPolicy(
        actions=actions,
        layout=model_global.layout,
        chosen_sub=ids[choice],
        refine_sweeps=refine_sweeps,
    )
    refined = f", {refine_sweeps} refining sweeps" if refine_sweeps else ""
    logger.info(f"🔗 Combined policy over {n:,} states ({mode.value} mode, {len(by_id)} sub-MDPs{refined})")
    return policy


# ============================================================
# 5. Progress & replanning
# ============================================================

def update_progress(solution: SubSolution, rewards: Sequence[float]) -> SubSolution:
    """Running mean of realised rewards; completion is sticky"""
    rewards = list(rewards)
    if not rewards:
        return solution
    count = solution.updates + len(rewards)
    progress = (solution.progress * solution.updates + float(sum(rewards))) / count
    completion = solution.completion or progress >= solution.completion_threshold
    return replace(solution, progress=progress, updates=count, completion=completion)


def replan(
    plan: DecompositionPlan,
    solutions: Sequence[SubSolution],
    changed_subs: Iterable[int],
    tolerance: float = settings.DEFAULT_TOLERANCE,
    params: PriorityParams = PriorityParams(),
    state: Optional[MissionState] = None,
    solve_fn: Callable = value_iteration,
    threads: Optional[int] = None,
) -> List[SubSolution]:
    """Re-score and re-solve only `changed_subs`; other solutions are reused as-is"""
    changed = sorted(set(changed_subs))
    if not changed:
        return list(solutions)
    known = {s.sub_id for s in solutions}
    unknown = [c for c in changed if c not in known]
    if unknown:
        raise ContractError(f"changed sub-MDPs {unknown} are not in the plan's solutions")

    fresh = {
        s.sub_id: s for s in solve_all(plan, tolerance=tolerance, params=params, threads=threads,
                                       state=state, solve_fn=solve_fn, sub_ids=changed)
    }
    merged = []
    for sol in solutions:
        if sol.sub_id in fresh:
            new = fresh[sol.sub_id]
            new = replace(new, completion_threshold=sol.completion_threshold)
            merged.append(new)
        else:
            merged.append(sol)
    logger.info(f"🔄 Replanned sub-MDPs {changed}")
    return rank(merged)
