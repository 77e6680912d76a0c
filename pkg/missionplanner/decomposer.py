"""
Mission Planner - decomposition
Goal-, location-, fault-based and mixed partitioning of the mission MDP
into sub-MDPs, candidate scoring, merging and overlap pruning.
"""

import itertools
import logging
from dataclasses import dataclass, field
from enum import Enum
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from .errors import ContractError, CoverageError
from .mdp import MdpModel, RestrictedMdp
from .mission_model import MissionModel
from .schemas import Criterion, DecomposeOptions, PlanSummary, SubMdpSummary
from .state_space import MissionState, encode_digits, state_count

logger = logging.getLogger("missionplanner.decomposer")

Weights = Tuple[float, float, float]


# ============================================================
# 1. Types
# ============================================================

class SubMdpKind(str, Enum):
    GOAL = "goal"
    LOCATION = "location"
    FAULT = "fault"
    MIXED = "mixed"


KIND_ORDER = {SubMdpKind.GOAL: 0, SubMdpKind.LOCATION: 1, SubMdpKind.FAULT: 2, SubMdpKind.MIXED: 3}


@dataclass(eq=False)
class SubMdp:
    id: int
    kind: SubMdpKind
    focus: tuple
    model: MdpModel
    parent: MissionModel
    member_mask: np.ndarray
    local_index: np.ndarray  # global index -> local index, -1 outside
    goal_index: Optional[int] = None

    @property
    def n_states(self) -> int:
        return self.model.n_states

    @property
    def label(self) -> str:
        if self.kind == SubMdpKind.GOAL:
            return f"goal {self.focus[0]}"
        if self.kind == SubMdpKind.LOCATION:
            return "cells " + ",".join(str(c) for c in self.focus)
        if self.kind == SubMdpKind.FAULT:
            return f"fault {self.focus[0]}"
        return "+".join(self.focus)

    def sort_key(self):
        return KIND_ORDER[self.kind], self.focus

    def member_predicate(self, state: MissionState) -> bool:
        return bool(self.member_mask[self.parent.state_index(state)])

    def projection(self, state: MissionState) -> MissionState:
        """Local state of a member; goal sub-MDPs keep only their goal's digits"""
        if not self.member_predicate(state):
            raise ContractError(f"state is not a member of sub-MDP {self.id} ({self.label})")
        if self.kind == SubMdpKind.GOAL:
            return project_state(state, self.goal_index)
        return state


@dataclass
class CandidateScore:
    reward_impact: float
    spatial_coherence: float
    fault_sensitivity: float
    total: float


@dataclass
class DecompositionPlan:
    sub_mdps: List[SubMdp]
    membership: np.ndarray  # (N, n_subs) bool, the mapping phi
    t_max: int
    weights: Weights
    criterion: Criterion
    scores: Dict[int, CandidateScore] = field(default_factory=dict)
    diagnostics: List[str] = field(default_factory=list)

    @property
    def global_states(self) -> int:
        return self.membership.shape[0]

    def mapping(self, index: int) -> List[int]:
        """phi: sub-MDP ids containing global state `index`"""
        return [self.sub_mdps[i].id for i in np.flatnonzero(self.membership[index])]

    def sub(self, sub_id: int) -> SubMdp:
        for sub in self.sub_mdps:
            if sub.id == sub_id:
                return sub
        raise ContractError(f"no sub-MDP with id {sub_id}")

    def summary(self) -> PlanSummary:
        counts = self.membership.sum(axis=1) if self.membership.size else np.zeros(1)
        subs = []
        for sub in self.sub_mdps:
            score = self.scores.get(sub.id) or CandidateScore(0.0, 0.0, 0.0, 0.0)
            subs.append(SubMdpSummary(
                id=sub.id, kind=sub.kind.value, focus=sub.label, states=sub.n_states, score=score.total,
                reward_impact=score.reward_impact, spatial_coherence=score.spatial_coherence,
                fault_sensitivity=score.fault_sensitivity,
            ))
        return PlanSummary(
            criterion=self.criterion.value, t_max=self.t_max, weights=tuple(self.weights),
            global_states=self.global_states, sub_mdps=subs,
            min_memberships=int(counts.min()), max_memberships=int(counts.max()),
            mean_memberships=float(counts.mean()), diagnostics=list(self.diagnostics),
        )


# ============================================================
# 2. Projections
# ============================================================

def project_state(state: MissionState, goal: int) -> MissionState:
    j = goal - 1
    return MissionState(
        fault=state.fault,
        range_flags=(state.range_flags[j],),
        goal_priorities=(state.goal_priorities[j],),
        location=state.location,
        commitment=1 if state.commitment == goal else 0,
        threat=state.threat,
        nav_mode=state.nav_mode,
    )


def _goal_local_index(parent: MissionModel, goal: int, local_layout) -> np.ndarray:
    layout = parent.layout
    d = parent.digits
    local = np.stack([
        d[:, layout.fault_axis],
        d[:, layout.range_axis(goal)],
        d[:, layout.goal_axis(goal)],
        d[:, layout.location_axis],
        (d[:, layout.commitment_axis] == goal).astype(np.int64),
        d[:, layout.threat_axis],
        d[:, layout.mode_axis],
    ], axis=1)
    return encode_digits(local, local_layout)


def quadrant_regions(grid_dims: Tuple[int, int]) -> List[List[int]]:
    rows, cols = grid_dims
    row_cut, col_cut = (rows + 1) // 2, (cols + 1) // 2
    regions = []
    for row_range in (range(0, row_cut), range(row_cut, rows)):
        for col_range in (range(0, col_cut), range(col_cut, cols)):
            cells = sorted(r * cols + c for r in row_range for c in col_range)
            if cells:
                regions.append(cells)
    return regions


def _restricted(parent: MissionModel, kind: SubMdpKind, focus: tuple, mask: np.ndarray) -> SubMdp:
    model = RestrictedMdp(parent, mask)
    return SubMdp(id=0, kind=kind, focus=focus, model=model, parent=parent,
                  member_mask=model.mask, local_index=model.local_index)


# ============================================================
# 3. Partitioning
# ============================================================

def partition(
    model: MissionModel,
    criterion: Criterion,
    t_max: int,
    regions: Optional[Sequence[Sequence[int]]] = None,
    diagnostics: Optional[List[str]] = None,
) -> List[SubMdp]:
    """Candidate sub-MDPs for one criterion; candidates above t_max are omitted"""
    if t_max <= 0:
        raise ContractError(f"t_max must be > 0, got {t_max}")
    criterion = Criterion(criterion)
    layout = model.layout
    notes = diagnostics if diagnostics is not None else []
    candidates: List[SubMdp] = []
    omitted = 0

    if criterion == Criterion.GOAL:
        for goal in range(1, layout.goal_count + 1):
            config = model.config.project_goal(goal)
            size = state_count(config.state_layout)
            if size > t_max:
                omitted += 1
                continue
            local_model = MissionModel(config, include_distance=model.config.local_cost_includes_distance)
            candidates.append(SubMdp(
                id=0, kind=SubMdpKind.GOAL, focus=(goal,), model=local_model, parent=model,
                member_mask=np.ones(model.n_states, dtype=bool),
                local_index=_goal_local_index(model, goal, local_model.layout),
                goal_index=goal,
            ))
    elif criterion == Criterion.LOCATION:
        cells = model.digits[:, layout.location_axis]
        for region in regions or quadrant_regions(model.config.grid_dims):
            mask = np.isin(cells, region)
            if mask.sum() > t_max:
                omitted += 1
                continue
            if mask.any():
                candidates.append(_restricted(model, SubMdpKind.LOCATION, tuple(sorted(region)), mask))
    elif criterion == Criterion.FAULT:
        faults = model.digits[:, layout.fault_axis]
        for fault in range(1, layout.fault_count + 1):
            mask = faults == fault - 1
            if mask.sum() > t_max:
                omitted += 1
                continue
            candidates.append(_restricted(model, SubMdpKind.FAULT, (fault,), mask))
    else:
        raise ContractError("partition takes goal, location or fault; use decompose for mixed plans")

    if omitted:
        notes.append(f"{criterion.value}: {omitted} candidates exceed t_max={t_max:,}")
    if not candidates:
        message = f"no {criterion.value} candidate fits t_max={t_max:,}"
        notes.append(message)
        logger.warning(f"⚠️ {message}")
    return candidates


# ============================================================
# 4. Scoring & merging
# ============================================================

def _goal_term(model: MissionModel, goals: Sequence[int]) -> np.ndarray:
    layout = model.layout
    d = model.digits
    total = np.zeros(model.n_states)
    for goal in goals:
        g = d[:, layout.goal_axis(goal)]
        r = d[:, layout.range_axis(goal)]
        committed = d[:, layout.commitment_axis] == goal
        total += model.goal_weights[goal - 1] * g * r * (~committed)
    return total


def _diameter(config, cells: np.ndarray) -> int:
    cols = config.grid_dims[1]
    rows, columns = np.divmod(cells, cols)
    return int(np.max(np.abs(rows[:, None] - rows[None, :]) + np.abs(columns[:, None] - columns[None, :])))


def score_candidate(candidate: SubMdp, weights: Weights) -> CandidateScore:
    w_g, w_l, w_f = weights
    parent = candidate.parent
    layout = parent.layout
    mask = candidate.member_mask
    goals = [candidate.goal_index] if candidate.kind == SubMdpKind.GOAL else range(1, layout.goal_count + 1)

    reward_impact = float(_goal_term(parent, goals)[mask].max())
    cells = np.unique(parent.digits[mask, layout.location_axis])
    spatial_coherence = 1.0 / (1.0 + _diameter(parent.config, cells))
    faults = np.unique(parent.digits[mask, layout.fault_axis])
    fault_sensitivity = float(parent.fault_penalty[faults].mean())

    total = w_g * reward_impact + w_l * spatial_coherence + w_f * fault_sensitivity
    return CandidateScore(reward_impact, spatial_coherence, fault_sensitivity, total)


def overlap(a: SubMdp, b: SubMdp) -> float:
    """Jaccard similarity of membership; goal sub-MDPs on different goals never overlap"""
    if a.kind == SubMdpKind.GOAL and b.kind == SubMdpKind.GOAL:
        return 1.0 if a.goal_index == b.goal_index else 0.0
    union = np.count_nonzero(a.member_mask | b.member_mask)
    return np.count_nonzero(a.member_mask & b.member_mask) / union if union else 0.0


def merge_candidates(
    a: SubMdp,
    b: SubMdp,
    threshold: float,
    weights: Weights,
    t_max: Optional[int] = None,
    merge_floor: int = 32,
    diagnostics: Optional[List[str]] = None,
) -> Optional[SubMdp]:
    """Mixed candidate over the union of two restricted candidates, or None"""
    if SubMdpKind.GOAL in (a.kind, b.kind):
        return None
    shares_states = bool((a.member_mask & b.member_mask).any())
    both_tiny = a.n_states < merge_floor and b.n_states < merge_floor
    if not (shares_states or both_tiny):
        return None

    union = a.member_mask | b.member_mask
    size = int(union.sum())
    if t_max is not None and size > t_max:
        message = f"merge of {a.label} and {b.label} rejected: {size:,} states > t_max={t_max:,}"
        logger.warning(f"⚠️ {message}")
        if diagnostics is not None:
            diagnostics.append(message)
        return None

    focus = tuple(sorted({f"{a.kind.value}[{a.label}]", f"{b.kind.value}[{b.label}]"}))
    mixed = _restricted(a.parent, SubMdpKind.MIXED, focus, union)
    if score_candidate(mixed, weights).total >= threshold:
        return mixed
    return None


# ============================================================
# 5. Plan assembly
# ============================================================

def decompose(
    model: MissionModel,
    criterion: Criterion = Criterion.GOAL,
    t_max: int = 5000,
    weights: Weights = (1.0, 1.0, 1.0),
    threshold: float = 0.0,
    overlap_limit: float = 0.5,
    merge_floor: int = 32,
    regions: Optional[Sequence[Sequence[int]]] = None,
) -> DecompositionPlan:
    """Generate, score and prune candidates, then build phi"""
    criterion = Criterion(criterion)
    diagnostics: List[str] = []

    if criterion == Criterion.MIXED:
        candidates = partition(model, Criterion.LOCATION, t_max, regions, diagnostics)
        candidates += partition(model, Criterion.FAULT, t_max, None, diagnostics)
        merged = []
        for a, b in itertools.combinations(candidates, 2):
            mixed = merge_candidates(a, b, threshold, weights, t_max, merge_floor, diagnostics)
            if mixed is not None:
                merged.append(mixed)
        candidates += merged
    else:
        candidates = partition(model, criterion, t_max, regions, diagnostics)

    scored = [(score_candidate(c, weights), c) for c in candidates]
    scored.sort(key=lambda pair: (-pair[0].total, pair[1].sort_key()))

    kept: List[Tuple[CandidateScore, SubMdp]] = []
    for score, candidate in scored:
        clash = next((k for _, k in kept if overlap(candidate, k) > overlap_limit), None)
        if clash is not None:
            diagnostics.append(f"pruned {candidate.label}: overlaps higher-scored {clash.label}")
            continue
        kept.append((score, candidate))

    kept.sort(key=lambda pair: pair[1].sort_key())
    for new_id, (_, sub) in enumerate(kept, start=1):
        sub.id = new_id

    membership = np.zeros((model.n_states, len(kept)), dtype=bool)
    for col, (_, sub) in enumerate(kept):
        membership[:, col] = sub.member_mask
    uncovered = np.flatnonzero(~membership.any(axis=1)) if kept else np.arange(model.n_states)
    if uncovered.size:
        raise CoverageError(uncovered[:10].tolist(), int(uncovered.size))

    plan = DecompositionPlan(
        sub_mdps=[sub for _, sub in kept],
        membership=membership,
        t_max=t_max,
        weights=tuple(weights),
        criterion=criterion,
        scores={sub.id: score for score, sub in kept},
        diagnostics=diagnostics,
    )
    logger.info(
        f"🧩 Decomposed {model.n_states:,} states by {criterion.value}: "
        f"{len(plan.sub_mdps)} sub-MDPs ({', '.join(f'{s.label}={s.n_states:,}' for s in plan.sub_mdps)})"
    )
    return plan


def decompose_with(model: MissionModel, options: DecomposeOptions) -> DecompositionPlan:
    return decompose(
        model,
        criterion=options.criterion,
        t_max=options.t_max,
        weights=options.weights,
        threshold=options.threshold,
        overlap_limit=options.overlap_limit,
        merge_floor=options.merge_floor,
        regions=options.regions,
    )
