"""
Product-MDP checks of policy concatenation and value additivity, plus the
policy-agreement and next-state comparison reports.
"""

import itertools
import logging
from dataclasses import dataclass
from functools import cached_property
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np

from . import settings
from .errors import CapacityError, ContractError
from .mdp import MdpModel, TabularMdp, random_tabular_mdp
from .mission_model import MissionModel
from .schemas import MismatchSample, PolicyComparisonReport
from .solver import Policy, extract_policy, q_values, value_iteration
from .state_space import MissionState

logger = logging.getLogger("missionplanner.verifier")

MISMATCH_SAMPLE_CAP = 100
VERIFY_TOLERANCE = 1e-10
AGREEMENT_TOLERANCE = 1e-6


# =====================================================
# Product MDP
# =====================================================

class ProductMdp(MdpModel):
    """
    Joint MDP of independent factors: S = S_1 x ... x S_n, A = A_1 x ... x A_n,
    additive cost and product transitions. Joint states and joint actions are
    mixed radix with the first factor most significant; joint action ids
    start at 1.
    """

    def __init__(self, factors: Sequence[TabularMdp], coupling: Optional[np.ndarray] = None, seed: Optional[int] = None):
        if not factors:
            raise ContractError("a product needs at least one factor")
        discounts = {f.discount for f in factors}
        if len(discounts) != 1:
            raise ContractError(f"factors disagree on the discount: {sorted(discounts)}")
        self.factors = list(factors)
        self.discount = discounts.pop()
        self.state_dims = tuple(f.n_states for f in factors)
        self.action_dims = tuple(f.n_actions for f in factors)
        self.action_ids = np.arange(1, int(np.prod(self.action_dims)) + 1, dtype=np.int64)
        self.kernels = [f.dense_transitions() for f in factors]
        self.seed = seed
        self.coupling = None
        if coupling is not None:
            coupling = np.asarray(coupling, dtype=np.float64)
            if coupling.shape != (self.n_states, self.n_actions):
                raise ContractError(f"coupling shape {coupling.shape} != ({self.n_states}, {self.n_actions})")
            self.coupling = coupling

    @property
    def n_states(self) -> int:
        return int(np.prod(self.state_dims))

    @property
    def assumptions_hold(self) -> bool:
        return self.coupling is None

    def factor_states(self, state: int) -> Tuple[int, ...]:
        return tuple(int(i) for i in np.unravel_index(state, self.state_dims))

    def factor_actions(self, action_id: int) -> Tuple[int, ...]:
        """Joint id -> per-factor action ids"""
        positions = np.unravel_index(action_id - 1, self.action_dims)
        return tuple(int(f.action_ids[p]) for f, p in zip(self.factors, positions))

    def joint_action(self, local_actions: Sequence[int]) -> int:
        positions = [f.action_position(a) for f, a in zip(self.factors, local_actions)]
        return int(np.ravel_multi_index(positions, self.action_dims)) + 1

    @cached_property
    def _costs(self) -> np.ndarray:
        n = len(self.factors)
        total = np.zeros(self.state_dims + self.action_dims)
        for i, factor in enumerate(self.factors):
            shape = [1] * (2 * n)
            shape[i] = factor.n_states
            shape[n + i] = factor.n_actions
            total = total + factor.cost_matrix().reshape(shape)
        costs = total.reshape(self.n_states, self.n_actions)
        if self.coupling is not None:
            costs = costs + self.coupling
        return costs

    def cost_matrix(self) -> np.ndarray:
        return self._costs

    def expected_values(self, values: np.ndarray) -> np.ndarray:
        n = len(self.factors)
        x = np.asarray(values, dtype=np.float64).reshape(self.state_dims)
        # each step consumes the leading next-state axis and appends (action, state) axes
        for kernel in self.kernels:
            x = np.tensordot(x, kernel, axes=([0], [2]))
        order = [2 * i + 1 for i in range(n)] + [2 * i for i in range(n)]
        return np.transpose(x, order).reshape(self.n_states, self.n_actions)

    def transition(self, state: int, action_id: int) -> Tuple[np.ndarray, np.ndarray]:
        parts = [f.transition(s, a) for f, s, a in zip(self.factors, self.factor_states(state),
                                                       self.factor_actions(action_id))]
        idx, probs = [], []
        for combo in itertools.product(*[list(zip(i, p)) for i, p in parts]):
            idx.append(int(np.ravel_multi_index([c[0] for c in combo], self.state_dims)))
            probs.append(float(np.prod([c[1] for c in combo])))
        order = np.argsort(idx)
        return np.asarray(idx, dtype=np.int64)[order], np.asarray(probs)[order]


def build_product_mdp(factors: Sequence[TabularMdp], coupling: Optional[np.ndarray] = None) -> ProductMdp:
    product = ProductMdp(factors, coupling)
    logger.info(f"🧮 Product MDP: factors {product.state_dims} -> {product.n_states:,} states, "
                f"{product.n_actions} joint actions")
    return product


def random_product_mdp(
    seed: int,
    n_factors: Optional[int] = None,
    min_states: int = 2,
    max_states: int = 20,
    min_actions: int = 2,
    max_actions: int = 4,
    discount: float = 0.9,
    coupling_scale: float = 0.0,
) -> ProductMdp:
    """Theorem-compliant random product (coupling_scale > 0 injects a cross-factor cost)"""
    rng = np.random.default_rng(seed)
    count = n_factors or int(rng.integers(2, 4))
    factors = [
        random_tabular_mdp(rng, int(rng.integers(min_states, max_states + 1)),
                           int(rng.integers(min_actions, max_actions + 1)), discount)
        for _ in range(count)
    ]
    coupling = None
    if coupling_scale > 0.0:
        n_states = int(np.prod([f.n_states for f in factors]))
        n_actions = int(np.prod([f.n_actions for f in factors]))
        coupling = rng.uniform(0.0, coupling_scale, size=(n_states, n_actions))
    return ProductMdp(factors, coupling, seed=seed)


# =====================================================
# Policy comparison
# =====================================================

def _actions(policy) -> np.ndarray:
    return np.asarray(policy.actions if isinstance(policy, Policy) else policy, dtype=np.int64)


def compare_policies(
    a,
    b,
    model: Optional[MdpModel] = None,
    values=None,
    tie_aware: bool = False,
    tolerance: float = AGREEMENT_TOLERANCE,
) -> PolicyComparisonReport:
    """Per-state agreement; tie-aware mode counts equal-backup mismatches as matches"""
    actions_a, actions_b = _actions(a), _actions(b)
    if actions_a.shape != actions_b.shape:
        raise ContractError(f"policy sizes differ: {actions_a.size:,} vs {actions_b.size:,}")
    layouts = [getattr(p, "layout", None) for p in (a, b)]
    if None not in layouts and layouts[0] != layouts[1]:
        raise ContractError(f"policy layouts differ: {layouts[0]} vs {layouts[1]}")

    total = int(actions_a.size)
    differs = actions_a != actions_b
    raw_matching = total - int(differs.sum())
    mismatched = np.flatnonzero(differs)

    if tie_aware and mismatched.size:
        if model is None or values is None:
            raise ContractError("tie-aware comparison needs the model and its value function")
        q = q_values(model, values)[mismatched]
        cols_a = np.searchsorted(model.action_ids, actions_a[mismatched])
        cols_b = np.searchsorted(model.action_ids, actions_b[mismatched])
        rows = np.arange(mismatched.size)
        qa, qb = q[rows, cols_a], q[rows, cols_b]
        tied = np.abs(qa - qb) <= tolerance * (1.0 + np.minimum(np.abs(qa), np.abs(qb)))
        mismatched = mismatched[~tied]

    matching = total - int(mismatched.size)
    samples = [
        MismatchSample(state=int(s), action_a=int(actions_a[s]), action_b=int(actions_b[s]))
        for s in mismatched[:MISMATCH_SAMPLE_CAP]
    ]
    return PolicyComparisonReport(
        total_states=total,
        matching=matching,
        mismatching=total - matching,
        match_percent=100.0 * matching / total if total else 100.0,
        raw_matching=raw_matching,
        tie_aware=tie_aware,
        tolerance=tolerance if tie_aware else None,
        mismatch_samples=samples,
    )


# =====================================================
# Theorem checks
# =====================================================

def _check_capacity(product: ProductMdp, cap: Optional[int]):
    limit = settings.BRUTE_FORCE_CAP if cap is None else cap
    if product.n_states > limit:
        raise CapacityError("brute-force product solve", product.n_states, limit)


def concatenated_policy(product: ProductMdp, tolerance: float = VERIFY_TOLERANCE) -> Tuple[Policy, List]:
    """Joint policy built from independently solved factor policies"""
    local_policies, local_values = [], []
    for i, factor in enumerate(product.factors):
        values, _ = value_iteration(factor, tolerance=tolerance, label=f"factor {i + 1}")
        local_values.append(values)
        local_policies.append(extract_policy(factor, values))
    grids = np.meshgrid(*[p.actions for p in local_policies], indexing="ij")
    positions = [np.searchsorted(f.action_ids, g.reshape(-1)) for f, g in zip(product.factors, grids)]
    joint = np.ravel_multi_index(positions, product.action_dims) + 1
    return Policy(joint.astype(np.int64)), local_values


def verify_policy_equivalence(
    product: ProductMdp,
    tolerance: float = VERIFY_TOLERANCE,
    agreement_tolerance: float = AGREEMENT_TOLERANCE,
    cap: Optional[int] = None,
) -> PolicyComparisonReport:
    """Concatenated factor policies vs the brute-force global policy"""
    _check_capacity(product, cap)
    concat, _ = concatenated_policy(product, tolerance)
    values, _ = value_iteration(product, tolerance=tolerance, label="product")
    global_policy = extract_policy(product, values)
    report = compare_policies(concat, global_policy, product, values, tie_aware=True,
                              tolerance=agreement_tolerance)
    report.assumptions_hold = product.assumptions_hold
    report.seed = product.seed
    if report.mismatching and product.assumptions_hold:
        logger.warning(f"⚠️ Theorem-compliant product disagrees on {report.mismatching} states")
    elif report.mismatching:
        logger.info(f"ℹ️ Coupled product (assumptions violated): {report.match_percent:.2f}% agreement")
    return report


def verify_additive_value(
    product: ProductMdp,
    tolerance: float = VERIFY_TOLERANCE,
    cap: Optional[int] = None,
) -> float:
    """max_s |V*(s) - sum_i V*_i(s_i)|"""
    _check_capacity(product, cap)
    _, local_values = concatenated_policy(product, tolerance)
    values, _ = value_iteration(product, tolerance=tolerance, label="product")
    additive = np.zeros(product.state_dims)
    n = len(product.factors)
    for i, v in enumerate(local_values):
        shape = [1] * n
        shape[i] = len(v)
        additive = additive + v.values.reshape(shape)
    return float(np.max(np.abs(values.values - additive.reshape(-1))))


# =====================================================
# Next-state comparison
# =====================================================

@dataclass
class NextStateDiff:
    state: MissionState
    action_combined: int
    action_global: int
    successors_combined: Dict[MissionState, float]
    successors_global: Dict[MissionState, float]
    identical: bool

    def to_document(self) -> dict:
        def rows(dist):
            return [{"state": s.to_vector(), "probability": p} for s, p in sorted(dist.items(), key=lambda x: x[0].to_vector())]

        return {
            "state": self.state.to_vector(),
            "action_combined": self.action_combined,
            "action_global": self.action_global,
            "successors_combined": rows(self.successors_combined),
            "successors_global": rows(self.successors_global),
            "identical": self.identical,
        }


def _same_distribution(p: Dict[MissionState, float], q: Dict[MissionState, float], atol: float = 1e-9) -> bool:
    keys = set(p) | set(q)
    return all(abs(p.get(k, 0.0) - q.get(k, 0.0)) <= atol for k in keys)


def compare_next_state(state: MissionState, a, b, model: MissionModel) -> NextStateDiff:
    index = model.state_index(state)
    action_a, action_b = int(_actions(a)[index]), int(_actions(b)[index])
    succ_a = model.transition_distribution(state, action_a)
    succ_b = model.transition_distribution(state, action_b)
    return NextStateDiff(
        state=state,
        action_combined=action_a,
        action_global=action_b,
        successors_combined=succ_a,
        successors_global=succ_b,
        identical=action_a == action_b and _same_distribution(succ_a, succ_b),
    )


def complexity_reduction(plan, global_count: int) -> Tuple[int, int, float]:
    """(|S|^2, sum |S_i|^2, ratio) for a plan or a list of sub-MDP sizes"""
    sizes: Union[List[int], Sequence[int]]
    if hasattr(plan, "sub_mdps"):
        sizes = [s.n_states for s in plan.sub_mdps]
    else:
        sizes = list(plan)
    global_proxy = int(global_count) ** 2
    decomposed_proxy = sum(int(s) ** 2 for s in sizes)
    if decomposed_proxy == 0:
        raise ContractError("plan has no sub-MDP states")
    return global_proxy, decomposed_proxy, global_proxy / decomposed_proxy
