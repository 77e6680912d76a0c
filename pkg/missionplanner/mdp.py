"""
Generic finite MDP models.

Every model exposes the same backup surface so the solver never cares
whether it is looking at a factored mission model, a tabular MDP held as
per-action CSR matrices, or a restriction of another model:

    n_states, action_ids, discount
    cost_matrix()          -> (N, A) immediate costs
    expected_values(V)     -> (N, A) with entry sum_s' P(s'|s,a) V(s')
    transition(s, a_id)    -> (successor indices, probabilities)
    cost(s, a_id)          -> float
"""

from abc import ABC, abstractmethod
from functools import cached_property
from typing import List, Optional, Sequence, Tuple

import numpy as np
from scipy import sparse

from .errors import ContractError


class MdpModel(ABC):
    discount: float
    action_ids: np.ndarray

    @property
    @abstractmethod
    def n_states(self) -> int:
        ...

    @property
    def n_actions(self) -> int:
        return len(self.action_ids)

    @abstractmethod
    def cost_matrix(self) -> np.ndarray:
        ...

    @abstractmethod
    def expected_values(self, values: np.ndarray) -> np.ndarray:
        ...

    @abstractmethod
    def transition(self, state: int, action_id: int) -> Tuple[np.ndarray, np.ndarray]:
        ...

    def action_position(self, action_id: int) -> int:
        hits = np.flatnonzero(self.action_ids == action_id)
        if hits.size == 0:
            raise ContractError(f"action {action_id} is not in {self.action_ids.tolist()}")
        return int(hits[0])

    def cost(self, state: int, action_id: int) -> float:
        return float(self.cost_matrix()[state, self.action_position(action_id)])


class TabularMdp(MdpModel):
    """Explicit MDP: dense (N, A) costs and one CSR transition matrix per action"""

    def __init__(
        self,
        costs: np.ndarray,
        transitions: Sequence,
        discount: float,
        action_ids: Optional[Sequence[int]] = None,
    ):
        self.costs = np.asarray(costs, dtype=np.float64)
        if self.costs.ndim != 2:
            raise ContractError(f"costs must be (N, A), got shape {self.costs.shape}")
        n, a = self.costs.shape
        if len(transitions) != a:
            raise ContractError(f"{a} cost columns but {len(transitions)} transition matrices")
        self.transitions: List[sparse.csr_matrix] = [sparse.csr_matrix(p, dtype=np.float64) for p in transitions]
        for p in self.transitions:
            if p.shape != (n, n):
                raise ContractError(f"transition matrix shape {p.shape} != ({n}, {n})")
        if not 0.0 <= discount < 1.0:
            raise ContractError(f"discount must lie in [0, 1), got {discount}")
        self.discount = float(discount)
        self.action_ids = np.asarray(action_ids if action_ids is not None else np.arange(1, a + 1), dtype=np.int64)

    @property
    def n_states(self) -> int:
        return self.costs.shape[0]

    def cost_matrix(self) -> np.ndarray:
        return self.costs

    def expected_values(self, values: np.ndarray) -> np.ndarray:
        return np.column_stack([p @ values for p in self.transitions])

    def transition(self, state: int, action_id: int) -> Tuple[np.ndarray, np.ndarray]:
        row = self.transitions[self.action_position(action_id)].getrow(state)
        return row.indices.astype(np.int64), row.data.copy()

    def dense_transitions(self) -> np.ndarray:
        """(A, N, N) stacked kernels"""
        return np.stack([p.toarray() for p in self.transitions])

    def scaled(self, factor: float) -> "TabularMdp":
        return TabularMdp(self.costs * factor, self.transitions, self.discount, self.action_ids)


class RestrictedMdp(MdpModel):
    """
    A parent model restricted to a member set of its states.

    Transitions are conditioned on staying inside the set: each row is
    renormalised by its in-set mass, and a row with no in-set mass becomes
    a self-loop. The action set is the parent's.
    """

    def __init__(self, parent: MdpModel, mask: np.ndarray):
        mask = np.asarray(mask, dtype=bool)
        if mask.shape != (parent.n_states,):
            raise ContractError(f"mask shape {mask.shape} != ({parent.n_states},)")
        if not mask.any():
            raise ContractError("restricted model needs at least one member state")
        self.parent = parent
        self.mask = mask
        self.members = np.flatnonzero(mask)
        self.discount = parent.discount
        self.action_ids = parent.action_ids
        # global index -> local index, -1 outside the set
        self.local_index = np.full(parent.n_states, -1, dtype=np.int64)
        self.local_index[self.members] = np.arange(self.members.size)

    @property
    def n_states(self) -> int:
        return int(self.members.size)

    @cached_property
    def _cost(self) -> np.ndarray:
        return self.parent.cost_matrix()[self.members]

    @cached_property
    def in_set_mass(self) -> np.ndarray:
        return self.parent.expected_values(self.mask.astype(np.float64))[self.members]

    @cached_property
    def self_loops(self) -> np.ndarray:
        return self.in_set_mass <= 1e-12

    def cost_matrix(self) -> np.ndarray:
        return self._cost

    def expected_values(self, values: np.ndarray) -> np.ndarray:
        full = np.zeros(self.parent.n_states)
        full[self.members] = values
        ev = self.parent.expected_values(full)[self.members]
        mass = np.where(self.self_loops, 1.0, self.in_set_mass)
        ev = ev / mass
        return np.where(self.self_loops, values[:, None], ev)

    def transition(self, state: int, action_id: int) -> Tuple[np.ndarray, np.ndarray]:
        g = int(self.members[state])
        idx, probs = self.parent.transition(g, action_id)
        keep = self.mask[idx]
        idx, probs = idx[keep], probs[keep]
        total = probs.sum()
        if total <= 1e-12:
            return np.array([state], dtype=np.int64), np.array([1.0])
        return self.local_index[idx], probs / total


def random_tabular_mdp(
    rng: np.random.Generator,
    n_states: int,
    n_actions: int,
    discount: float = 0.9,
    cost_high: float = 10.0,
) -> TabularMdp:
    """Dirichlet(1) transition rows and costs uniform on [0, cost_high]"""
    kernels = rng.dirichlet(np.ones(n_states), size=(n_actions, n_states))
    costs = rng.uniform(0.0, cost_high, size=(n_states, n_actions))
    return TabularMdp(costs, [sparse.csr_matrix(k) for k in kernels], discount)
