"""
Mission Planner - document schemas
Model config document, decomposition options and the report documents
written by the CLI.
"""

from enum import Enum
from typing import Any, Dict, List, Optional, Tuple

from pydantic import BaseModel, Field, ValidationError, field_validator

from .errors import ConfigValidationError
from .state_space import PRIORITY_LEVELS, StateLayout

STOCHASTIC_ATOL = 1e-9


# ============================================================
# 1. Model config
# ============================================================

class DistanceMetric(str, Enum):
    MANHATTAN = "manhattan"
    EUCLIDEAN = "euclidean"


class RangeDynamics(str, Enum):
    """How range flags evolve between recharges"""
    STATIC = "static"
    DECAY = "decay"


class FaultClass(str, Enum):
    """Decision class selecting the fault kernel"""
    NORMAL = "normal"
    AGILE = "agile"
    RECHARGE = "recharge"
    REPAIR = "repair"


class LayoutSpec(BaseModel):
    fault_count: int = Field(8, ge=1, description="Number of fault modes (f_s)")
    goal_count: int = Field(3, ge=1, description="Number of goals (g_s)")
    location_count: int = Field(8, ge=1, description="Number of grid cells (l_s)")
    threat_count: int = Field(3, ge=1, description="Number of threat levels (t_s)")
    mode_count: int = Field(2, ge=1, description="Navigation modes (m_s)")

    def to_layout(self) -> StateLayout:
        return StateLayout(**self.model_dump())


class FaultKernels(BaseModel):
    """One row-stochastic fault-mode matrix per decision class"""
    normal: List[List[float]]
    agile: List[List[float]]
    recharge: List[List[float]]
    repair: List[List[float]]

    def for_class(self, fault_class: FaultClass) -> List[List[float]]:
        return getattr(self, fault_class.value)


class ModelConfig(BaseModel):
    """Declarative mission model configuration (all matrices row-major)"""
    name: str = Field("custom", description="Label carried into reports")
    layout: LayoutSpec = Field(default_factory=LayoutSpec)
    grid_dims: Tuple[int, int] = Field(..., description="(rows, cols), rows*cols = location_count")
    goal_cells: List[int] = Field(..., description="Cell index of every goal")
    base_cell: int = Field(..., description="Repair / recharge cell")
    discount: float = Field(0.95, gt=0.0, lt=1.0, description="Discount factor gamma")
    goal_weights: List[float] = Field(..., description="eta_j per goal")
    range_penalties: List[float] = Field(..., description="delta_j per goal")
    fault_penalty_table: List[List[float]] = Field(..., description="[fault-1][in_range] penalty")
    threat_penalty_table: List[List[float]] = Field(..., description="[threat][mode] penalty")
    distance_metric: DistanceMetric = DistanceMetric.MANHATTAN
    distance_scale: float = Field(1.0, ge=0.0)
    fault_kernels: FaultKernels
    priority_kernels: List[List[List[float]]] = Field(..., description="3x3 kernel per goal")
    threat_kernel: List[List[float]]
    range_dynamics: RangeDynamics = RangeDynamics.STATIC
    range_decay_probability: float = Field(0.0, ge=0.0, le=1.0)
    idle_returns_to_base: bool = True
    local_cost_includes_distance: bool = False

    @property
    def state_layout(self) -> StateLayout:
        return self.layout.to_layout()

    @property
    def goal_count(self) -> int:
        return self.layout.goal_count

    def project_goal(self, goal: int) -> "ModelConfig":
        """Single-goal config keeping only goal `goal` (1-based)"""
        j = goal - 1
        layout = self.layout.model_copy(update={"goal_count": 1})
        return self.model_copy(update={
            "name": f"{self.name}/goal{goal}",
            "layout": layout,
            "goal_cells": [self.goal_cells[j]],
            "goal_weights": [self.goal_weights[j]],
            "range_penalties": [self.range_penalties[j]],
            "priority_kernels": [self.priority_kernels[j]],
        })


def _format_loc(loc) -> str:
    path = ""
    for part in loc:
        if isinstance(part, int):
            path += f"[{part}]"
        else:
            path += f".{part}" if path else str(part)
    return path or "<root>"


def _check_matrix(violations: List[str], path: str, matrix, rows: int, cols: int, stochastic: bool):
    if len(matrix) != rows:
        violations.append(f"{path}: expected {rows} rows, got {len(matrix)}")
        return
    for i, row in enumerate(matrix):
        if len(row) != cols:
            violations.append(f"{path}[{i}]: expected {cols} entries, got {len(row)}")
            continue
        if stochastic:
            if any(p < 0.0 or p > 1.0 for p in row):
                violations.append(f"{path}[{i}]: probabilities must lie in [0, 1]")
            total = sum(row)
            if abs(total - 1.0) > STOCHASTIC_ATOL:
                violations.append(f"{path}[{i}]: row sums to {total:.12g}, expected 1")
        elif any(v < 0.0 for v in row):
            violations.append(f"{path}[{i}]: penalties must be >= 0")


def config_violations(config: ModelConfig) -> List[str]:
    """Every semantic problem of a parsed config, each prefixed with its document path"""
    violations: List[str] = []
    layout = config.layout
    k = layout.goal_count
    cells = layout.location_count

    rows, cols = config.grid_dims
    if rows < 1 or cols < 1 or rows * cols != cells:
        violations.append(f"grid_dims: {rows}x{cols} does not cover location_count={cells}")
    if len(config.goal_cells) != k:
        violations.append(f"goal_cells: expected {k} entries, got {len(config.goal_cells)}")
    for i, cell in enumerate(config.goal_cells):
        if not 0 <= cell < cells:
            violations.append(f"goal_cells[{i}]: cell {cell} outside 0..{cells - 1}")
    if not 0 <= config.base_cell < cells:
        violations.append(f"base_cell: cell {config.base_cell} outside 0..{cells - 1}")

    for name in ("goal_weights", "range_penalties"):
        values = getattr(config, name)
        if len(values) != k:
            violations.append(f"{name}: expected {k} entries, got {len(values)}")
        for i, v in enumerate(values):
            if v < 0.0:
                violations.append(f"{name}[{i}]: must be >= 0, got {v}")

    _check_matrix(violations, "fault_penalty_table", config.fault_penalty_table, layout.fault_count, 2, False)
    _check_matrix(violations, "threat_penalty_table", config.threat_penalty_table,
                  layout.threat_count, layout.mode_count, False)
    for fault_class in FaultClass:
        _check_matrix(violations, f"fault_kernels.{fault_class.value}",
                      config.fault_kernels.for_class(fault_class), layout.fault_count, layout.fault_count, True)
    if len(config.priority_kernels) != k:
        violations.append(f"priority_kernels: expected {k} matrices, got {len(config.priority_kernels)}")
    for j, kernel in enumerate(config.priority_kernels):
        _check_matrix(violations, f"priority_kernels[{j}]", kernel, PRIORITY_LEVELS, PRIORITY_LEVELS, True)
    _check_matrix(violations, "threat_kernel", config.threat_kernel, layout.threat_count, layout.threat_count, True)
    if layout.mode_count < 2:
        violations.append("layout.mode_count: agile actions need mode_count >= 2")
    return violations


def validate_config(data: Dict[str, Any]) -> ModelConfig:
    """Parse a config document, raising ConfigValidationError with all violations"""
    try:
        config = ModelConfig.model_validate(data)
    except ValidationError as e:
        violations = [f"{_format_loc(err['loc'])}: {err['msg']}" for err in e.errors()]
        raise ConfigValidationError("invalid model config", violations)
    violations = config_violations(config)
    if violations:
        raise ConfigValidationError("invalid model config", violations)
    return config


# ============================================================
# 2. Decomposition options
# ============================================================

class Criterion(str, Enum):
    GOAL = "goal"
    LOCATION = "location"
    FAULT = "fault"
    MIXED = "mixed"


class DecomposeOptions(BaseModel):
    criterion: Criterion = Criterion.GOAL
    t_max: int = Field(5000, gt=0, description="Largest sub-MDP state count")
    weights: Tuple[float, float, float] = Field((1.0, 1.0, 1.0), description="(w_g, w_l, w_f)")
    threshold: float = Field(0.0, description="Minimum merged score for a mixed candidate")
    overlap_limit: float = Field(0.5, ge=0.0, le=1.0, description="Jaccard above which the lower candidate is pruned")
    merge_floor: int = Field(32, ge=0, description="Disjoint candidates both below this size may merge")
    regions: Optional[List[List[int]]] = Field(None, description="Location regions, default grid quadrants")

    @field_validator("regions")
    @classmethod
    def non_empty_regions(cls, v):
        if v is not None and any(len(region) == 0 for region in v):
            raise ValueError("regions must not contain empty cell lists")
        return v


# ============================================================
# 3. Scenario documents
# ============================================================

class ScenarioEventDocument(BaseModel):
    epoch: int = Field(..., ge=0, description="Epoch the event applies at, before the decision")
    kind: str = Field(..., description="set_goal_priority, set_threat, set_fault or set_range")
    value: int = Field(..., description="Level, fault mode or 0/1 range flag")
    goal: Optional[int] = Field(None, description="1-based goal for goal-scoped events")


class ScenarioDocument(BaseModel):
    """Scripted rollout: flat initial state (1-based fault), horizon, seed and events"""
    initial_state: List[int]
    horizon: int = Field(12, ge=0)
    seed: int = 0
    events: List[ScenarioEventDocument] = []


# ============================================================
# 4. Reports
# ============================================================

class ValidationIssue(BaseModel):
    state: int
    action: int
    kind: str = Field(..., description="'probability_mass' or 'negative_cost'")
    value: float


class ValidationReport(BaseModel):
    total_pairs: int = 0
    issues: List[ValidationIssue] = []
    issue_count: int = 0

    @property
    def is_valid(self) -> bool:
        return self.issue_count == 0


class MismatchSample(BaseModel):
    state: int
    action_a: int
    action_b: int


class PolicyComparisonReport(BaseModel):
    total_states: int
    matching: int
    mismatching: int
    match_percent: float
    raw_matching: int
    tie_aware: bool = False
    tolerance: Optional[float] = None
    mismatch_samples: List[MismatchSample] = []
    assumptions_hold: Optional[bool] = None
    seed: Optional[int] = None


class SolveSummary(BaseModel):
    label: str
    states: int
    actions: int
    iterations: int
    converged: bool
    final_residual: float
    wall_time: float


class SubMdpSummary(BaseModel):
    id: int
    kind: str
    focus: str
    states: int
    score: float
    reward_impact: float
    spatial_coherence: float
    fault_sensitivity: float


class PlanSummary(BaseModel):
    criterion: str
    t_max: int
    weights: Tuple[float, float, float]
    global_states: int
    sub_mdps: List[SubMdpSummary] = []
    min_memberships: int = 0
    max_memberships: int = 0
    mean_memberships: float = 0.0
    diagnostics: List[str] = []


class ComparisonRecord(BaseModel):
    """Global solve vs decompose + recombine on one config"""
    config_name: str
    global_states: int
    sub_state_counts: List[int]
    global_seconds: float
    decomposed_seconds: float
    runtime_ratio: float
    global_memory_bytes: int
    decomposed_memory_bytes: int
    memory_ratio: float
    match_percent: float
    tie_aware_match_percent: float
    meta_mode: str = "best_value"
    refine_sweeps: int = 0


class PowerLawDocument(BaseModel):
    exponent: float
    coefficient: float
    r_squared: float
    measured_points: int


class RunManifest(BaseModel):
    command: str
    argv: List[str]
    config_name: Optional[str] = None
    config_hash: Optional[str] = None
    seed: int = 0
    threads: int = 1
    versions: Dict[str, str] = {}
    outputs: Dict[str, str] = Field(default_factory=dict, description="file name -> sha256")
