"""
Shipped mission configurations.

`paper3goal` is the 3-goal, 4x2-grid mission (331,776 states), `single-goal`
its one-goal counterpart (4,608 states) and `case-one` the single-goal
mission with identity kernels used by the scripted rollout.
"""

import json
import logging
from pathlib import Path
from typing import Callable, Dict, List, Optional, Union

from .errors import ConfigValidationError
from .schemas import FaultKernels, LayoutSpec, ModelConfig, validate_config

logger = logging.getLogger("missionplanner.presets")

GRID_DIMS = (4, 2)
BASE_CELL = 1
GOAL_CELLS = [5, 7, 2]
# extra cells used when the benchmark scales past three goals
SPARE_CELLS = [3, 4, 6, 0]

FAULT_SEVERITY = [0.0, 2.0, 5.0, 10.0, 15.0, 25.0, 35.0, 50.0]
THREAT_PENALTY = [[0.0, 5.0], [15.0, 8.0], [40.0, 10.0]]
PRIORITY_KERNEL = [
    [0.90, 0.05, 0.05],
    [0.00, 0.90, 0.10],
    [0.00, 0.05, 0.95],
]


def identity(n: int) -> List[List[float]]:
    return [[1.0 if i == j else 0.0 for j in range(n)] for i in range(n)]


def degrading_kernel(fault_count: int, degrade: float) -> List[List[float]]:
    """Healthy mode leaks `degrade` uniformly into the faulty modes, faulty modes persist"""
    rows = identity(fault_count)
    if fault_count > 1 and degrade > 0.0:
        share = degrade / (fault_count - 1)
        rows[0] = [1.0 - degrade] + [share] * (fault_count - 1)
    return rows


def repair_kernel(fault_count: int, success: float = 0.9) -> List[List[float]]:
    rows = []
    for f in range(fault_count):
        row = [0.0] * fault_count
        if f == 0:
            row[0] = 1.0
        else:
            row[0] = success
            row[f] = 1.0 - success
        rows.append(row)
    return rows


def goal_weights(goal_count: int) -> List[float]:
    return [max(10.0 - 2.0 * j, 2.0) for j in range(goal_count)]


def goal_cells(goal_count: int) -> List[int]:
    cells = GOAL_CELLS + SPARE_CELLS
    return [cells[j % len(cells)] for j in range(goal_count)]


def mission_config(goal_count: int = 3, name: Optional[str] = None, **overrides) -> ModelConfig:
    """The 4x2-grid mission family scaled to `goal_count` goals"""
    fault_count = 8
    config = ModelConfig(
        name=name or f"mission-g{goal_count}",
        layout=LayoutSpec(fault_count=fault_count, goal_count=goal_count,
                          location_count=GRID_DIMS[0] * GRID_DIMS[1], threat_count=3, mode_count=2),
        grid_dims=GRID_DIMS,
        goal_cells=goal_cells(goal_count),
        base_cell=BASE_CELL,
        discount=0.95,
        goal_weights=goal_weights(goal_count),
        range_penalties=[15.0] * goal_count,
        fault_penalty_table=[[s, s] for s in FAULT_SEVERITY],
        threat_penalty_table=THREAT_PENALTY,
        distance_scale=1.0,
        fault_kernels=FaultKernels(
            normal=degrading_kernel(fault_count, 0.02),
            agile=degrading_kernel(fault_count, 0.05),
            recharge=degrading_kernel(fault_count, 0.02),
            repair=repair_kernel(fault_count),
        ),
        priority_kernels=[PRIORITY_KERNEL] * goal_count,
        threat_kernel=identity(3),
    )
    if overrides:
        config = config.model_copy(update=overrides)
    return config


def paper3goal() -> ModelConfig:
    return mission_config(3, name="paper3goal")


def single_goal() -> ModelConfig:
    return mission_config(1, name="single-goal")


def case_one() -> ModelConfig:
    """Single goal at cell 5, base at cell 1, every kernel the identity"""
    fault_count = 8
    return mission_config(
        1,
        name="case-one",
        fault_kernels=FaultKernels(
            normal=identity(fault_count),
            agile=identity(fault_count),
            recharge=identity(fault_count),
            repair=identity(fault_count),
        ),
        priority_kernels=[identity(3)],
        threat_kernel=identity(3),
    )


PRESETS: Dict[str, Callable[[], ModelConfig]] = {
    "paper3goal": paper3goal,
    "single-goal": single_goal,
    "case-one": case_one,
}


def load_config(name_or_path: Union[str, Path]) -> ModelConfig:
    """Resolve a preset name or read and validate a JSON config document"""
    key = str(name_or_path)
    if key in PRESETS:
        return PRESETS[key]()
    path = Path(key)
    if not path.is_file():
        raise ConfigValidationError(f"config {key!r} is neither a preset ({', '.join(PRESETS)}) nor a file")
    try:
        data = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as e:
        raise ConfigValidationError(f"config {key!r} is not valid JSON", [f"<root>: {e.msg} at line {e.lineno}"])
    config = validate_config(data)
    logger.info(f"📄 Loaded config {config.name!r} from {path}")
    return config
