"""Factored-MDP mission planning for a single UAV over a gridded area"""

__version__ = "0.4.0"

from .errors import (  # noqa: E402
    CapacityError,
    ConfigValidationError,
    ContractError,
    CoverageError,
    MissionCompleteError,
    MissionPlannerError,
    SolveError,
    StateValidationError,
)
from .mission_model import MissionModel, build_model  # noqa: E402
from .presets import load_config  # noqa: E402
from .state_space import MissionState, StateLayout  # noqa: E402
