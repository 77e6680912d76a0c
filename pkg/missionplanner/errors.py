"""
Mission planner exceptions.

Every error the planner raises on purpose derives from MissionPlannerError and
carries the exit code the CLI returns for it.
"""

from typing import List, Optional, Sequence


class MissionPlannerError(Exception):
    """Base class for planner failures"""
    exit_code = 2

    def __init__(self, message: str):
        self.message = message
        super().__init__(self.message)


class ConfigValidationError(MissionPlannerError):
    """Model config document failed validation"""
    exit_code = 1

    def __init__(self, message: str, violations: Optional[Sequence[str]] = None):
        self.violations: List[str] = list(violations or [])
        if self.violations:
            message = f"{message}:\n  - " + "\n  - ".join(self.violations)
        super().__init__(message)


class StateValidationError(MissionPlannerError, ValueError):
    """A mission state field is outside its layout bound"""
    exit_code = 1

    def __init__(self, field: str, value, bound: str):
        self.field = field
        self.value = value
        super().__init__(f"{field}={value!r} out of range ({bound})")


class ContractError(MissionPlannerError):
    """An operation was called outside its precondition"""


class CapacityError(MissionPlannerError):
    """A state count exceeds a configured cap"""

    def __init__(self, what: str, requested: int, limit: int):
        self.requested = requested
        self.limit = limit
        super().__init__(f"{what}: {requested:,} states exceeds the cap of {limit:,}")


class CoverageError(MissionPlannerError):
    """A decomposition plan leaves global states without a sub-MDP"""

    def __init__(self, uncovered: Sequence[int], total_uncovered: int):
        self.uncovered = list(uncovered)
        self.total_uncovered = total_uncovered
        preview = ", ".join(str(i) for i in self.uncovered)
        super().__init__(f"{total_uncovered} global states are not covered by any sub-MDP (first: {preview})")


class SolveError(MissionPlannerError):
    """A sub-MDP solve did not converge"""

    def __init__(self, sub_id: int, report=None):
        self.sub_id = sub_id
        self.report = report
        sweeps = getattr(report, "iterations", "?")
        super().__init__(f"sub-MDP {sub_id} did not converge after {sweeps} sweeps")


class MissionCompleteError(MissionPlannerError):
    """No incomplete sub-MDP is left to act on"""
