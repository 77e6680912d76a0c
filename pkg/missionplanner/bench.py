"""
Scalability harness: exact state counts over a goal sweep, measured solve
times with a log-log power-law fit, memory proxies, and the global vs
decomposed comparison.
"""

import logging
import statistics
import time
from dataclasses import dataclass, field
from typing import Callable, List, Optional, Sequence

import numpy as np

from . import settings
from .decomposer import DecompositionPlan, decompose
from .errors import ContractError
from .mdp import MdpModel, RestrictedMdp, TabularMdp
from .mission_model import MissionModel, build_model
from .presets import mission_config
from .recombiner import GlobalPolicy, MetaMode, SubSolution, build_combined_policy, solve_all
from .schemas import ComparisonRecord, ModelConfig, PolicyComparisonReport, PowerLawDocument
from .solver import Policy, ValueFunction, extract_policy, value_iteration
from .state_space import StateLayout, state_count
from .verifier import compare_policies

logger = logging.getLogger("missionplanner.bench")

MEDIAN_RUNS_UP_TO = 2
MEDIAN_RUNS = 3


@dataclass
class ScalePoint:
    goals: int
    state_count: int
    measured_solve_seconds: Optional[float] = None
    extrapolated: bool = True
    predicted_seconds: Optional[float] = None


@dataclass
class PowerLawFit:
    """T = coefficient * N ** exponent"""
    exponent: float
    coefficient: float
    r_squared: float
    measured_points: int

    def predict(self, n_states: int) -> float:
        return self.coefficient * float(n_states) ** self.exponent

    def to_document(self) -> PowerLawDocument:
        return PowerLawDocument(
            exponent=self.exponent,
            coefficient=self.coefficient,
            r_squared=self.r_squared,
            measured_points=self.measured_points,
        )


@dataclass
class GoalSweep:
    points: List[ScalePoint]
    fit: Optional[PowerLawFit] = None
    diagnostics: List[str] = field(default_factory=list)


def fit_power_law(points: Sequence[ScalePoint]) -> PowerLawFit:
    """Least-squares line through (log N, log T) of the measured points"""
    measured = [p for p in points if not p.extrapolated and p.measured_solve_seconds]
    if len(measured) < 2:
        raise ContractError(f"power-law fit needs >= 2 measured points, got {len(measured)}")
    x = np.log([float(p.state_count) for p in measured])
    y = np.log([p.measured_solve_seconds for p in measured])
    slope, intercept = np.polyfit(x, y, 1)
    residual = y - (slope * x + intercept)
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    r_squared = 1.0 if ss_tot == 0.0 else 1.0 - float(np.sum(residual ** 2)) / ss_tot
    return PowerLawFit(
        exponent=float(slope),
        coefficient=float(np.exp(intercept)),
        r_squared=min(max(r_squared, 0.0), 1.0),
        measured_points=len(measured),
    )


def _time_solve(model: MdpModel, tolerance: float, runs: int) -> float:
    samples = []
    for _ in range(runs):
        start = time.monotonic()
        values, _ = value_iteration(model, tolerance=tolerance, label=f"bench {model.n_states:,}")
        extract_policy(model, values)
        samples.append(time.monotonic() - start)
    return statistics.median(samples)


def sweep_goals(
    g_min: int = 1,
    g_max: int = 10,
    solve_up_to: int = 2,
    base_layout: Optional[StateLayout] = None,
    config_for: Callable[[int], ModelConfig] = mission_config,
    budget_seconds: Optional[float] = None,
    tolerance: float = settings.DEFAULT_TOLERANCE,
) -> GoalSweep:
    """
    Exact counts for g_min..g_max; solve times for g <= solve_up_to.

    Once `budget_seconds` of solving has been spent the remaining points
    are left unmeasured and a diagnostic records where the sweep stopped.
    """
    if g_min < 1:
        raise ContractError(f"g_min must be >= 1, got {g_min}")
    if g_max < g_min:
        raise ContractError(f"g_max {g_max} < g_min {g_min}")
    layout = base_layout or config_for(g_min).state_layout

    logger.info("=" * 50)
    logger.info(f"📈 Goal sweep g={g_min}..{g_max}, solving up to g={solve_up_to}")
    logger.info("=" * 50)

    sweep = GoalSweep(points=[])
    spent = 0.0
    exhausted = False
    for g in range(g_min, g_max + 1):
        point = ScalePoint(goals=g, state_count=state_count(layout.with_goals(g)))
        if g <= solve_up_to:
            if budget_seconds is not None and spent >= budget_seconds:
                if not exhausted:
                    message = f"solve budget of {budget_seconds}s exhausted before g={g}"
                    logger.warning(f"⚠️ {message}")
                    sweep.diagnostics.append(message)
                    exhausted = True
            else:
                model = build_model(config_for(g))
                runs = MEDIAN_RUNS if g <= MEDIAN_RUNS_UP_TO else 1
                seconds = _time_solve(model, tolerance, runs)
                spent += seconds * runs
                point.measured_solve_seconds = seconds
                point.extrapolated = False
                logger.info(f"⏱️ g={g}: {point.state_count:,} states solved in {seconds:.3f}s")
        sweep.points.append(point)

    measured = [p for p in sweep.points if not p.extrapolated]
    if len(measured) >= 2:
        sweep.fit = fit_power_law(measured)
        for p in sweep.points:
            if p.extrapolated:
                p.predicted_seconds = sweep.fit.predict(p.state_count)
        logger.info(f"📊 Fit: T = {sweep.fit.coefficient:.3e} * N^{sweep.fit.exponent:.3f} "
                    f"(r²={sweep.fit.r_squared:.4f})")
    else:
        sweep.diagnostics.append(f"{len(measured)} measured points, no power-law fit")
    return sweep


# =====================================================
# Memory proxy
# =====================================================

def _kernel_bytes(model: MdpModel) -> int:
    if isinstance(model, MissionModel):
        arrays = list(model.fault_kernels.values()) + model.priority_kernels + [
            model.threat_kernel, model.range_kernel, model.next_location, model.distance]
        return int(sum(a.nbytes for a in arrays))
    if isinstance(model, TabularMdp):
        return int(sum(p.data.nbytes + p.indices.nbytes + p.indptr.nbytes for p in model.transitions))
    if isinstance(model, RestrictedMdp):
        return int(model.members.nbytes + model.local_index.nbytes)
    return 0


def memory_proxy(model: MdpModel) -> int:
    """Bytes of value (8/state), policy (2/state), cost table (8/state/action) and kernels"""
    n = int(model.n_states)
    return 8 * n + 2 * n + 8 * n * int(model.n_actions) + _kernel_bytes(model)


# =====================================================
# Global vs decomposed
# =====================================================

@dataclass
class ComparisonRun:
    record: ComparisonRecord
    model: MissionModel
    plan: DecompositionPlan
    global_values: ValueFunction
    global_policy: Policy
    combined_policy: GlobalPolicy
    solutions: List[SubSolution] = field(default_factory=list)
    raw_report: Optional[PolicyComparisonReport] = None
    tie_aware_report: Optional[PolicyComparisonReport] = None


def run_comparison(
    config: ModelConfig,
    tolerance: float = settings.DEFAULT_TOLERANCE,
    threads: Optional[int] = None,
    mode: MetaMode = MetaMode.BEST_VALUE,
    refine_sweeps: int = 0,
) -> ComparisonRun:
    """
    Global value iteration against decompose + solve + recombine.

    The decomposed time includes the `refine_sweeps` seeded global sweeps,
    so refinement trades runtime ratio for agreement.
    """
    model = build_model(config)

    logger.info("=" * 50)
    logger.info(f"🏁 Global vs decomposed on {config.name!r} ({model.n_states:,} states)")
    logger.info("=" * 50)

    start = time.monotonic()
    global_values, _ = value_iteration(model, tolerance=tolerance, label="global")
    global_policy = extract_policy(model, global_values)
    global_seconds = time.monotonic() - start

    start = time.monotonic()
    plan = decompose(model)
    solutions = solve_all(plan, tolerance=tolerance, threads=threads)
    combined = build_combined_policy(plan, solutions, model, mode, refine_sweeps=refine_sweeps)
    decomposed_seconds = time.monotonic() - start

    raw = compare_policies(combined, global_policy)
    tie_aware = compare_policies(combined, global_policy, model, global_values, tie_aware=True)
    global_memory = memory_proxy(model)
    decomposed_memory = sum(memory_proxy(s.model) for s in plan.sub_mdps)

    record = ComparisonRecord(
        config_name=config.name,
        global_states=model.n_states,
        sub_state_counts=[s.n_states for s in plan.sub_mdps],
        global_seconds=global_seconds,
        decomposed_seconds=decomposed_seconds,
        runtime_ratio=global_seconds / max(decomposed_seconds, 1e-9),
        global_memory_bytes=global_memory,
        decomposed_memory_bytes=decomposed_memory,
        memory_ratio=global_memory / max(decomposed_memory, 1),
        match_percent=raw.match_percent,
        tie_aware_match_percent=tie_aware.match_percent,
        meta_mode=MetaMode(mode).value,
        refine_sweeps=refine_sweeps,
    )
    logger.info(
        f"📊 Runtime {global_seconds:.2f}s vs {decomposed_seconds:.2f}s (x{record.runtime_ratio:.1f}), "
        f"memory x{record.memory_ratio:.1f}, agreement {record.match_percent:.3f}% "
        f"(tie-aware {record.tie_aware_match_percent:.3f}%)"
    )
    return ComparisonRun(record, model, plan, global_values, global_policy, combined,
                         solutions=solutions, raw_report=raw, tie_aware_report=tie_aware)


def compare_global_vs_decomposed(
    config: ModelConfig,
    tolerance: float = settings.DEFAULT_TOLERANCE,
    threads: Optional[int] = None,
    refine_sweeps: int = 0,
) -> ComparisonRecord:
    return run_comparison(config, tolerance=tolerance, threads=threads, refine_sweeps=refine_sweeps).record
