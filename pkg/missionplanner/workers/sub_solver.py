"""
Sub-MDP solve worker
- Solves independent sub-MDPs on a thread pool (bounded by MISSION_THREADS / --threads)
- Per-job bookkeeping in worker_status
- Failures are reported to Sentry when configured
"""

import logging
import time
from concurrent.futures import ThreadPoolExecutor
from datetime import datetime, timezone
from typing import Any, Callable, Dict, List, Optional, Tuple

from .. import settings
from ..mdp import MdpModel
from ..solver import SolveReport, ValueFunction, value_iteration

logger = logging.getLogger("missionplanner.workers.sub_solver")

# Worker status
worker_status = {
    "last_run": None,
    "last_success": None,
    "total_runs": 0,
    "total_solved": 0,
    "total_failed": 0,
    "is_running": False,
    "last_stats": None,
}

SolveFn = Callable[..., Tuple[ValueFunction, SolveReport]]
SolveJob = Tuple[int, MdpModel, str]


def _utcnow() -> str:
    return datetime.now(timezone.utc).isoformat()


def solve_sub_mdps(
    jobs: List[SolveJob],
    tolerance: float = settings.DEFAULT_TOLERANCE,
    max_sweeps: int = settings.DEFAULT_MAX_SWEEPS,
    threads: Optional[int] = None,
    solve_fn: SolveFn = value_iteration,
) -> Dict[int, Tuple[ValueFunction, SolveReport]]:
    """
    Solve every (sub_id, model, label) job.

    Returns:
        sub_id -> (value function, solve report). Results do not depend on
        the thread count; each job is an independent value iteration.
    """
    worker_status["is_running"] = True
    worker_status["last_run"] = _utcnow()
    worker_status["total_runs"] += 1
    workers = max(1, min(threads or settings.THREADS, len(jobs) or 1))

    logger.info("=" * 50)
    logger.info(f"🚀 Solving {len(jobs)} sub-MDPs on {workers} threads")
    logger.info(f"📅 Run #{worker_status['total_runs']}")
    logger.info("=" * 50)
    start_time = time.monotonic()

    stats: Dict[str, Any] = {"jobs": len(jobs), "converged": 0, "not_converged": 0, "states": 0}

    def run(job: SolveJob):
        sub_id, model, label = job
        return sub_id, solve_fn(model, tolerance=tolerance, max_sweeps=max_sweeps, label=label)

    results: Dict[int, Tuple[ValueFunction, SolveReport]] = {}
    try:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            for sub_id, (values, report) in pool.map(run, jobs):
                results[sub_id] = (values, report)
                stats["states"] += len(values)
                if report.converged:
                    stats["converged"] += 1
                    worker_status["total_solved"] += 1
                else:
                    stats["not_converged"] += 1
                    worker_status["total_failed"] += 1
    except Exception as e:
        logger.error(f"❌ Sub-MDP solve failed: {str(e)}")
        settings.capture_exception(e)
        worker_status["total_failed"] += 1
        raise
    finally:
        worker_status["is_running"] = False

    elapsed_time = time.monotonic() - start_time
    stats["elapsed_time"] = round(elapsed_time, 4)
    worker_status["last_stats"] = stats
    if stats["not_converged"] == 0:
        worker_status["last_success"] = _utcnow()

    logger.info("=" * 50)
    logger.info(f"✅ Sub-MDP solves completed in {elapsed_time:.2f}s")
    logger.info(f"📊 Stats: {stats}")
    logger.info("=" * 50)
    return results


def get_worker_status() -> Dict[str, Any]:
    """Worker status snapshot"""
    return {
        **worker_status,
        "threads": settings.THREADS,
        "sentry_configured": settings.sentry_initialized,
    }


if __name__ == "__main__":
    import argparse
    import json

    from ..decomposer import decompose
    from ..mission_model import build_model
    from ..presets import load_config

    parser = argparse.ArgumentParser(description="Sub-MDP solve worker")
    parser.add_argument("--config", default="paper3goal", help="Preset name or config path")
    parser.add_argument("--threads", type=int, default=None, help="Thread pool size")
    parser.add_argument("--status", action="store_true", help="Show worker status after the run")
    args = parser.parse_args()

    settings.configure_logging()
    model = build_model(load_config(args.config))
    plan = decompose(model, t_max=model.n_states)
    solve_sub_mdps([(s.id, s.model, s.label) for s in plan.sub_mdps], threads=args.threads)
    if args.status:
        print(json.dumps(get_worker_status(), indent=2))
