"""
Mission planner command line.

    python -m missionplanner <verb> [--config NAME|PATH] [--output-dir DIR] ...

Verbs: validate, solve, decompose, recombine, verify, simulate, bench,
compare. Every run writes its outputs and a manifest.json (config hash,
seed, versions, sha256 of every output) under the output directory.
Exit codes: 0 success, 1 validation failure, 2 contract/capacity errors.
"""

import argparse
import logging
import sys
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Dict, List, Optional

import numpy as np

from . import __version__, exports, settings
from .bench import run_comparison, sweep_goals
from .decomposer import decompose_with
from .errors import ContractError, MissionPlannerError, StateValidationError
from .mission_model import build_model, validate_model
from .presets import load_config
from .recombiner import MetaMode, build_combined_policy, solve_all
from .schemas import Criterion, DecomposeOptions, ModelConfig, RunManifest, SolveSummary
from .simulator import case_one_scenario, load_scenario, run_mission
from .solver import extract_policy, value_iteration
from .state_space import MissionState
from .verifier import (
    compare_next_state,
    compare_policies,
    random_product_mdp,
    verify_additive_value,
    verify_policy_equivalence,
)

logger = logging.getLogger("missionplanner.main")

# flat [f, r.., g.., l, c, t, m] test state of the 3-goal mission
REPRESENTATIVE_STATE = [1, 1, 0, 1, 0, 2, 1, 1, 0, 2, 1]
ADDITIVE_RTOL = 1e-5


@dataclass
class RunContext:
    args: argparse.Namespace
    output_dir: Path
    outputs: List[Path] = field(default_factory=list)
    config: Optional[ModelConfig] = None

    def path(self, name: str) -> Path:
        return self.output_dir / name

    def keep(self, path: Path) -> Path:
        self.outputs.append(path)
        return path

    def load_config(self) -> ModelConfig:
        self.config = load_config(self.args.config)
        return self.config


def _print_table(rows: List[Dict[str, object]]) -> None:
    if not rows:
        return
    columns = list(rows[0])
    widths = {c: max(len(str(c)), *(len(str(r[c])) for r in rows)) for c in columns}
    print("  ".join(str(c).ljust(widths[c]) for c in columns))
    for row in rows:
        print("  ".join(str(row[c]).ljust(widths[c]) for c in columns))


def _cell_list(text: str) -> List[int]:
    """Comma-separated cells, "0,2" -> [0, 2]"""
    try:
        cells = [int(part) for part in text.split(",") if part.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"region {text!r} is not a comma-separated list of cells")
    if not cells:
        raise argparse.ArgumentTypeError("region must name at least one cell")
    return cells


def _decompose_options(args: argparse.Namespace) -> DecomposeOptions:
    return DecomposeOptions(
        criterion=args.criterion,
        t_max=args.t_max,
        weights=tuple(args.weights),
        threshold=args.threshold,
        overlap_limit=args.overlap_limit,
        merge_floor=args.merge_floor,
        regions=args.region,
    )


# =====================================================
# Verbs
# =====================================================

def cmd_validate(ctx: RunContext) -> int:
    config = ctx.load_config()
    report = validate_model(build_model(config))
    ctx.keep(exports.write_document(ctx.path("validation.json"), report))
    print(f"{config.name}: {report.total_pairs:,} state-action pairs, {report.issue_count} issues")
    return 0 if report.is_valid else 1


def cmd_solve(ctx: RunContext) -> int:
    config = ctx.load_config()
    model = build_model(config)
    values, report = value_iteration(model, tolerance=ctx.args.tol, max_sweeps=ctx.args.max_sweeps, label=config.name)
    policy = extract_policy(model, values)
    ctx.keep(exports.write_policy(ctx.path("policy.bin"), policy, exports.config_hash(config)))
    ctx.keep(exports.write_residuals(ctx.path("residuals.csv"), report))
    summary = SolveSummary(
        label=config.name, states=model.n_states, actions=model.n_actions, iterations=report.iterations,
        converged=report.converged, final_residual=report.final_residual, wall_time=report.wall_time,
    )
    ctx.keep(exports.write_document(ctx.path("solve.json"), summary))
    print(f"{config.name}: {report.iterations} sweeps, residual {report.final_residual:.3e}, "
          f"converged={report.converged}")
    return 0


def cmd_decompose(ctx: RunContext) -> int:
    config = ctx.load_config()
    plan = decompose_with(build_model(config), _decompose_options(ctx.args))
    summary = plan.summary()
    ctx.keep(exports.write_document(ctx.path("plan.json"), summary))
    _print_table([
        {"id": s.id, "kind": s.kind, "focus": s.focus, "states": s.states, "score": f"{s.score:.3f}"}
        for s in summary.sub_mdps
    ])
    print(f"memberships per state: min {summary.min_memberships}, max {summary.max_memberships}, "
          f"mean {summary.mean_memberships:.2f}")
    return 0


def cmd_recombine(ctx: RunContext) -> int:
    config = ctx.load_config()
    model = build_model(config)
    plan = decompose_with(model, _decompose_options(ctx.args))
    solutions = solve_all(plan, tolerance=ctx.args.tol, max_sweeps=ctx.args.max_sweeps, threads=ctx.args.threads)
    policy = build_combined_policy(plan, solutions, model, MetaMode(ctx.args.meta),
                                   refine_sweeps=ctx.args.refine_sweeps)
    ctx.keep(exports.write_policy(ctx.path("combined_policy.bin"), policy, exports.config_hash(config)))
    ctx.keep(exports.write_document(ctx.path("plan.json"), plan.summary()))
    ctx.keep(exports.write_document(ctx.path("sub_solves.json"), [
        SolveSummary(
            label=s.sub.label, states=s.sub.n_states, actions=s.sub.model.n_actions,
            iterations=s.report.iterations, converged=s.report.converged,
            final_residual=s.report.final_residual, wall_time=s.report.wall_time,
        ).model_dump() for s in solutions
    ]))
    print(f"{config.name}: combined policy over {model.n_states:,} states from {len(solutions)} sub-MDPs")
    return 0


def _verify_product(ctx: RunContext) -> int:
    args = ctx.args
    documents, failures = [], 0
    for trial in range(args.trials):
        seed = args.seed + trial
        product = random_product_mdp(seed, n_factors=args.factors, max_states=args.max_factor_states)
        report = verify_policy_equivalence(product, cap=args.max_states)
        deviation = verify_additive_value(product, cap=args.max_states)
        v_bound = float(product.cost_matrix().max()) / (1.0 - product.discount)
        additive_ok = deviation <= ADDITIVE_RTOL * (1.0 + v_bound)
        if report.mismatching or not additive_ok:
            failures += 1
        documents.append({
            "seed": seed,
            "factor_states": list(product.state_dims),
            "report": report.model_dump(),
            "additive_deviation": deviation,
            "additive_ok": additive_ok,
        })
        print(f"seed {seed}: factors {product.state_dims}, agreement {report.match_percent:.2f}%, "
              f"additive deviation {deviation:.2e}")
    ctx.keep(exports.write_document(ctx.path("verify_product.json"), documents))
    return 1 if failures else 0


def _verify_mission(ctx: RunContext) -> int:
    config = ctx.load_config()
    run = run_comparison(config, tolerance=ctx.args.tol, threads=ctx.args.threads, mode=MetaMode(ctx.args.meta),
                         refine_sweeps=ctx.args.refine_sweeps)
    raw, tie_aware = run.raw_report, run.tie_aware_report
    ctx.keep(exports.write_document(ctx.path("comparison.json"), run.record))
    ctx.keep(exports.write_document(ctx.path("agreement_raw.json"), raw))
    ctx.keep(exports.write_document(ctx.path("agreement_tie_aware.json"), tie_aware))
    ctx.keep(exports.write_agreement(ctx.path("agreement.csv"), raw))
    ctx.keep(exports.write_agreement_by_action(ctx.path("agreement_by_action.csv"), run.combined_policy,
                                               run.global_policy))

    try:
        state = MissionState.from_vector(REPRESENTATIVE_STATE, run.model.layout)
    except StateValidationError:
        state = run.model.state_at(0)
    diff = compare_next_state(state, run.combined_policy, run.global_policy, run.model)
    ctx.keep(exports.write_document(ctx.path("next_state.json"), diff.to_document()))
    print(f"{config.name}: agreement {raw.match_percent:.3f}% raw, {tie_aware.match_percent:.3f}% tie-aware; "
          f"speedup x{run.record.runtime_ratio:.1f}")
    return 0


def cmd_verify(ctx: RunContext) -> int:
    if ctx.args.mode == "product":
        return _verify_product(ctx)
    return _verify_mission(ctx)


def cmd_simulate(ctx: RunContext) -> int:
    config = ctx.load_config()
    model = build_model(config)
    if ctx.args.policy:
        policy_path = Path(ctx.args.policy)
        policy = exports.read_policy(policy_path)
        if policy.layout is not None and policy.layout != model.layout:
            raise ContractError(f"policy layout {policy.layout} does not match {model.layout}")
    else:
        values, _ = value_iteration(model, tolerance=ctx.args.tol, label=config.name)
        policy = extract_policy(model, values)
        policy_path = ctx.keep(exports.write_policy(ctx.path("policy.bin"), policy, exports.config_hash(config)))

    if ctx.args.scenario:
        scenario = load_scenario(ctx.args.scenario, model.layout)
    else:
        scenario = case_one_scenario(config, horizon=ctx.args.horizon, seed=ctx.args.seed)
    records = run_mission(scenario, policy, model)
    ctx.keep(exports.write_trajectory(
        ctx.path("trajectory.csv"), records, model.goal_count, scenario.seed,
        exports.config_hash(config), exports.sha256_file(policy_path),
    ))
    print(f"{config.name}: {len(records)} epochs, final location {records[-1].state.location}")
    return 0


def cmd_bench(ctx: RunContext) -> int:
    args = ctx.args
    sweep = sweep_goals(args.g_min, args.g_max, args.solve_up_to, budget_seconds=args.budget, tolerance=args.tol)
    ctx.keep(exports.write_sweep(ctx.path("sweep.csv"), sweep))
    if sweep.fit is not None:
        ctx.keep(exports.write_document(ctx.path("fit.json"), sweep.fit.to_document()))
    for message in sweep.diagnostics:
        print(f"note: {message}")
    if args.compare:
        config = ctx.load_config()
        run = run_comparison(config, tolerance=args.tol, threads=args.threads)
        ctx.keep(exports.write_document(ctx.path("comparison.json"), run.record))
    _print_table([
        {"goals": p.goals, "states": f"{p.state_count:,}",
         "seconds": "" if p.measured_solve_seconds is None else f"{p.measured_solve_seconds:.3f}",
         "extrapolated": p.extrapolated}
        for p in sweep.points
    ])
    return 0


def cmd_compare(ctx: RunContext) -> int:
    config = ctx.load_config()
    a = exports.read_policy(ctx.args.policy_a)
    b = exports.read_policy(ctx.args.policy_b)
    layout = config.state_layout
    for name, policy in (("policy-a", a), ("policy-b", b)):
        if policy.layout is not None and policy.layout != layout:
            raise ContractError(f"{name} layout {policy.layout} does not match the config's {layout}")
    model = values = None
    if ctx.args.tie_aware:
        model = build_model(config)
        values, _ = value_iteration(model, tolerance=ctx.args.tol, label=config.name)
    report = compare_policies(a, b, model, values, tie_aware=ctx.args.tie_aware)
    ctx.keep(exports.write_document(ctx.path("comparison.json"), report))
    ctx.keep(exports.write_agreement(ctx.path("agreement.csv"), report))
    ctx.keep(exports.write_agreement_by_action(ctx.path("agreement_by_action.csv"), a, b))
    print(f"agreement {report.match_percent:.3f}% ({report.matching:,}/{report.total_states:,})")
    if ctx.args.require_exact and report.mismatching:
        return 1
    return 0


COMMANDS: Dict[str, Callable[[RunContext], int]] = {
    "validate": cmd_validate,
    "solve": cmd_solve,
    "decompose": cmd_decompose,
    "recombine": cmd_recombine,
    "verify": cmd_verify,
    "simulate": cmd_simulate,
    "bench": cmd_bench,
    "compare": cmd_compare,
}


# =====================================================
# Parser
# =====================================================

def _common(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", default="paper3goal", help="Preset name or JSON config path")
    parser.add_argument("--output-dir", default=settings.OUTPUT_DIR, help="Directory for outputs and the manifest")
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--threads", type=int, default=settings.THREADS, help="Sub-MDP solve threads")
    parser.add_argument("--log-level", default=settings.LOG_LEVEL)
    parser.add_argument("--tol", type=float, default=settings.DEFAULT_TOLERANCE, help="Sup-norm stopping tolerance")
    parser.add_argument("--max-sweeps", type=int, default=settings.DEFAULT_MAX_SWEEPS)


def _decompose_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--criterion", choices=[c.value for c in Criterion], default=Criterion.GOAL.value)
    parser.add_argument("--t-max", type=int, default=5000)
    parser.add_argument("--weights", type=float, nargs=3, default=[1.0, 1.0, 1.0], metavar=("W_G", "W_L", "W_F"))
    parser.add_argument("--threshold", type=float, default=0.0)
    parser.add_argument("--overlap-limit", type=float, default=0.5)
    parser.add_argument("--merge-floor", type=int, default=32, help="Disjoint candidates both below this size may merge")
    parser.add_argument("--region", type=_cell_list, action="append", default=None, metavar="CELLS",
                        help="Comma-separated location region, repeatable (default: grid quadrants)")


def _meta_flag(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--meta", choices=[m.value for m in MetaMode], default=MetaMode.BEST_VALUE.value)
    parser.add_argument("--refine-sweeps", type=int, default=0,
                        help="Global Bellman sweeps seeded with the summed sub-MDP values")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="missionplanner", description="Factored MDP mission planner")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    verbs = parser.add_subparsers(dest="command", required=True)

    _common(verbs.add_parser("validate", help="Validate a config and its model"))
    _common(verbs.add_parser("solve", help="Global value iteration"))

    p = verbs.add_parser("decompose", help="Build a decomposition plan")
    _common(p)
    _decompose_flags(p)

    p = verbs.add_parser("recombine", help="Decompose, solve sub-MDPs, build the combined policy")
    _common(p)
    _decompose_flags(p)
    _meta_flag(p)

    p = verbs.add_parser("verify", help="Product-MDP equivalence check or mission agreement")
    _common(p)
    p.add_argument("--mode", choices=["product", "mission"], default="product")
    p.add_argument("--factors", type=int, default=None, help="Factors per random product (default 2-3)")
    p.add_argument("--max-states", type=int, default=None, help="Cap on product states")
    p.add_argument("--max-factor-states", type=int, default=20)
    p.add_argument("--trials", type=int, default=1)
    _meta_flag(p)

    p = verbs.add_parser("simulate", help="Scripted duty-cycle rollout")
    _common(p)
    p.add_argument("--policy", default=None, help="Policy file (default: solve the config)")
    p.add_argument("--horizon", type=int, default=12)
    p.add_argument("--scenario", default=None, help="JSON scenario (initial_state, horizon, seed, events)")

    p = verbs.add_parser("bench", help="Goal sweep and power-law fit")
    _common(p)
    p.add_argument("--g-min", type=int, default=1)
    p.add_argument("--g-max", type=int, default=10)
    p.add_argument("--solve-up-to", type=int, default=2)
    p.add_argument("--budget", type=float, default=None, help="Solve budget in seconds")
    p.add_argument("--compare", action="store_true", help="Also compare global vs decomposed on --config")

    p = verbs.add_parser("compare", help="Compare two policy files")
    _common(p)
    p.add_argument("--policy-a", required=True)
    p.add_argument("--policy-b", required=True)
    p.add_argument("--tie-aware", action="store_true")
    p.add_argument("--require-exact", action="store_true", help="Exit 1 unless the policies agree everywhere")
    return parser


def _versions() -> Dict[str, str]:
    import pandas
    import pydantic
    import scipy

    return {
        "missionplanner": __version__,
        "python": sys.version.split()[0],
        "numpy": np.__version__,
        "scipy": scipy.__version__,
        "pandas": pandas.__version__,
        "pydantic": pydantic.VERSION,
    }


def _write_manifest(ctx: RunContext, argv: List[str]) -> None:
    manifest = RunManifest(
        command=ctx.args.command,
        argv=argv,
        config_name=ctx.config.name if ctx.config else None,
        config_hash=exports.config_hash(ctx.config) if ctx.config else None,
        seed=ctx.args.seed,
        threads=ctx.args.threads,
        versions=_versions(),
        outputs=exports.hash_outputs(ctx.outputs, ctx.output_dir),
    )
    exports.write_document(ctx.path("manifest.json"), manifest)


def run(argv: Optional[List[str]] = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return int(e.code or 0)

    settings.configure_logging(args.log_level)
    settings.init_error_tracking()
    ctx = RunContext(args=args, output_dir=Path(args.output_dir))
    logger.info(f"🚀 {args.command} -> {ctx.output_dir}")

    try:
        code = COMMANDS[args.command](ctx)
        _write_manifest(ctx, argv)
    except MissionPlannerError as e:
        print(f"❌ {e.message}", file=sys.stderr)
        return e.exit_code
    except Exception as e:
        logger.exception(f"❌ {args.command} failed: {str(e)}")
        settings.capture_exception(e)
        print(f"❌ unexpected error: {e}", file=sys.stderr)
        return 2
    return code


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
