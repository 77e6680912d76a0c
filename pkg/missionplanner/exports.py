"""
File outputs: policy files, plot-data CSVs (pandas), JSON report documents
and the sha256 content hashes recorded in run manifests.
"""

import hashlib
import json
from dataclasses import asdict
from pathlib import Path
from typing import Dict, Iterable, Optional, Sequence, Union

import numpy as np
import pandas as pd
from pydantic import BaseModel

from .bench import GoalSweep
from .errors import ContractError
from .schemas import ModelConfig, PolicyComparisonReport
from .simulator import GENERATOR_NAME, TrajectoryRecord
from .solver import Policy, SolveReport
from .state_space import StateLayout

PathLike = Union[str, Path]

POLICY_MAGIC = b"MISSIONPOLICY 1\n"


def sha256_file(path: PathLike) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as f:
        for chunk in iter(lambda: f.read(1 << 20), b""):
            digest.update(chunk)
    return digest.hexdigest()


def config_hash(config: ModelConfig) -> str:
    return hashlib.sha256(config.model_dump_json().encode("utf-8")).hexdigest()


def _prepare(path: PathLike) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    return path


# =====================================================
# Policy files
# =====================================================

def write_policy(path: PathLike, policy: Policy, config_digest: Optional[str] = None) -> Path:
    """Magic line, one JSON header line, then the action array in .npy form"""
    path = _prepare(path)
    header = {
        "states": len(policy),
        "layout": asdict(policy.layout) if policy.layout is not None else None,
        "config_hash": config_digest,
    }
    with open(path, "wb") as f:
        f.write(POLICY_MAGIC)
        f.write(json.dumps(header, sort_keys=True).encode("utf-8") + b"\n")
        np.save(f, np.asarray(policy.actions, dtype=np.int16), allow_pickle=False)
    return path


def read_policy(path: PathLike) -> Policy:
    with open(path, "rb") as f:
        if f.readline() != POLICY_MAGIC:
            raise ContractError(f"{path} is not a policy file")
        header = json.loads(f.readline().decode("utf-8"))
        actions = np.load(f, allow_pickle=False).astype(np.int64)
    if actions.shape != (header["states"],):
        raise ContractError(f"{path}: header says {header['states']} states, found {actions.shape}")
    layout = StateLayout(**header["layout"]) if header.get("layout") else None
    return Policy(actions, layout)


# =====================================================
# CSV plot data
# =====================================================

def write_residuals(path: PathLike, report: SolveReport) -> Path:
    path = _prepare(path)
    df = pd.DataFrame({
        "sweep": np.arange(1, len(report.residual_history) + 1),
        "residual": report.residual_history,
    })
    df.to_csv(path, index=False)
    return path


def write_agreement(path: PathLike, report: PolicyComparisonReport) -> Path:
    """Bar data: matching / mismatching counts and percentages"""
    path = _prepare(path)
    total = max(report.total_states, 1)
    df = pd.DataFrame({
        "category": ["matching", "mismatching"],
        "states": [report.matching, report.mismatching],
        "percent": [100.0 * report.matching / total, 100.0 * report.mismatching / total],
    })
    df.to_csv(path, index=False)
    return path


def write_agreement_by_action(path: PathLike, a: Policy, b: Policy) -> Path:
    """Per action of policy `a`: how often it is chosen and how often `b` agrees"""
    path = _prepare(path)
    df = pd.DataFrame({"action": a.actions, "match": a.actions == b.actions})
    table = df.groupby("action").agg(states=("match", "size"), matching=("match", "sum")).reset_index()
    table["percent"] = 100.0 * table["matching"] / table["states"]
    table.to_csv(path, index=False)
    return path


def trajectory_frame(records: Sequence[TrajectoryRecord], goal_count: int) -> pd.DataFrame:
    rows = []
    for record in records:
        s = record.state
        row: Dict[str, object] = {"epoch": record.epoch, "f": s.fault}
        row.update({f"r{j + 1}": int(r) for j, r in enumerate(s.range_flags)})
        row.update({f"g{j + 1}": g for j, g in enumerate(s.goal_priorities)})
        row.update({
            "l": s.location, "c": s.commitment, "t": s.threat, "m": s.nav_mode,
            "action": record.action, "cost": record.cost, "event": record.event_applied or "",
        })
        rows.append(row)
    columns = (["epoch", "f"] + [f"r{j}" for j in range(1, goal_count + 1)]
               + [f"g{j}" for j in range(1, goal_count + 1)]
               + ["l", "c", "t", "m", "action", "cost", "event"])
    return pd.DataFrame(rows, columns=columns)


def write_trajectory(
    path: PathLike,
    records: Sequence[TrajectoryRecord],
    goal_count: int,
    seed: int,
    config_digest: Optional[str] = None,
    policy_digest: Optional[str] = None,
) -> Path:
    path = _prepare(path)
    with open(path, "w", newline="") as f:
        f.write(f"# generator: {GENERATOR_NAME}\n")
        f.write(f"# seed: {seed}\n")
        f.write(f"# config_hash: {config_digest or ''}\n")
        f.write(f"# policy_hash: {policy_digest or ''}\n")
        trajectory_frame(records, goal_count).to_csv(f, index=False)
    return path


def read_trajectory(path: PathLike) -> pd.DataFrame:
    return pd.read_csv(path, comment="#", keep_default_na=False)


def write_sweep(path: PathLike, sweep: GoalSweep) -> Path:
    path = _prepare(path)
    df = pd.DataFrame([{
        "goals": p.goals,
        "states": p.state_count,
        "seconds": p.measured_solve_seconds,
        "extrapolated": p.extrapolated,
        "predicted_seconds": p.predicted_seconds,
    } for p in sweep.points])
    df.to_csv(path, index=False)
    return path


# =====================================================
# JSON documents
# =====================================================

def write_document(path: PathLike, document: Union[BaseModel, dict, list]) -> Path:
    path = _prepare(path)
    if isinstance(document, BaseModel):
        text = document.model_dump_json(indent=2)
    else:
        text = json.dumps(document, indent=2, sort_keys=True, default=str)
    path.write_text(text + "\n", encoding="utf-8")
    return path


def hash_outputs(paths: Iterable[Path], root: Path) -> Dict[str, str]:
    """relative file name -> sha256, for the run manifest"""
    return {str(Path(p).relative_to(root)): sha256_file(p) for p in paths}
