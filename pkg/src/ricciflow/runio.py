"""Run directory persistence.

A completed run is a plain directory:

    config.yaml      canonical config (re-parseable)
    run.json         summary: version, config hash, seed, T_est, status, steps
    records.csv      diagnostics records (full precision)
    snapshots/       one profile snapshot per scheduled tau (tau_XX.json)
    checkpoints/     solver checkpoints, one per snapshot plus final.ckpt

Reports are a pure function of these contents; nothing else is consulted.
"""

from __future__ import annotations

import json
import time
from dataclasses import dataclass, field
from pathlib import Path

from . import __version__
from .config import (
    ExperimentConfig,
    config_hash,
    make_datum,
    make_grid,
    make_policy,
    parse_config_file,
    render_config,
)
from .diagnostics import DiagnosticsRecord, load_records, save_records
from .errors import StiffnessFailureError
from .rescale import ProfileSnapshot, load_snapshot, save_snapshot
from .solver import Trajectory, run, save_checkpoint


@dataclass
class RunSummary:
    run_dir: str
    status: str
    t_est: float
    m0: float
    steps: int
    n_records: int
    n_snapshots: int
    config_hash: str
    seed: int
    wall_seconds: float
    checkpoint: str | None = None


def execute_run(
    cfg: ExperimentConfig,
    out_dir: str | None = None,
    seed: int | None = None,
) -> RunSummary:
    """Run the configured experiment and persist it under the output directory.

    OSError from an unwritable destination propagates to the caller; a
    stiffness failure still produces run.json (status "stiffness-failure")
    plus the rescue checkpoint, then re-raises.
    """
    dest = Path(out_dir if out_dir is not None else cfg.outputs.directory)
    use_seed = cfg.seed if seed is None else seed
    dest.mkdir(parents=True, exist_ok=True)
    (dest / "snapshots").mkdir(exist_ok=True)
    (dest / "checkpoints").mkdir(exist_ok=True)

    chash = config_hash(cfg)
    (dest / "config.yaml").write_text(render_config(cfg))

    datum = make_datum(cfg)
    grid = make_grid(cfg)
    policy = make_policy(cfg)

    tic = time.perf_counter()
    try:
        traj = run(
            datum,
            grid,
            policy,
            record_stride=cfg.outputs.record_stride,
            seed=use_seed,
            checkpoint_dir=str(dest / "checkpoints"),
        )
    except StiffnessFailureError as exc:
        summary = RunSummary(
            run_dir=str(dest),
            status="stiffness-failure",
            t_est=float("nan"),
            m0=float("nan"),
            steps=-1,
            n_records=0,
            n_snapshots=0,
            config_hash=chash,
            seed=use_seed,
            wall_seconds=time.perf_counter() - tic,
            checkpoint=exc.checkpoint_path,
        )
        _write_summary(dest, summary)
        raise
    wall = time.perf_counter() - tic

    save_records(str(dest / "records.csv"), traj.records)
    for k, snap in enumerate(traj.snapshots):
        save_snapshot(str(dest / "snapshots" / f"tau_{k:02d}.json"), snap)
    for snap, state in zip(traj.snapshots, traj.snapshot_states):
        save_checkpoint(
            str(dest / "checkpoints" / f"step_{state.step_index:06d}.ckpt"),
            state,
            config_hash=chash,
        )
    save_checkpoint(str(dest / "checkpoints" / "final.ckpt"), traj.final_state, config_hash=chash)

    summary = RunSummary(
        run_dir=str(dest),
        status=traj.status,
        t_est=traj.t_est,
        m0=traj.m0,
        steps=traj.final_state.step_index,
        n_records=len(traj.records),
        n_snapshots=len(traj.snapshots),
        config_hash=chash,
        seed=use_seed,
        wall_seconds=wall,
    )
    _write_summary(dest, summary)
    return summary


def _write_summary(dest: Path, summary: RunSummary) -> None:
    payload = {
        "version": __version__,
        "status": summary.status,
        "t_est": summary.t_est,
        "m0": summary.m0,
        "steps": summary.steps,
        "config_hash": summary.config_hash,
        "seed": summary.seed,
        "wall_seconds": round(summary.wall_seconds, 3),
    }
    (dest / "run.json").write_text(json.dumps(payload, indent=1) + "\n")


@dataclass
class RunData:
    """Parsed contents of a run directory."""

    run_dir: str
    config: ExperimentConfig
    summary: dict
    records: list[DiagnosticsRecord]
    snapshots: list[ProfileSnapshot] = field(default_factory=list)
    checkpoint_paths: list[str] = field(default_factory=list)

    @property
    def t_est(self) -> float:
        return float(self.summary["t_est"])


def load_run(run_dir: str) -> RunData:
    """Load a run directory; missing snapshots are tolerated (reports flag them)."""
    root = Path(run_dir)
    if not root.is_dir():
        raise FileNotFoundError(f"run directory not found: {run_dir}")
    cfg = parse_config_file(str(root / "config.yaml"))
    summary = json.loads((root / "run.json").read_text())
    records = load_records(str(root / "records.csv"))
    snapshots = []
    snapdir = root / "snapshots"
    if snapdir.is_dir():
        snapshots = [load_snapshot(str(p)) for p in sorted(snapdir.glob("*.json"))]
        snapshots.sort(key=lambda s: s.tau)
    ckdir = root / "checkpoints"
    cks = sorted(ckdir.glob("step_*.ckpt")) if ckdir.is_dir() else []
    return RunData(
        run_dir=str(root),
        config=cfg,
        summary=summary,
        records=records,
        snapshots=snapshots,
        checkpoint_paths=[str(p) for p in cks],
    )
