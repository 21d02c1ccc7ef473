"""l2 sweeps: one full detection run per lambda, gathered into surface tables."""

from __future__ import annotations

from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from datetime import datetime
from pathlib import Path

import pandas as pd

from detector import bump_magnitude, collapse_sparsity
from orchestrator.experiment import ExperimentConfig
from orchestrator.pipeline import RunDirectory, load_record, resume, run_experiment
from utils import config as app_config
from utils import logger, runs_dir
from utils.errors import ConfigError, RunStateError
from utils.io import atomic_write_json, atomic_write_text, read_json

SURFACE_COLUMNS = ["lambda", "prune_iter", "sparsity", "val_acc", "val_loss", "train_acc", "train_loss"]
SUMMARY_COLUMNS = [
    "lambda", "status", "sdd", "trigger_sparsity", "bump_magnitude", "collapse_sparsity",
    "dense_val_acc", "best_val_acc", "points", "zero_lambda", "flips_sha256", "run_dir", "error",
]


@dataclass
class SweepResult:
    sweep_dir: Path
    lambdas: list[float]
    cells: list[dict] = field(default_factory=list)
    surface: pd.DataFrame = field(default_factory=lambda: pd.DataFrame(columns=SURFACE_COLUMNS))
    summary: pd.DataFrame = field(default_factory=lambda: pd.DataFrame(columns=SUMMARY_COLUMNS))

    @property
    def failed(self) -> list[dict]:
        return [c for c in self.cells if c["status"] != "completed"]


def cell_name(l2: float) -> str:
    return f"lambda_{l2:g}"


def cell_config(base: ExperimentConfig, l2: float, sweep_dir: Path) -> ExperimentConfig:
    """The base config with l2 replaced, writing into its own cell directory."""
    name = f"{base.run_id}-{cell_name(l2)}"
    return base.with_l2(l2, name).with_output_dir(sweep_dir / cell_name(l2))


def _run_cell(raw: dict) -> dict:
    """Run (or continue) one cell. Top-level so process pools can pickle it."""
    config = ExperimentConfig.from_dict(raw)
    l2 = config.train.l2
    try:
        if RunDirectory(config.output_dir).manifest.exists():
            record = resume(config.output_dir)
        else:
            record = run_experiment(config)
        return {"lambda": l2, "status": record.status, "error": record.manifest.get("error"),
                "run_dir": str(record.run_dir)}
    except Exception as e:
        logger.error(f"[sweep] lambda={l2:g} failed: {e}")
        return {"lambda": l2, "status": "failed", "error": str(e), "run_dir": str(config.output_dir)}


def _check_cells(configs: list[ExperimentConfig]) -> None:
    """Existing cells must hold the very config requested; they are then continued."""
    for config in configs:
        paths = RunDirectory(config.output_dir)
        if not paths.manifest.exists():
            continue
        stored = ExperimentConfig.from_dict(read_json(paths.config))
        if stored.config_hash != config.config_hash:
            raise RunStateError(
                f"{paths.root} holds a run of a different config "
                f"({stored.config_hash[:10]} != {config.config_hash[:10]}); use another sweep directory"
            )


def _check_lambdas(lambdas) -> list[float]:
    values = [float(v) for v in lambdas]
    if not values:
        raise ConfigError("a sweep needs at least one lambda")
    negative = [v for v in values if v < 0]
    if negative:
        raise ConfigError(f"lambda must be >= 0, got {negative[0]}")
    if len(set(values)) != len(values):
        raise ConfigError("lambda values must be distinct")
    names = [cell_name(v) for v in values]
    if len(set(names)) != len(names):
        clash = next(n for n in names if names.count(n) > 1)
        raise ConfigError(f"lambda values share the cell directory {clash}")
    if 0.0 in values:
        logger.warning("[sweep] lambda=0 runs without l2 regularization")
    return values


def sweep_lambda(
    base: ExperimentConfig,
    lambdas,
    workers: int | None = None,
    sweep_dir: Path | None = None,
) -> SweepResult:
    """Run the detection loop once per lambda with shared data and noise seeds.

    A failing cell is recorded and the sweep carries on. Cells already on disk
    are continued only when they hold the same config; otherwise nothing runs.
    """
    values = _check_lambdas(lambdas)
    workers = workers or int(app_config.get("sweep", {}).get("workers", 1))
    sweep_dir = Path(sweep_dir) if sweep_dir else runs_dir() / f"sweep-{base.run_id}"
    sweep_dir.mkdir(parents=True, exist_ok=True)
    configs = [cell_config(base, v, sweep_dir) for v in values]
    _check_cells(configs)
    logger.info(f"[sweep] {len(values)} cells in {sweep_dir} ({workers} worker(s))")

    start = datetime.now()
    if workers > 1 and len(configs) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            cells = list(pool.map(_run_cell, [c.to_dict() for c in configs]))
    else:
        cells = [_run_cell(c.to_dict()) for c in configs]

    result = collect_sweep(sweep_dir, values, cells)
    atomic_write_json(sweep_dir / "sweep.json", {
        "base": base.to_dict(),
        "lambdas": values,
        "cells": cells,
        "elapsed_seconds": round((datetime.now() - start).total_seconds(), 1),
    })
    logger.info(f"[sweep] Done: {len(cells) - len(result.failed)}/{len(cells)} cells completed")
    return result


def collect_sweep(sweep_dir: Path, lambdas: list[float], cells: list[dict]) -> SweepResult:
    """Build the (lambda, sparsity) surface and the per-lambda summary; write both as CSV."""
    factor = float(app_config.get("detector", {}).get("collapse_factor", 1.5))
    surface_rows, summary_rows, flips = [], [], set()
    for cell in cells:
        l2 = cell["lambda"]
        row = {"lambda": l2, "status": cell["status"], "sdd": None, "trigger_sparsity": None,
               "bump_magnitude": None, "collapse_sparsity": None, "dense_val_acc": None,
               "best_val_acc": None, "points": 0, "zero_lambda": l2 == 0.0, "flips_sha256": None,
               "run_dir": cell["run_dir"], "error": cell.get("error")}
        try:
            record = load_record(cell["run_dir"])
        except Exception as e:
            logger.warning(f"[sweep] no record for lambda={l2:g}: {e}")
            summary_rows.append(row)
            continue
        curve = record.curve
        for pt in curve:
            surface_rows.append({"lambda": l2, "prune_iter": pt.prune_iter, "sparsity": pt.sparsity,
                                 "val_acc": pt.val_acc, "val_loss": pt.val_loss,
                                 "train_acc": pt.train_acc, "train_loss": pt.train_loss})
        chance = 1.0 / record.config.data.classes
        row.update({
            "status": record.status,
            "sdd": record.verdict.sdd if record.verdict else None,
            "trigger_sparsity": record.verdict.trigger_sparsity if record.verdict else None,
            "bump_magnitude": bump_magnitude([pt.val_loss for pt in curve]),
            "collapse_sparsity": collapse_sparsity(curve, chance, factor),
            "dense_val_acc": curve[0].val_acc if curve else None,
            "best_val_acc": max((pt.val_acc for pt in curve), default=None),
            "points": len(curve),
            "flips_sha256": record.manifest.get("noise", {}).get("flips_sha256"),
        })
        flips.add(row["flips_sha256"])
        summary_rows.append(row)

    if len(flips) > 1:
        logger.warning("[sweep] cells do not share one noisy-label flip record")

    report_dir = Path(sweep_dir) / "report"
    surface = pd.DataFrame(surface_rows, columns=SURFACE_COLUMNS)
    summary = pd.DataFrame(summary_rows, columns=SUMMARY_COLUMNS)
    atomic_write_text(report_dir / "surface.csv", surface.to_csv(index=False, lineterminator="\n"))
    atomic_write_text(report_dir / "lambda_summary.csv", summary.to_csv(index=False, lineterminator="\n"))
    return SweepResult(Path(sweep_dir), list(lambdas), cells, surface, summary)


def load_sweep(sweep_dir) -> SweepResult:
    """Rebuild the tables of a finished sweep from its sweep.json."""
    sweep_dir = Path(sweep_dir)
    meta = read_json(sweep_dir / "sweep.json")
    return collect_sweep(sweep_dir, meta["lambdas"], meta["cells"])


def is_sweep_dir(path) -> bool:
    return (Path(path) / "sweep.json").exists()
