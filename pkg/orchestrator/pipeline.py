"""Full pipeline: dense train -> (prune -> retrain -> evaluate)* -> verdict.

Every run owns one directory::

    config.json  manifest.json  metrics.csv  epochs.csv  verdict.json
    noise/flips.csv
    checkpoints/iter_000_init.ckpt  checkpoints/iter_XXX.ckpt
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from datetime import datetime
from pathlib import Path

import numpy as np
import pandas as pd

from autodiff import Tensor
from dataset import NoiseSpec, PreparedData, prepare_data
from dataset.noise import labels_hash
from detector import CurvePoint, SDDVerdict, detect_sdd_curve
from model.vit import init_params, prunable_names
from orchestrator.checkpoint import load_checkpoint, save_checkpoint
from orchestrator.experiment import ExperimentConfig
from orchestrator.trainer import EpochStats, evaluate, train
from pruning import PruneMask, magnitude_prune, model_sparsity, sparsity, surviving_values
from utils import config as app_config
from utils import logger, runs_dir
from utils.errors import CheckpointError, NonFiniteError, RunStateError, TerminalPruneError
from utils.io import atomic_write_json, atomic_write_text, read_json, sha256_file

METRICS_COLUMNS = [
    "run_id", "prune_iter", "sparsity", "train_acc", "train_loss",
    "val_acc", "val_loss", "epochs_trained", "lr_final", "seed",
]
EPOCH_COLUMNS = ["prune_iter", "epoch", "train_loss", "train_acc", "lr", "seconds"]

STATUS_RUNNING = "running"
STATUS_COMPLETED = "completed"
STATUS_FAILED = "failed"
STATUS_INTERRUPTED = "interrupted"


class RunDirectory:
    """Paths of every artifact inside one run directory."""

    def __init__(self, root):
        self.root = Path(root)

    config = property(lambda self: self.root / "config.json")
    manifest = property(lambda self: self.root / "manifest.json")
    metrics = property(lambda self: self.root / "metrics.csv")
    epochs = property(lambda self: self.root / "epochs.csv")
    verdict = property(lambda self: self.root / "verdict.json")
    flips = property(lambda self: self.root / "noise" / "flips.csv")
    checkpoints = property(lambda self: self.root / "checkpoints")
    report = property(lambda self: self.root / "report")

    def checkpoint(self, k: int) -> Path:
        return self.checkpoints / f"iter_{k:03d}.ckpt"

    @property
    def init_checkpoint(self) -> Path:
        return self.checkpoints / "iter_000_init.ckpt"


@dataclass
class RunRecord:
    run_dir: Path
    config: ExperimentConfig
    manifest: dict
    curve: list[CurvePoint] = field(default_factory=list)
    verdict: SDDVerdict | None = None

    @property
    def status(self) -> str:
        return self.manifest.get("status", "unknown")

    @property
    def run_id(self) -> str:
        return self.manifest["run_id"]

    def metrics_frame(self) -> pd.DataFrame:
        return pd.DataFrame(_metrics_rows(self.run_id, self.config.seed, self.curve, self.manifest), columns=METRICS_COLUMNS)


def _retention() -> tuple[int, set[int]]:
    cfg = app_config.get("retention", {})
    return int(cfg.get("keep_every", 5)), {int(k) for k in cfg.get("keep", [])}


def _retained(k: int, latest: int) -> bool:
    every, keep = _retention()
    return k == 0 or k == latest or k in keep or (every > 0 and k % every == 0)


def _metrics_rows(run_id: str, seed: int, curve: list[CurvePoint], manifest: dict) -> list[dict]:
    extra = {it["prune_iter"]: it for it in manifest.get("iterations", [])}
    rows = []
    for pt in curve:
        it = extra.get(pt.prune_iter, {})
        rows.append({
            "run_id": run_id,
            "prune_iter": pt.prune_iter,
            "sparsity": pt.sparsity,
            "train_acc": pt.train_acc,
            "train_loss": pt.train_loss,
            "val_acc": pt.val_acc,
            "val_loss": pt.val_loss,
            "epochs_trained": it.get("epochs_trained", 0),
            "lr_final": it.get("lr_final", 0.0),
            "seed": seed,
        })
    return rows


def read_metrics(path: Path) -> pd.DataFrame:
    return pd.read_csv(path, float_precision="round_trip")


def curve_from_frame(df: pd.DataFrame) -> list[CurvePoint]:
    return [
        CurvePoint(int(r.prune_iter), float(r.sparsity), float(r.val_acc), float(r.train_acc),
                   float(r.train_loss), float(r.val_loss))
        for r in df.itertuples(index=False)
    ]


class _Run:
    """Mutable state of one run while the loop executes."""

    def __init__(self, config: ExperimentConfig, paths: RunDirectory, data: PreparedData, manifest: dict):
        self.config = config
        self.paths = paths
        self.data = data
        self.manifest = manifest
        self.curve: list[CurvePoint] = []
        self.epochs: list[dict] = []
        self.verdict = SDDVerdict(False, None, config.detect.delta, config.detect.smoothing_window)

    # persistence

    def save_manifest(self) -> None:
        self.manifest["updated"] = datetime.now().isoformat(timespec="seconds")
        atomic_write_json(self.paths.manifest, self.manifest)

    def save_tables(self) -> None:
        frame = pd.DataFrame(
            _metrics_rows(self.manifest["run_id"], self.config.seed, self.curve, self.manifest),
            columns=METRICS_COLUMNS,
        )
        atomic_write_text(self.paths.metrics, frame.to_csv(index=False, lineterminator="\n"))
        epochs = pd.DataFrame(self.epochs, columns=EPOCH_COLUMNS)
        atomic_write_text(self.paths.epochs, epochs.to_csv(index=False, lineterminator="\n"))
        atomic_write_json(self.paths.verdict, self.verdict.to_dict())

    def set_status(self, status: str, error: str | None = None) -> None:
        self.manifest["status"] = status
        self.manifest["error"] = error
        self.manifest["verdict"] = self.verdict.to_dict()
        self.save_manifest()

    # loop

    def measure(self, k: int, params, mask: PruneMask, result, seconds: float) -> None:
        model = self.config.model
        train_acc, train_loss = evaluate(model, params, self.data.train)
        val_acc, val_loss = evaluate(model, params, self.data.val)
        test_acc, test_loss = evaluate(model, params, self.data.test)
        point = CurvePoint(k, sparsity(mask), val_acc, train_acc, train_loss, val_loss)
        self.curve.append(point)
        self.epochs.extend(EpochStats.to_dict(s) for s in result.history)

        survivors = surviving_values(params, mask)
        ckpt = self.paths.checkpoint(k)
        save_checkpoint(ckpt, params, mask, {"run_id": self.manifest["run_id"], "prune_iter": k,
                                             "config_hash": self.config.config_hash})
        self.manifest["iterations"].append({
            "prune_iter": k,
            "sparsity": point.sparsity,
            "model_sparsity": model_sparsity(params, mask),
            "survivors": int(survivors.size),
            "weight_mean": float(survivors.mean()) if survivors.size else 0.0,
            "weight_var": float(survivors.var()) if survivors.size else 0.0,
            "test_acc": test_acc,
            "test_loss": test_loss,
            "epochs_trained": result.epochs_trained,
            "lr_final": result.lr_final,
            "train_labels_hash": labels_hash(self.data.train.labels),
            "checkpoint": str(ckpt.relative_to(self.paths.root)),
            "checkpoint_sha256": sha256_file(ckpt),
            "checkpoint_status": "kept",
            "seconds": round(seconds, 3),
        })
        self.manifest["completed_iterations"] = k

        was_positive = self.verdict.sdd
        self.verdict = detect_sdd_curve(self.curve, self.config.detect.delta, self.config.detect.smoothing_window)
        if self.verdict.sdd and not was_positive:
            logger.info(f"[pipeline] SDD detected at iteration {self.verdict.trigger_index} "
                        f"(sparsity {self.verdict.trigger_sparsity:.4f})")

        self.save_tables()
        self.manifest["verdict"] = self.verdict.to_dict()
        self.save_manifest()
        if k > 0:
            self.drop_checkpoint(k - 1, latest=k)
        logger.info(
            f"[pipeline] iter {k}: sparsity={point.sparsity:.4f} val_acc={val_acc:.4f} "
            f"val_loss={val_loss:.4f} train_acc={train_acc:.4f}"
        )

    def drop_checkpoint(self, k: int, latest: int) -> None:
        if _retained(k, latest):
            return
        self.paths.checkpoint(k).unlink(missing_ok=True)
        for it in self.manifest["iterations"]:
            if it["prune_iter"] == k:
                it["checkpoint_status"] = "retention-pruned"
        self.save_manifest()

    def loop(self, params, mask: PruneMask | None, start: int, stop_after: int | None) -> None:
        cfg = self.config
        planned = self.manifest["planned_iterations"]
        if start == 0:
            t0 = time.perf_counter()
            logger.info(f"[pipeline] Dense training ({cfg.train.epochs} epochs, l2={cfg.train.l2})")
            mask = PruneMask.full(params, prunable_names(params))
            result = train(cfg.model, params, self.data.train, cfg.train, None, cfg.seed, 0)
            self.measure(0, params, mask, result, time.perf_counter() - t0)
            start = 1
        for k in range(start, planned + 1):
            if stop_after is not None and k > stop_after:
                logger.warning(f"[pipeline] Stopping after iteration {k - 1} of {planned}")
                self.set_status(STATUS_INTERRUPTED)
                return
            t0 = time.perf_counter()
            try:
                mask = magnitude_prune(params, mask, cfg.prune.zeta_iter, cfg.prune.scope, cfg.prune.rounding)
            except TerminalPruneError as e:
                logger.warning(f"[pipeline] {e}; ending the loop at iteration {k - 1}")
                break
            result = train(cfg.model, params, self.data.train, cfg.train, mask, cfg.seed, k)
            self.measure(k, params, mask, result, time.perf_counter() - t0)
        self.set_status(STATUS_COMPLETED)


def _run_dir(config: ExperimentConfig) -> Path:
    return Path(config.output_dir) if config.output_dir else runs_dir() / config.run_id


def _execute(run: _Run, params, mask, start: int, stop_after: int | None) -> RunRecord:
    started = time.perf_counter()
    try:
        run.loop(params, mask, start, stop_after)
    except NonFiniteError as e:
        logger.error(f"[pipeline] Run {run.manifest['run_id']} failed: {e}")
        run.save_tables()
        run.set_status(STATUS_FAILED, str(e))
    except Exception as e:
        logger.error(f"[pipeline] Run {run.manifest['run_id']} aborted: {e}")
        run.set_status(STATUS_FAILED, str(e))
        raise
    elapsed = time.perf_counter() - started
    run.manifest["elapsed_seconds"] = round(run.manifest.get("elapsed_seconds", 0.0) + elapsed, 1)
    run.save_manifest()
    logger.info(
        f"[pipeline] Done in {elapsed:.1f}s: {run.manifest['run_id']} {run.manifest['status']}, "
        f"{len(run.curve)} curve points, sdd={run.verdict.sdd}"
    )
    return RunRecord(run.paths.root, run.config, run.manifest, run.curve, run.verdict)


def run_experiment(config: ExperimentConfig, stop_after: int | None = None, overwrite: bool = False) -> RunRecord:
    """Run the whole detection loop for one configuration.

    ``stop_after`` ends the loop after that prune iteration, leaving the run
    ``interrupted`` so that ``resume`` can continue it.
    """
    paths = RunDirectory(_run_dir(config))
    if paths.manifest.exists() and not overwrite:
        raise RunStateError(f"{paths.root} already holds a run; use resume or overwrite")
    paths.root.mkdir(parents=True, exist_ok=True)
    logger.info(f"[pipeline] Starting run {config.run_id} in {paths.root}")

    data = prepare_data(config.data, config.noise, config.seed)
    data.noise.save(paths.flips)
    config.save(paths.config)

    planned = config.prune.planned_iterations()
    manifest = {
        "run_id": config.run_id,
        "config_hash": config.config_hash,
        "seed": config.seed,
        "created": datetime.now().isoformat(timespec="seconds"),
        "status": STATUS_RUNNING,
        "error": None,
        "planned_iterations": planned,
        "completed_iterations": -1,
        "normalization": {"mean": data.mean.tolist(), "std": data.std.tolist()},
        "noise": {
            "epsilon": data.noise.epsilon,
            "seed": data.noise.seed,
            "flips": str(paths.flips.relative_to(paths.root)),
            "flips_sha256": sha256_file(paths.flips),
            "count": len(data.noise),
        },
        "train_labels_hash": data.train_labels_hash,
        "init_checkpoint": str(paths.init_checkpoint.relative_to(paths.root)),
        "iterations": [],
        "verdict": None,
    }
    run = _Run(config, paths, data, manifest)
    run.save_manifest()

    params = init_params(config.model, config.seed)
    save_checkpoint(paths.init_checkpoint, params, PruneMask.full(params, prunable_names(params)),
                    {"run_id": config.run_id, "prune_iter": 0, "config_hash": config.config_hash, "init": True})
    return _execute(run, params, None, 0, stop_after)


def load_record(run_dir) -> RunRecord:
    paths = RunDirectory(run_dir)
    if not paths.manifest.exists():
        raise RunStateError(f"{paths.root}: no manifest.json")
    manifest = read_json(paths.manifest)
    config = ExperimentConfig.from_dict(read_json(paths.config))
    curve = curve_from_frame(read_metrics(paths.metrics)) if paths.metrics.exists() else []
    verdict = None
    if paths.verdict.exists():
        verdict = SDDVerdict(**read_json(paths.verdict))
    return RunRecord(paths.root, config, manifest, curve, verdict)


def resume(run_dir, stop_after: int | None = None) -> RunRecord:
    """Continue a run from its last completed prune iteration."""
    paths = RunDirectory(run_dir)
    record = load_record(paths.root)
    if record.status == STATUS_COMPLETED:
        logger.info(f"[pipeline] {record.run_id} is already complete")
        return record

    config, manifest = record.config, record.manifest
    if config.config_hash != manifest["config_hash"]:
        raise RunStateError(f"{paths.config}: config hash does not match the manifest")
    persisted = NoiseSpec.load(paths.flips, manifest["noise"]["epsilon"], manifest["noise"]["seed"])
    data = prepare_data(config.data, config.noise, config.seed, persisted=persisted)
    if data.train_labels_hash != manifest["train_labels_hash"]:
        raise RunStateError(f"{paths.flips}: training labels do not match the recorded hash")

    last = manifest["completed_iterations"]
    manifest["iterations"] = [it for it in manifest["iterations"] if it["prune_iter"] <= last]
    run = _Run(config, paths, data, manifest)
    run.curve = [pt for pt in record.curve if pt.prune_iter <= last]
    if paths.epochs.exists():
        run.epochs = [r for r in read_metrics(paths.epochs).to_dict("records") if r["prune_iter"] <= last]
        for r in run.epochs:
            r["prune_iter"], r["epoch"] = int(r["prune_iter"]), int(r["epoch"])
    if run.curve:
        run.verdict = detect_sdd_curve(run.curve, config.detect.delta, config.detect.smoothing_window)
    manifest["status"], manifest["error"] = STATUS_RUNNING, None
    run.save_manifest()

    if last < 0:
        ckpt = load_checkpoint(paths.init_checkpoint)
        logger.info(f"[pipeline] Resuming {record.run_id} from w_init")
        return _execute(run, ckpt.tensors(), None, 0, stop_after)

    ckpt_path = paths.checkpoint(last)
    if not ckpt_path.exists():
        raise CheckpointError(ckpt_path, "latest checkpoint is missing")
    ckpt = load_checkpoint(ckpt_path)
    if ckpt.mask is None:
        raise CheckpointError(ckpt_path, "checkpoint carries no mask")
    logger.info(f"[pipeline] Resuming {record.run_id} after iteration {last}")
    return _execute(run, ckpt.tensors(), ckpt.mask, last + 1, stop_after)


def initial_weights(run_dir) -> dict[str, np.ndarray]:
    """w_init of a run."""
    return load_checkpoint(RunDirectory(run_dir).init_checkpoint).params


def checkpoint_params(run_dir, k: int) -> dict[str, Tensor]:
    return load_checkpoint(RunDirectory(run_dir).checkpoint(k)).tensors()
