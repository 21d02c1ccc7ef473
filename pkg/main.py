"""SDD Lab CLI: sparse double descent detection for small Vision Transformers."""

import os
import sys
from pathlib import Path

import click
from rich.console import Console
from rich.table import Table

# Ensure project root is on sys.path
sys.path.insert(0, str(Path(__file__).resolve().parent))

from utils import config, logger, runs_dir
from utils.errors import (
    CheckpointError,
    ConfigError,
    FormatError,
    LabelIndexError,
    LabError,
    RunStateError,
)

console = Console()

EXIT_SDD = 2
EXIT_FAILED = 3
EXIT_INPUT = 4
THREAD_VARS = ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS", "NUMEXPR_NUM_THREADS")
INPUT_ERRORS = (ConfigError, FormatError, LabelIndexError, CheckpointError, RunStateError, FileNotFoundError)


def _abort(e: Exception) -> None:
    code = EXIT_INPUT if isinstance(e, INPUT_ERRORS) else EXIT_FAILED
    console.print(f"[bold red]{type(e).__name__}: {e}[/bold red]")
    sys.exit(code)


@click.group()
@click.option("--debug", is_flag=True, help="Enable verbose debug logging")
@click.option(
    "--deterministic/--no-deterministic",
    default=bool(config.get("runtime", {}).get("deterministic", True)),
    help="Pin BLAS/OpenMP pools to one thread",
)
def cli(debug, deterministic):
    """SDD Lab - train, prune and detect sparse double descent."""
    if debug:
        from utils.logger import set_level
        set_level("DEBUG")
        logger.info("Debug mode enabled")
    if deterministic:
        # must happen before numpy is first imported by a command
        for var in THREAD_VARS:
            os.environ[var] = "1"


def experiment_options(f):
    options = [
        click.option("--config", "config_path", type=click.Path(exists=True), default=None, help="Experiment JSON"),
        click.option("--preset", default=None, help="Preset name under presets/ (default: desk)"),
        click.option("--seed", type=int, default=None),
        click.option("--out", type=click.Path(), default=None, help="Output directory"),
        click.option("--epsilon", type=float, default=None, help="Symmetric label-noise fraction"),
        click.option("--zeta-iter", type=float, default=None, help="Fraction of survivors pruned per round"),
        click.option("--zeta-end", type=float, default=None, help="Target sparsity"),
        click.option("--delta", type=float, default=None, help="Detector tolerance"),
        click.option("--epochs", type=int, default=None, help="Epochs per training round"),
        click.option("--set", "overrides", multiple=True, help="section.key=value override (repeatable)"),
    ]
    for option in reversed(options):
        f = option(f)
    return f


def build_experiment(config_path, preset, seed, out, epsilon, zeta_iter, zeta_end, delta, epochs, overrides, l2=None):
    from orchestrator.experiment import apply_overrides, load_experiment, load_preset

    if config_path and preset:
        raise ConfigError("--config and --preset are mutually exclusive")
    exp = load_experiment(config_path) if config_path else load_preset(preset or "desk")
    flags = {
        "seed": seed, "noise.epsilon": epsilon, "train.l2": l2,
        "prune.zeta_iter": zeta_iter, "prune.zeta_end": zeta_end, "detect.delta": delta, "train.epochs": epochs,
    }
    items = [f"{k}={v}" for k, v in flags.items() if v is not None]
    exp = apply_overrides(exp, items + list(overrides))
    return exp.with_output_dir(out) if out else exp


def _print_record(record) -> None:
    table = Table(title=f"{record.run_id} ({record.status})")
    for col in ("iter", "sparsity", "train_acc", "val_acc", "val_loss"):
        table.add_column(col, justify="right")
    for pt in record.curve:
        table.add_row(str(pt.prune_iter), f"{pt.sparsity:.4f}", f"{pt.train_acc:.4f}",
                      f"{pt.val_acc:.4f}", f"{pt.val_loss:.4f}")
    console.print(table)
    verdict = record.verdict
    if verdict and verdict.sdd:
        console.print(f"[bold yellow]SDD detected[/bold yellow] at iteration {verdict.trigger_index} "
                      f"(sparsity {verdict.trigger_sparsity:.4f})")
    else:
        console.print("[green]No SDD detected[/green]")
    console.print(f"  Run dir: {record.run_dir}")


@cli.command()
@experiment_options
@click.option("--lambda", "l2", type=float, default=None, help="l2 weight")
@click.option("--stop-after", type=int, default=None, help="Stop after this prune iteration")
@click.option("--overwrite", is_flag=True, help="Replace an existing run directory")
def run(config_path, preset, seed, out, epsilon, zeta_iter, zeta_end, delta, epochs, overrides, l2, stop_after, overwrite):
    """Dense train, then prune/retrain/evaluate until the target sparsity."""
    from orchestrator.pipeline import STATUS_FAILED, run_experiment

    console.print("[bold]SDD Lab - Run[/bold]\n")
    try:
        exp = build_experiment(config_path, preset, seed, out, epsilon, zeta_iter, zeta_end, delta, epochs, overrides, l2)
        console.print(f"  {exp.run_id}: {exp.prune.planned_iterations()} prune iterations planned")
        record = run_experiment(exp, stop_after=stop_after, overwrite=overwrite)
    except LabError as e:
        _abort(e)
    _print_record(record)
    if record.status == STATUS_FAILED:
        sys.exit(EXIT_FAILED)


@cli.command()
@click.argument("run_dir", type=click.Path(exists=True, file_okay=False))
@click.option("--stop-after", type=int, default=None, help="Stop after this prune iteration")
def resume(run_dir, stop_after):
    """Continue a run from its last completed prune iteration."""
    from orchestrator.pipeline import STATUS_FAILED
    from orchestrator.pipeline import resume as resume_run

    console.print("[bold]SDD Lab - Resume[/bold]\n")
    try:
        record = resume_run(run_dir, stop_after=stop_after)
    except LabError as e:
        _abort(e)
    _print_record(record)
    if record.status == STATUS_FAILED:
        sys.exit(EXIT_FAILED)


@cli.command()
@experiment_options
@click.option("--lambdas", required=True, help="Comma-separated l2 weights, e.g. 0.03,1,3")
@click.option("--workers", type=int, default=None, help="Parallel cells (default: from config)")
def sweep(config_path, preset, seed, out, epsilon, zeta_iter, zeta_end, delta, epochs, overrides, lambdas, workers):
    """Run one experiment per l2 weight and tabulate the surface."""
    from orchestrator.sweep import sweep_lambda

    console.print("[bold]SDD Lab - Lambda Sweep[/bold]\n")
    try:
        values = [float(v) for v in lambdas.split(",") if v.strip()]
        exp = build_experiment(config_path, preset, seed, None, epsilon, zeta_iter, zeta_end, delta, epochs, overrides)
        result = sweep_lambda(exp, values, workers=workers, sweep_dir=out)
    except (LabError, ValueError) as e:
        _abort(e)

    table = Table(title=f"Sweep {result.sweep_dir.name}")
    for col in ("lambda", "status", "sdd", "bump", "collapse", "points"):
        table.add_column(col, justify="right")
    for row in result.summary.to_dict("records"):
        table.add_row(f"{row['lambda']:g}", str(row["status"]), str(row["sdd"]),
                      str(row["bump_magnitude"]), str(row["collapse_sparsity"]), str(row["points"]))
    console.print(table)
    console.print(f"  Surface: {result.sweep_dir / 'report' / 'surface.csv'}")
    if result.failed:
        sys.exit(EXIT_FAILED)


@cli.command()
@click.argument("csv_path", type=click.Path(exists=True, dir_okay=False))
@click.option("--column", default="val_acc", help="Performance column")
@click.option("--delta", type=float, default=None, help="Detector tolerance")
@click.option("--smoothing", type=int, default=None, help="Moving-average window")
def detect(csv_path, column, delta, smoothing):
    """Classify a performance curve from CSV. Exit 2 when SDD is detected."""
    import pandas as pd

    from detector import CurvePoint, detect_sdd_curve, segment_phases

    det_cfg = config.get("detector", {})
    delta = det_cfg.get("delta", 0.005) if delta is None else delta
    smoothing = det_cfg.get("smoothing_window", 1) if smoothing is None else smoothing
    df = pd.read_csv(csv_path)
    if column not in df.columns:
        _abort(FormatError(f"{csv_path}: no column {column!r} (have {', '.join(df.columns)})"))
    sparsity = df["sparsity"] if "sparsity" in df.columns else pd.Series(range(len(df)), dtype=float)
    curve = [CurvePoint(i, float(s), float(p), 0.0, 0.0, 0.0) for i, (s, p) in enumerate(zip(sparsity, df[column]))]

    verdict = detect_sdd_curve(curve, delta, smoothing)
    seg = segment_phases(curve, delta)
    console.print_json(data={"verdict": verdict.to_dict(), "phases": seg.to_dict()})
    sys.exit(EXIT_SDD if verdict.sdd else 0)


@cli.command()
@click.argument("checkpoint", type=click.Path(exists=True, dir_okay=False))
@click.option("--bins", type=int, default=None, help="Number of uniform bins")
@click.option("--range", "value_range", type=(float, float), default=None, help="Histogram range MIN MAX")
@click.option("--out", type=click.Path(), default=None, help="CSV output path")
def hist(checkpoint, bins, value_range, out):
    """Histogram and variance of the surviving weights of a checkpoint."""
    from processor.report_processor import HISTOGRAM_BINS, export_histogram
    from utils.io import atomic_write_text

    try:
        h = export_histogram(checkpoint, bins or HISTOGRAM_BINS, value_range)
    except LabError as e:
        _abort(e)
    out_path = Path(out) if out else Path(checkpoint).with_suffix(".hist.csv")
    atomic_write_text(out_path, h.to_frame().to_csv(index=False, lineterminator="\n"))
    console.print(f"  Survivors: {h.survivors}")
    console.print(f"  Mean:      {h.mean:.6g}")
    console.print(f"  Variance:  {h.variance:.6g}")
    console.print(f"  Histogram: {out_path}")


@cli.command(name="report")
@click.argument("path", type=click.Path(exists=True, file_okay=False))
@click.option("--excel/--no-excel", default=None, help="Also write report.xlsx")
def report_cmd(path, excel):
    """Summarize a run or sweep. Exit 2 if SDD-positive, 3 if a run failed."""
    from processor.report_processor import EXCEL_DEFAULT, report

    try:
        rep = report(path, EXCEL_DEFAULT if excel is None else excel)
    except LabError as e:
        _abort(e)
    console.print(rep.summary)
    console.print(f"\n  Artifacts: {rep.path}")
    sys.exit(rep.exit_code)


@cli.command()
@click.option("--dir", "root", type=click.Path(file_okay=False), default=None, help="Runs directory")
def status(root):
    """List runs with status and verdict."""
    from utils.io import read_json

    root = Path(root) if root else runs_dir()
    console.print(f"[bold]SDD Lab - Status[/bold] ({root})\n")
    manifests = sorted(root.glob("**/manifest.json")) if root.exists() else []
    if not manifests:
        console.print("  [dim]No runs yet[/dim]")
        return

    table = Table()
    for col in ("run", "status", "iterations", "sdd", "trigger sparsity", "updated"):
        table.add_column(col)
    for path in manifests:
        m = read_json(path)
        verdict = m.get("verdict") or {}
        trigger = verdict.get("trigger_sparsity")
        table.add_row(
            str(path.parent.relative_to(root)),
            m.get("status", "?"),
            f"{m.get('completed_iterations', -1)}/{m.get('planned_iterations', '?')}",
            "yes" if verdict.get("sdd") else "no",
            f"{trigger:.4f}" if trigger is not None else "-",
            m.get("updated", "-"),
        )
    console.print(table)


if __name__ == "__main__":
    cli()
