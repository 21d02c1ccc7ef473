from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import pandas as pd
from openpyxl.styles import Alignment, Font, PatternFill
from openpyxl.utils import get_column_letter

from detector import PhaseSegmentation, bump_magnitude, collapse_sparsity, segment_phases
from orchestrator.checkpoint import Checkpoint, load_checkpoint
from orchestrator.pipeline import STATUS_COMPLETED, RunRecord, load_record
from orchestrator.sweep import is_sweep_dir, load_sweep
from pruning import surviving_values
from utils import config, logger
from utils.errors import ContractError
from utils.io import atomic_write_json, atomic_write_text

HISTOGRAM_BINS = config.get("report", {}).get("histogram_bins", 60)
EXCEL_DEFAULT = bool(config.get("report", {}).get("excel", False))
COLLAPSE_FACTOR = float(config.get("detector", {}).get("collapse_factor", 1.5))

EXIT_OK = 0
EXIT_SDD = 2
EXIT_FAILED = 3


@dataclass
class Histogram:
    edges: np.ndarray
    counts: np.ndarray
    survivors: int
    mean: float
    variance: float

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame({
            "bin_left": self.edges[:-1],
            "bin_right": self.edges[1:],
            "count": self.counts,
        })

    def stats(self) -> dict:
        return {"survivors": self.survivors, "mean": self.mean, "variance": self.variance}


@dataclass
class Report:
    path: Path
    summary: str
    exit_code: int
    tables: dict[str, pd.DataFrame] = field(default_factory=dict)


def export_histogram(checkpoint, bins: int = HISTOGRAM_BINS, value_range: tuple[float, float] | None = None) -> Histogram:
    """Histogram of the surviving (unmasked) prunable weights of a checkpoint.

    Bins are uniform over ``value_range`` (default: survivor min/max). Mean
    and variance are population statistics in float64, variance two-pass.
    """
    ckpt = checkpoint if isinstance(checkpoint, Checkpoint) else load_checkpoint(Path(checkpoint))
    if ckpt.mask is None:
        raise ContractError("checkpoint has no mask; surviving weights are undefined")
    values = surviving_values(ckpt.params, ckpt.mask)
    if values.size == 0:
        raise ContractError("checkpoint has no surviving weights")

    counts, edges = np.histogram(values, bins=bins, range=value_range)
    mean = values.sum() / values.size
    variance = float(((values - mean) ** 2).sum() / values.size)
    return Histogram(edges, counts.astype(np.int64), int(values.size), float(mean), variance)


def _phase_rows(record: RunRecord, seg: PhaseSegmentation) -> list[dict]:
    rows = []
    for k in range(1, 5):
        idx = seg.phase(k)
        pts = [record.curve[i] for i in idx]
        rows.append({
            "phase": k,
            "start": idx.start,
            "stop": idx.stop,
            "sparsity_from": pts[0].sparsity if pts else None,
            "sparsity_to": pts[-1].sparsity if pts else None,
        })
    return rows


def summary_line(record: RunRecord, seg: PhaseSegmentation) -> str:
    verdict = record.verdict
    sdd = bool(verdict and verdict.sdd)
    parts = [f"{record.run_id}: status={record.status}", f"sdd={'yes' if sdd else 'no'}"]
    if sdd and verdict.trigger_sparsity is not None:
        parts.append(f"trigger_sparsity={verdict.trigger_sparsity:.4f}")
    bounds = []
    for row in _phase_rows(record, seg):
        if row["start"] == row["stop"]:
            bounds.append(f"P{row['phase']}=[]")
        else:
            bounds.append(f"P{row['phase']}=[{row['start']},{row['stop']}) "
                          f"zeta {row['sparsity_from']:.4f}-{row['sparsity_to']:.4f}")
    parts.append("phases: " + "; ".join(bounds))
    return " | ".join(parts)


def report_run(run_dir, excel: bool = EXCEL_DEFAULT) -> Report:
    """Write curve, phases, verdict and summary for one run; a failed run still gets its partial curve."""
    record = load_record(run_dir)
    out = Path(run_dir) / "report"
    delta = record.config.detect.delta
    seg = segment_phases(record.curve, delta)

    curve = record.metrics_frame()
    atomic_write_text(out / "curve.csv", curve.to_csv(index=False, lineterminator="\n"))
    atomic_write_json(out / "phases.json", {**seg.to_dict(), "delta": delta, "rows": _phase_rows(record, seg)})
    verdict = record.verdict.to_dict() if record.verdict else {"sdd": False, "trigger_index": None}
    chance = 1.0 / record.config.data.classes
    extras = {
        "status": record.status,
        "bump_magnitude": bump_magnitude([pt.val_loss for pt in record.curve]),
        "collapse_sparsity": collapse_sparsity(record.curve, chance, COLLAPSE_FACTOR),
    }
    atomic_write_json(out / "verdict.json", {**verdict, **extras})

    lines = [summary_line(record, seg)]
    if record.status != STATUS_COMPLETED:
        err = record.manifest.get("error")
        lines.append(f"run marked {record.status}" + (f": {err}" if err else "") + f"; {len(record.curve)} points")
    summary = "\n".join(lines)
    atomic_write_text(out / "summary.txt", summary + "\n")

    tables = {"curve": curve, "phases": pd.DataFrame(_phase_rows(record, seg))}
    if excel:
        export_excel(tables, out / "report.xlsx")

    if record.status != STATUS_COMPLETED:
        code = EXIT_FAILED
    elif record.verdict and record.verdict.sdd:
        code = EXIT_SDD
    else:
        code = EXIT_OK
    logger.info(f"[processor] Report written to {out}")
    return Report(out, summary, code, tables)


def report_sweep(sweep_dir, excel: bool = EXCEL_DEFAULT) -> Report:
    result = load_sweep(sweep_dir)
    out = Path(sweep_dir) / "report"
    lines = []
    for row in result.summary.to_dict("records"):
        flag = " (no l2)" if row["zero_lambda"] else ""
        lines.append(
            f"lambda={row['lambda']:g}{flag}: status={row['status']} sdd={row['sdd']} "
            f"bump={row['bump_magnitude']} collapse={row['collapse_sparsity']} points={row['points']}"
        )
    for cell in result.cells:
        if Path(cell["run_dir"], "manifest.json").exists():
            report_run(cell["run_dir"], excel=False)
    summary = "\n".join(lines)
    atomic_write_text(out / "summary.txt", summary + "\n")

    tables = {"surface": result.surface, "lambda_summary": result.summary}
    if excel:
        export_excel(tables, out / "report.xlsx")

    if result.failed:
        code = EXIT_FAILED
    elif bool(result.summary["sdd"].fillna(False).astype(bool).any()):
        code = EXIT_SDD
    else:
        code = EXIT_OK
    logger.info(f"[processor] Sweep report written to {out}")
    return Report(out, summary, code, tables)


def report(path, excel: bool = EXCEL_DEFAULT) -> Report:
    """Report a run directory or a sweep directory."""
    return report_sweep(path, excel) if is_sweep_dir(path) else report_run(path, excel)


def export_excel(tables: dict[str, pd.DataFrame], out_path: Path) -> Path:
    """Write each table to its own styled sheet."""
    out_path = Path(out_path)
    out_path.parent.mkdir(parents=True, exist_ok=True)

    with pd.ExcelWriter(out_path, engine="openpyxl") as writer:
        for sheet, df in tables.items():
            df.to_excel(writer, sheet_name=sheet[:31], index=False)
            ws = writer.sheets[sheet[:31]]

            header_fill = PatternFill(start_color="1F4E79", end_color="1F4E79", fill_type="solid")
            header_font = Font(color="FFFFFF", bold=True, size=11)
            for cell in ws[1]:
                cell.fill = header_fill
                cell.font = header_font
                cell.alignment = Alignment(horizontal="center")

            for col_idx, col_name in enumerate(df.columns, start=1):
                max_len = max(
                    len(str(col_name)),
                    df[col_name].astype(str).str.len().max() if len(df) > 0 else 0,
                )
                ws.column_dimensions[get_column_letter(col_idx)].width = min(max_len + 3, 40)

            ws.freeze_panes = "A2"

    logger.info(f"[processor] Excel exported: {out_path.name} ({len(tables)} sheets)")
    return out_path
