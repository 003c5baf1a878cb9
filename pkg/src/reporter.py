from __future__ import annotations

import csv
import json
import os
from dataclasses import asdict
from typing import TYPE_CHECKING, Optional, Sequence

from rich import box
from rich.console import Console
from rich.style import Style
from rich.table import Table
from rich.text import Text

from .errors import DataIOError
from .i18n import t
from .metrics import LocalizationReport, NoiseSweepReport, RecallReport, StepRecord, TrainingSummary

if TYPE_CHECKING:
    from .ablation import AblationReport

VERBOSITY_ENV = "XVIEW_VERBOSITY"
VERBOSITY_LEVELS = ("quiet", "normal", "debug")


def verbosity() -> str:
    level = os.environ.get(VERBOSITY_ENV, "normal").strip().lower()
    return level if level in VERBOSITY_LEVELS else "normal"


def is_debug() -> bool:
    return verbosity() == "debug"


console = Console(quiet=verbosity() == "quiet", highlight=False)


def refresh_verbosity() -> None:
    """Re-read XVIEW_VERBOSITY (the console is created at import time)."""
    console.quiet = verbosity() == "quiet"


# ---------------------------------------------------------------------------
# Colour helpers
# ---------------------------------------------------------------------------

def _recall_style(r: Optional[float]) -> Style:
    if r is None:
        return Style(color="white", dim=True)
    if r >= 0.8:
        return Style(color="green")
    if r >= 0.4:
        return Style(color="yellow")
    return Style(color="red")


def _fmt_pct(r: Optional[float]) -> str:
    if r is None:
        return t("na")
    return f"{r * 100:.2f}%"


def _fmt_bytes(n: int) -> str:
    return f"{n / 1e6:.1f} MB"


def _recall_cell(r: Optional[float]) -> Text:
    return Text(_fmt_pct(r), style=_recall_style(r))


# ---------------------------------------------------------------------------
# Tables
# ---------------------------------------------------------------------------

def print_recall_table(report: RecallReport) -> None:
    table = Table(
        title=t("table_recall_title"),
        box=box.DOUBLE_EDGE,
        header_style="bold cyan",
        title_style="bold white",
    )
    table.add_column(t("col_metric"), style="bold", min_width=10)
    table.add_column(t("col_k"), justify="right")
    table.add_column(t("col_recall"), justify="right", min_width=9)
    for label, k, value in report.ordered():
        table.add_row(label, str(k), _recall_cell(value))
    console.print()
    console.print(table)
    console.print(f"  {t('row_queries')}: {report.n_queries}   {t('row_database')}: {report.n_database}", style="dim")
    if report.mean_query_ms is not None:
        console.print(f"  {t('row_query_time')}: {report.mean_query_ms:.3f} ms", style="dim")


def print_localization_table(report: LocalizationReport, ks: Sequence[int] = (1, 5, 10)) -> None:
    table = Table(
        title=t("table_localization_title"),
        box=box.SIMPLE_HEAD,
        header_style="bold cyan",
        title_style="bold white",
    )
    table.add_column(t("col_k"), justify="right")
    table.add_column(t("col_recall"), justify="right", min_width=9)
    shown = sorted({report.n_top, *[k for k in ks if k <= len(report.curve)]})
    for k in shown:
        value = report.curve[k - 1] if k <= len(report.curve) else report.recall
        table.add_row(str(k), _recall_cell(value))
    console.print()
    console.print(table)
    console.print(f"  {t('row_radius')}: {report.radius_m:g} m   {t('row_queries')}: {report.n_queries}", style="dim")


def print_sweep_table(report: NoiseSweepReport) -> None:
    table = Table(
        title=t("table_sweep_title"),
        box=box.SIMPLE_HEAD,
        header_style="bold cyan",
        title_style="bold white",
    )
    table.add_column(t("col_level"), justify="right")
    ks = report.levels[0].recall.ks if report.levels else []
    for k in ks:
        table.add_column(f"r@{k}", justify="right")
    table.add_column("r@top1%", justify="right")
    for lvl in report.levels:
        cells = [_recall_cell(lvl.recall.recall_at.get(k)) for k in ks]
        table.add_row(f"{lvl.level_deg:g}", *cells, _recall_cell(lvl.recall.recall_top1percent))
    console.print()
    console.print(table)


def print_query_table(hits: Sequence[tuple[str, float]], positions: Optional[dict] = None,
                      elapsed_ms: Optional[float] = None) -> None:
    table = Table(
        title=t("table_query_title", k=len(hits)),
        box=box.SIMPLE_HEAD,
        header_style="bold cyan",
        title_style="bold white",
    )
    table.add_column(t("col_rank"), justify="right")
    table.add_column(t("col_id"), style="bold")
    table.add_column(t("col_distance"), justify="right")
    if positions:
        table.add_column(t("col_position"))
    for rank, (rec_id, dist) in enumerate(hits, start=1):
        row = [str(rank), rec_id, f"{dist:.6f}"]
        if positions:
            pos = positions.get(rec_id)
            row.append(f"{pos[0]:.6f}, {pos[1]:.6f}" if pos is not None else "-")
        table.add_row(*row)
    console.print()
    console.print(table)
    if elapsed_ms is not None:
        console.print(f"  {t('row_query_time')}: {elapsed_ms:.3f} ms", style="dim")


def print_training_summary(summary: TrainingSummary) -> None:
    table = Table(
        title=t("table_train_title"),
        box=box.DOUBLE_EDGE,
        header_style="bold cyan",
        title_style="bold white",
        show_header=False,
    )
    table.add_column(t("col_metric"), style="bold")
    table.add_column(t("col_value"), justify="right")
    table.add_row(t("row_steps"), str(summary.steps))
    for key, value in (("row_first_loss", summary.first_loss), ("row_last_loss", summary.last_loss)):
        table.add_row(t(key), t("na") if value is None else f"{value:.6f}")
    table.add_row(t("row_parameters"), f"{summary.parameters:,}")
    table.add_row(t("row_parameter_bytes"), _fmt_bytes(summary.parameter_bytes))
    console.print()
    console.print(table)


def _check_cell(passed: Optional[bool]) -> Text:
    if passed is None:
        return Text(t("check_skipped"), style=Style(color="white", dim=True))
    return Text(t("check_pass"), style="bold green") if passed else Text(t("check_fail"), style="bold red")


def print_ablation_table(report: AblationReport) -> None:
    table = Table(
        title=t("table_ablation_title"),
        box=box.DOUBLE_EDGE,
        header_style="bold cyan",
        title_style="bold white",
    )
    table.add_column(t("col_scheme"), style="bold")
    table.add_column(t("col_runs"), justify="right")
    for k in report.ks:
        table.add_column(f"r@{k}", justify="right")
    table.add_column("r@top1%", justify="right")
    for scheme in report.schemes():
        cells = [_recall_cell(report.median_recall(scheme, k)) for k in report.ks]
        table.add_row(
            scheme, str(len(report.runs_of(scheme))), *cells,
            _recall_cell(report.median_recall(scheme, None)),
        )
    console.print()
    console.print(table)

    checks = Table(title=t("table_checks_title"), box=box.SIMPLE_HEAD, header_style="bold cyan")
    checks.add_column(t("col_check"))
    checks.add_column(t("col_observed"), justify="right")
    checks.add_column(t("col_threshold"), justify="right")
    checks.add_column(t("col_result"), justify="center")
    for c in report.checks():
        observed = t("na") if c.observed is None else f"{c.observed * 100:+.2f}"
        checks.add_row(t(f"check_{c.name}"), observed, f"{c.threshold * 100:.0f}", _check_cell(c.passed))
    console.print(checks)


def print_step(rec: StepRecord) -> None:
    """Per-step line, shown only with XVIEW_VERBOSITY=debug."""
    if is_debug():
        console.print(t("step_line", step=rec.step, epoch=rec.epoch, loss=rec.loss), style="dim")


# ---------------------------------------------------------------------------
# Export
# ---------------------------------------------------------------------------

def _write_json(data, path: str) -> None:
    try:
        with open(path, "w", encoding="utf-8") as f:
            json.dump(data, f, ensure_ascii=False, indent=2, sort_keys=True)
    except OSError as e:
        raise DataIOError(f"cannot write {path}: {e}") from None
    console.print(t("exported_json", path=path), style="dim")


def _write_csv(header: list[str], rows, path: str) -> None:
    try:
        with open(path, "w", newline="", encoding="utf-8") as f:
            writer = csv.writer(f, lineterminator="\n")
            writer.writerow(header)
            writer.writerows(rows)
    except OSError as e:
        raise DataIOError(f"cannot write {path}: {e}") from None
    console.print(t("exported_csv", path=path), style="dim")


def recall_to_dict(report: RecallReport) -> dict:
    return {
        "n_database": report.n_database,
        "n_queries": report.n_queries,
        "k_top1percent": report.k_top1percent,
        "recall_at": {str(k): v for k, v in report.recall_at.items()},
        "recall_top1percent": report.recall_top1percent,
        "mean_query_ms": report.mean_query_ms,
    }


def export_eval(
    directory: str,
    recall: RecallReport,
    localization: Optional[LocalizationReport] = None,
) -> list[str]:
    """recall.json plus the recall@K and localisation curves as CSV."""
    os.makedirs(directory, exist_ok=True)
    data = {"recall": recall_to_dict(recall)}
    if localization is not None:
        data["localization"] = {
            "radius_m": localization.radius_m,
            "n_queries": localization.n_queries,
            "n_top": localization.n_top,
            "recall": localization.recall,
        }
    written = [os.path.join(directory, "recall.json"), os.path.join(directory, "recall_curve.csv")]
    _write_json(data, written[0])
    _write_csv(["k", "recall"], [(k, repr(v)) for k, v in enumerate(recall.curve, start=1)], written[1])
    if localization is not None:
        path = os.path.join(directory, "localization_curve.csv")
        _write_csv(["n_top", "recall"], [(k, repr(v)) for k, v in enumerate(localization.curve, start=1)], path)
        written.append(path)
    return written


def export_sweep(directory: str, report: NoiseSweepReport) -> list[str]:
    os.makedirs(directory, exist_ok=True)
    ks = report.levels[0].recall.ks if report.levels else []
    rows = [
        (f"{lvl.level_deg:g}", *[repr(lvl.recall.recall_at[k]) for k in ks], repr(lvl.recall.recall_top1percent))
        for lvl in report.levels
    ]
    csv_path = os.path.join(directory, "sweep.csv")
    json_path = os.path.join(directory, "sweep.json")
    _write_csv(["level_deg", *[f"r@{k}" for k in ks], "r@top1%"], rows, csv_path)
    _write_json(
        {"seed": report.seed,
         "levels": [{"level_deg": lvl.level_deg, **recall_to_dict(lvl.recall)} for lvl in report.levels]},
        json_path,
    )
    return [csv_path, json_path]


def export_training_summary(directory: str, summary: TrainingSummary) -> str:
    data = asdict(summary)
    data.pop("records")
    data["moving_average_50"] = summary.moving_average(50)
    path = os.path.join(directory, "train_summary.json")
    _write_json(data, path)
    return path


def export_ablation(directory: str, report: AblationReport) -> list[str]:
    """Per-seed rows, per-scheme medians and the sweep, as CSV, plus ablation.json with the checks."""
    os.makedirs(directory, exist_ok=True)
    ks = report.ks
    recall_header = [*[f"r@{k}" for k in ks], "r@top1%"]
    runs_rows = [
        (run.scheme, run.seed, *[repr(run.recall.recall_at[k]) for k in ks],
         repr(run.recall.recall_top1percent), repr(run.first_loss), repr(run.last_loss))
        for run in report.runs
    ]
    median_rows = [
        (scheme, len(report.runs_of(scheme)),
         *[repr(report.median_recall(scheme, k)) for k in ks], repr(report.median_recall(scheme, None)))
        for scheme in report.schemes()
    ]
    sweep_rows = [
        (run.scheme, run.seed, f"{lvl.level_deg:g}", repr(lvl.recall.curve[0]))
        for run in report.runs for lvl in run.sweep.levels
    ]
    sweep_rows += [
        (scheme, "median", f"{level:g}", repr(value))
        for scheme in report.schemes() for level, value in report.median_sweep(scheme)
    ]

    written = [os.path.join(directory, name) for name in (
        "ablation_runs.csv", "ablation_median.csv", "ablation_sweep.csv", "ablation.json",
    )]
    _write_csv(["scheme", "seed", *recall_header, "first_loss", "last_loss"], runs_rows, written[0])
    _write_csv(["scheme", "runs", *recall_header], median_rows, written[1])
    _write_csv(["scheme", "seed", "level_deg", "r"], sweep_rows, written[2])
    _write_json({
        "runs": [
            {"scheme": run.scheme, "seed": run.seed, "run_dir": run.run_dir,
             "first_loss": run.first_loss, "last_loss": run.last_loss,
             "recall": recall_to_dict(run.recall),
             "sweep": [{"level_deg": lvl.level_deg, **recall_to_dict(lvl.recall)} for lvl in run.sweep.levels]}
            for run in report.runs
        ],
        "median": {
            scheme: {
                "runs": len(report.runs_of(scheme)),
                "recall_at": {str(k): report.median_recall(scheme, k) for k in ks},
                "recall_top1percent": report.median_recall(scheme, None),
                "sweep": [{"level_deg": level, "recall": value} for level, value in report.median_sweep(scheme)],
            }
            for scheme in report.schemes()
        },
        "checks": [asdict(c) for c in report.checks()],
    }, written[3])
    return written
