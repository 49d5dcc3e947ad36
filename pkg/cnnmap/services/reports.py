"""CSV exports for evaluation reports, experiment series and learning logs.

Floats are written with 9 significant digits; every file starts with a header row.
"""

import csv
import logging
from pathlib import Path
from typing import Iterable

from cnnmap.models import EvalReport, ExperimentSeries, InputKind, LearningLogEntry

logger = logging.getLogger(__name__)

SERIES_COLUMNS = ["k", "mean_pos_err_m", "std_pos_err_m", "mean_ang_err_deg", "param_count", "map_bytes"]
TRAJECTORY_COLUMNS = ["frame", "gt_x", "gt_y", "gt_z", "pred_x", "pred_y", "pred_z"]
FRAME_COLUMNS = ["frame", "pos_err_m", "ang_err_deg"]
LEARNING_LOG_COLUMNS = ["epoch", "train_loss", "val_pos_err_m"]
COMPARISON_COLUMNS = ["input", "frames", "mean_pos_err_m", "std_pos_err_m", "median_pos_err_m",
                      "mean_ang_err_deg", "median_ang_err_deg"]


def fmt(value) -> str:
    if isinstance(value, float):
        return f"{value:.9g}"
    return str(value)


def _write_rows(path: str | Path, header: list[str], rows: Iterable[Iterable]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(header)
        count = 0
        for row in rows:
            writer.writerow([fmt(v) for v in row])
            count += 1
    logger.debug("Wrote %s (%d rows)", path, count)
    return path


def write_series(series: ExperimentSeries, path: str | Path) -> Path:
    return _write_rows(path, SERIES_COLUMNS, (
        (e.k, e.report.mean_pos_err_m, e.report.std_pos_err_m, e.report.mean_ang_err_deg,
         e.param_count, e.map_bytes)
        for e in series.entries
    ))


def write_trajectory(report: EvalReport, path: str | Path) -> Path:
    return _write_rows(path, TRAJECTORY_COLUMNS, (
        (i, *gt, *pred)
        for i, (gt, pred) in enumerate(zip(report.true_positions, report.predicted_positions))
    ))


def write_report(report: EvalReport, path: str | Path) -> Path:
    return _write_rows(path, FRAME_COLUMNS, (
        (i, p, a) for i, (p, a) in enumerate(zip(report.position_errors, report.angular_errors))
    ))


def write_learning_log(entries: list[LearningLogEntry], path: str | Path) -> Path:
    return _write_rows(path, LEARNING_LOG_COLUMNS, ((e.epoch, e.train_loss, e.val_pos_err_m) for e in entries))


def write_comparison(reports: dict[InputKind, EvalReport], path: str | Path) -> Path:
    return _write_rows(path, COMPARISON_COLUMNS, (
        (kind.value, r.frame_count, r.mean_pos_err_m, r.std_pos_err_m, r.median_pos_err_m,
         r.mean_ang_err_deg, r.median_ang_err_deg)
        for kind, r in reports.items()
    ))


def seed_path(path: str | Path, seed: int) -> Path:
    """series.csv -> series-seed3.csv"""
    path = Path(path)
    return path.with_name(f"{path.stem}-seed{seed}{path.suffix}")
