"""
traces.py
~~~~~~~~~

CSV output: one row per iteration for a run, one row per run for a summary.
UTF-8, LF line endings, floats with 17 significant digits so that a trace
read back reproduces the recorded doubles exactly.
"""

from __future__ import annotations

import csv
import logging
from pathlib import Path
from typing import Iterable, Optional

from .engine import RunRecord, TraceRow
from .errors import TraceWriteError
from .experiment import SUMMARY_COLUMNS, SummaryRow

logger = logging.getLogger(__name__)

TRACE_COLUMNS: tuple[str, ...] = TraceRow._fields


def format_value(value) -> str:
    if value is None:
        return ""
    if isinstance(value, float):
        return format(value, ".17g")
    return str(value)


def _write_rows(path: Path, columns: Iterable[str], rows: Iterable[dict]) -> Path:
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        with path.open("w", encoding="utf-8", newline="") as fh:
            writer = csv.DictWriter(fh, fieldnames=list(columns), lineterminator="\n")
            writer.writeheader()
            for row in rows:
                writer.writerow({k: format_value(v) for k, v in row.items()})
    except OSError as exc:
        raise TraceWriteError(f"cannot write {path}: {exc}") from exc
    logger.debug("wrote %s", path)
    return path


def write_trace(path: Path, record: RunRecord) -> Path:
    return _write_rows(path, TRACE_COLUMNS, (row._asdict() for row in record.rows))


def read_trace(path: Path) -> list[TraceRow]:
    with Path(path).open(encoding="utf-8", newline="") as fh:
        reader = csv.DictReader(fh)
        if tuple(reader.fieldnames or ()) != TRACE_COLUMNS:
            raise ValueError(f"{path} is not a trace file (columns {reader.fieldnames})")
        return [
            TraceRow(
                int(r["iter_outer"]),
                int(r["iter_inner"]),
                float(r["f"]),
                float(r["grad_norm"]),
                float(r["step_dist"]),
                int(r["restarts"]),
            )
            for r in reader
        ]


def summary_path(trace_path: Path) -> Path:
    """Sibling file of a trace: ``run.csv`` → ``run.summary.csv``."""
    trace_path = Path(trace_path)
    return trace_path.with_name(f"{trace_path.stem}.summary.csv")


def write_summary(path: Path, rows: Iterable[SummaryRow]) -> Path:
    return _write_rows(path, SUMMARY_COLUMNS, (row.model_dump() for row in rows))


def read_summary(path: Path) -> list[dict[str, Optional[str]]]:
    with Path(path).open(encoding="utf-8", newline="") as fh:
        return [{k: (v if v != "" else None) for k, v in r.items()} for r in csv.DictReader(fh)]
