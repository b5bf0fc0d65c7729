"""
bench.py
~~~~~~~~

Experiment runner behind ``python cli.py run|grid``.

    run_experiment(config)   build the problem, dispatch to the engine, write the
                             trace CSV and its sibling summary CSV
    run_grid(configs)        run many configs (optionally on a thread pool);
                             a failing run is logged and skipped
"""

from __future__ import annotations

import logging
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from . import config as settings
from .engine import (
    Problem,
    RunRecord,
    atriv_run,
    dtriv_run,
    rgd_momentum_full_history_run,
    rgd_momentum_transport_run,
    rgd_run,
    theorem_step_size,
)
from .errors import AdatrivError, ConfigurationError
from .experiment import GAP_TARGET, ExperimentConfig, SummaryRow
from .problems import build_problem
from .traces import summary_path, write_summary, write_trace

logger = logging.getLogger(__name__)

GRID_SUMMARY = "grid_summary.csv"


def resolve_lr(cfg: ExperimentConfig, problem: Problem) -> float:
    if cfg.lr == "theorem":
        return theorem_step_size(problem, cfg.r)
    return float(cfg.lr)


def execute(cfg: ExperimentConfig, problem: Problem, lr: float) -> RunRecord:
    """Dispatch one configuration to its engine procedure at step size ``lr``."""
    if cfg.algorithm == "atriv":
        return atriv_run(problem, cfg.rule(), cfg.k_value, lr, cfg.iters)
    if cfg.algorithm == "dtriv":
        return dtriv_run(problem, cfg.rule(), cfg.k_value, lr, cfg.iters, trivialization=cfg.trivialization)
    if cfg.algorithm == "rgd":
        return rgd_run(problem, lr, cfg.iters, retraction=cfg.retraction)
    if cfg.algorithm == "rgd-momentum":
        return rgd_momentum_transport_run(problem, lr, cfg.momentum(), cfg.iters)
    if cfg.algorithm == "rgd-full-history":
        return rgd_momentum_full_history_run(problem, lr, cfg.momentum(), cfg.iters)
    raise ConfigurationError(f"unknown algorithm {cfg.algorithm!r}")


def summarize(
    cfg: ExperimentConfig, problem: Problem, record: RunRecord, lr: float, wall_time: float
) -> SummaryRow:
    f_star = problem.known_optimum
    gap = best_gap = None
    iters_to_gap = None
    if f_star is not None:
        gap = record.final_f - f_star
        best_gap = record.best_f - f_star
        hits = np.nonzero(record.f_values - f_star <= GAP_TARGET)[0]
        if hits.size:
            iters_to_gap = int(hits[0]) + 1
    return SummaryRow(
        problem=cfg.problem,
        n=cfg.n,
        algorithm=cfg.method,
        k=cfg.k_label if cfg.algorithm in ("atriv", "dtriv") else "",
        optimizer=cfg.optimizer if cfg.algorithm in ("atriv", "dtriv") else "",
        lr=lr,
        iters=cfg.iters,
        seed=cfg.seed,
        status="ok" if record.ok else "aborted",
        final_f=record.final_f,
        best_f=record.best_f,
        known_optimum=f_star,
        gap=gap,
        best_gap=best_gap,
        iters_to_gap=iters_to_gap,
        restarts=record.restarts,
        wall_time=wall_time,
        message=record.aborted or "",
    )


def run_experiment(
    cfg: ExperimentConfig, base_dir: Optional[Path] = None
) -> tuple[RunRecord, SummaryRow]:
    """
    Run one configuration and write ``<out>`` plus ``<out stem>.summary.csv``.

    Raises TraceWriteError when the files cannot be written. An aborted run
    still produces both files; its summary status is ``aborted``.
    """
    problem = build_problem(cfg.problem, cfg.n, cfg.seed)
    lr = resolve_lr(cfg, problem)
    started = time.perf_counter()
    record = execute(cfg, problem, lr)
    elapsed = time.perf_counter() - started

    summary = summarize(cfg, problem, record, lr, elapsed)
    trace_file = cfg.output_path(base_dir)
    write_trace(trace_file, record)
    write_summary(summary_path(trace_file), [summary])
    logger.info(
        "%s on %s(n=%d): %d iterations, final f %.6g, restarts %d, %.2fs",
        cfg.label, cfg.problem, cfg.n, record.iterations, record.final_f, record.restarts, elapsed,
    )
    return record, summary


@dataclass
class GridOutcome:
    rows: list[SummaryRow] = field(default_factory=list)
    failures: list[tuple[str, str]] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.failures and all(row.status == "ok" for row in self.rows)


def run_grid(
    configs: Sequence[ExperimentConfig],
    base_dir: Optional[Path] = None,
    workers: int = settings.GRID_WORKERS,
    names: Optional[Sequence[str]] = None,
) -> GridOutcome:
    """
    Run every config; rows come back sorted by (problem, algorithm, K).

    Runs share nothing, so ``workers > 1`` runs them on a thread pool. When
    ``base_dir`` is given the grid summary is written there as well.
    """
    if not configs:
        raise ConfigurationError("grid is empty")
    names = list(names) if names is not None else [cfg.label for cfg in configs]

    def _one(cfg: ExperimentConfig) -> SummaryRow:
        return run_experiment(cfg, base_dir)[1]

    outcome = GridOutcome()
    with ThreadPoolExecutor(max_workers=max(1, workers)) as pool:
        futures = [pool.submit(_one, cfg) for cfg in configs]
        for name, future in zip(names, futures):
            try:
                outcome.rows.append(future.result())
            except (AdatrivError, OSError) as exc:
                logger.error("grid run %s failed: %s", name, exc)
                outcome.failures.append((name, str(exc)))
                continue

    outcome.rows.sort(key=lambda row: row.sort_key)
    if base_dir is not None:
        write_summary(Path(base_dir) / GRID_SUMMARY, outcome.rows)
    return outcome

