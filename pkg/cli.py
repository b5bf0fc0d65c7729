"""Typer-powered CLI for the adatriv benchmark harness (``bench``)."""

from __future__ import annotations

import logging
from pathlib import Path
from typing import Optional

import pytest
import typer
from rich.console import Console
from rich.logging import RichHandler
from rich.table import Table

from adatriv import config
from adatriv.bench import GRID_SUMMARY, run_experiment, run_grid
from adatriv.errors import AdatrivError, ConfigurationError, TraceWriteError
from adatriv.experiment import SummaryRow, load_config
from adatriv.problems import PROBLEMS, build_problem

EXIT_OK, EXIT_RUN_FAILED, EXIT_IO, EXIT_CONFIG = 0, 1, 2, 3

app = typer.Typer(
    name="bench",
    add_completion=False,
    help="adatriv – adaptive trivializations on SO(n), spheres and Rⁿ",
)
console = Console()
err_console = Console(stderr=True)


def _setup_logging(level: str) -> None:
    logging.basicConfig(
        level=level.upper(),
        format="%(message)s",
        datefmt="[%X]",
        handlers=[RichHandler(console=err_console, show_path=False)],
        force=True,
    )


@app.callback()
def main(
    log_level: str = typer.Option(config.LOG_LEVEL, "--log-level", help="Logging level."),
):
    _setup_logging(log_level)


def _fail(message: str, code: int) -> typer.Exit:
    typer.secho(message, fg="red", err=True)
    return typer.Exit(code)


def _summary_table(rows: list[SummaryRow]) -> Table:
    table = Table(title="summary")
    for col in ("problem", "algorithm", "k", "opt", "final f", "best f", "gap", "iters→1e-6", "restarts", "status"):
        table.add_column(col)
    for r in rows:
        table.add_row(
            r.problem,
            r.algorithm,
            r.k,
            r.optimizer,
            f"{r.final_f:.6g}",
            f"{r.best_f:.6g}",
            "" if r.gap is None else f"{r.gap:.3e}",
            "" if r.iters_to_gap is None else str(r.iters_to_gap),
            str(r.restarts),
            r.status,
        )
    return table


# ---------------------------------------------------------------------
@app.command()
def run(
    config_file: Path = typer.Argument(..., help="key=value experiment file"),
    algo: Optional[str] = typer.Option(None, "--algo", help="atriv | dtriv | rgd | rgd-momentum | rgd-full-history"),
    k: Optional[str] = typer.Option(None, "--k", help="Inner steps per trivialization change (integer or inf)."),
    opt: Optional[str] = typer.Option(None, "--opt", help="sgd | momentum | adagrad | rmsprop | adam"),
    lr: Optional[str] = typer.Option(None, "--lr", help="Learning rate, or 'theorem'."),
    iters: Optional[int] = typer.Option(None, "--iters"),
    seed: Optional[int] = typer.Option(None, "--seed"),
    n: Optional[int] = typer.Option(None, "--n"),
    problem: Optional[str] = typer.Option(None, "--problem"),
    out: Optional[str] = typer.Option(None, "--out", help="Trace CSV path (relative paths go under ADATRIV_OUTPUT_DIR)."),
    trivialization: Optional[str] = typer.Option(None, "--trivialization", help="exp | cayley (dtriv on SO(n) problems)."),
    retraction: Optional[str] = typer.Option(None, "--retraction", help="exp | cayley (rgd on SO(n) problems)."),
):
    """Run one experiment and write its trace and summary CSV."""
    overrides = {
        "algo": algo, "k": k, "opt": opt, "lr": lr, "iters": iters,
        "seed": seed, "n": n, "problem": problem, "out": out,
        "trivialization": trivialization, "retraction": retraction,
    }
    try:
        cfg = load_config(config_file, overrides)
    except ConfigurationError as exc:
        raise _fail(f"config error: {exc}", EXIT_CONFIG)
    except OSError as exc:
        raise _fail(f"cannot read config: {exc}", EXIT_IO)

    try:
        record, summary = run_experiment(cfg)
    except TraceWriteError as exc:
        raise _fail(str(exc), EXIT_IO)
    except ConfigurationError as exc:
        raise _fail(f"config error: {exc}", EXIT_CONFIG)
    except AdatrivError as exc:
        raise _fail(f"run failed: {exc}", EXIT_RUN_FAILED)

    console.print(_summary_table([summary]))
    if not record.ok:
        raise _fail(f"run aborted: {record.aborted}", EXIT_RUN_FAILED)
    typer.secho(f"Trace written to {cfg.output_path()}", fg="green")


# ---------------------------------------------------------------------
@app.command()
def grid(
    directory: Path = typer.Argument(..., help="Directory of *.cfg experiment files"),
    workers: int = typer.Option(config.GRID_WORKERS, "--workers", help="Parallel runs."),
):
    """Run every *.cfg in DIRECTORY; traces and grid_summary.csv land next to them."""
    if not directory.is_dir():
        raise _fail(f"not a directory: {directory}", EXIT_IO)
    files = sorted(directory.glob("*.cfg"))
    if not files:
        raise _fail(f"no *.cfg files in {directory}", EXIT_CONFIG)

    configs, names = [], []
    for path in files:
        try:
            configs.append(load_config(path))
            names.append(path.name)
        except ConfigurationError as exc:
            raise _fail(f"config error: {exc}", EXIT_CONFIG)
        except OSError as exc:
            raise _fail(f"cannot read config: {exc}", EXIT_IO)

    try:
        outcome = run_grid(configs, base_dir=directory, workers=workers, names=names)
    except TraceWriteError as exc:
        raise _fail(str(exc), EXIT_IO)

    console.print(_summary_table(outcome.rows))
    for name, message in outcome.failures:
        typer.secho(f"! {name}: {message}", fg="red", err=True)
    if not outcome.ok:
        raise typer.Exit(EXIT_RUN_FAILED)
    typer.secho(f"Grid summary written to {directory / GRID_SUMMARY}", fg="green")


# ---------------------------------------------------------------------
@app.command()
def selftest(
    pattern: Optional[str] = typer.Option(None, "-k", help="Only run tests matching this expression."),
):
    """Run the invariant and acceptance test suite."""
    args = [str(Path(__file__).resolve().parent), "-q"]
    if pattern:
        args += ["-k", pattern]
    raise typer.Exit(int(pytest.main(args)))


# ---------------------------------------------------------------------
@app.command()
def oracle(
    problem: str = typer.Argument(..., help=" | ".join(PROBLEMS)),
    n: int = typer.Option(config.DEFAULT_N, "--n"),
    seed: int = typer.Option(0, "--seed"),
):
    """Print the certified optimum of a generated problem."""
    try:
        built = build_problem(problem, n, seed)
    except ConfigurationError as exc:
        raise _fail(f"config error: {exc}", EXIT_CONFIG)
    f0 = built.objective(built.start)
    typer.echo(f"problem      {built.name} on {built.manifold.name}")
    typer.echo(f"f(start)     {f0:.17g}")
    if built.known_optimum is None:
        typer.secho("f*           not certified", fg="yellow")
    else:
        typer.echo(f"f*           {built.known_optimum:.17g}")
    if built.hessian_bound is not None:
        typer.echo(f"alpha        {built.hessian_bound:.17g}")


# ---------------------------------------------------------------------
if __name__ == "__main__":
    app()
