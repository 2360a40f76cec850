"""
CLI interface for zfumes using Typer.

Every subcommand layers its flags over an optional ``--config`` key=value file
over the model defaults, runs to completion, and only then writes its table.
Exit codes: 0 success, 2 invalid input, 3 runtime, numeric or I/O failure.
"""

from pathlib import Path
from typing import Any, Callable, Optional

import typer
from dotenv import load_dotenv
from pydantic import ValidationError

from .config import Distribution, JobSpec, OutputFormat, Protocol, load_config_file
from .data.tables import (
    formula_frame,
    histogram_frame,
    toy_histogram_frame,
    write_table,
)
from .ensemble import (
    general_sweep,
    ramp_sweep,
    run_ensemble,
    scaling_sweep,
    toy_sweep,
    trajectory_rng,
)
from .errors import DimensionOverflowError
from .logger import logger
from .protocols.factory import create_runner

load_dotenv()

app = typer.Typer(
    name="zfumes",
    help="Measurement-based Mott state preparation: trajectories, ensembles and scaling laws",
    add_completion=False,
)

EXIT_INVALID = 2
EXIT_FAILURE = 3

# shared option declarations
CONFIG = typer.Option(None, "--config", "-c", help="key=value file with default options")
SITES = typer.Option(None, "--sites", "-L", help="Number of lattice sites (N = L)", min=1)
STRATEGY = typer.Option(None, "--strategy", help="Protocol: fumes or zfumes")
TRAJECTORIES = typer.Option(None, "--trajectories", "-n", help="Number of trajectories", min=1)
SEED = typer.Option(None, "--seed", help="Base seed of the trajectory streams", min=0)
WORKERS = typer.Option(None, "--workers", "-w", help="Worker processes (default $ZFUMES_WORKERS or 1)", min=1)
THRESHOLD = typer.Option(None, "--threshold", help="Relative peak threshold in (0, 1]")
MAX_TIME = typer.Option(None, "--max-time", help="Protocol time limit")
GRID_STEP = typer.Option(None, "--grid-step", help="Spacing of the fidelity grid")
SWEEP = typer.Option(None, "--sweep", help="Comma-separated sizes, e.g. 3,4,5,6,7")
OUT = typer.Option(None, "--out", "-o", help="Output file (stdout when omitted)")
FORMAT = typer.Option(None, "--format", "-f", help="Output format: csv or json")


def _guarded(action: Callable[[], None]) -> None:
    """Run ``action`` and map failures to exit codes with a one-line diagnostic."""
    try:
        action()
    except ValidationError as e:
        details = "; ".join(
            f"{'.'.join(str(part) for part in error['loc'])}: {error['msg']}" for error in e.errors()
        )
        typer.echo(f"❌ Invalid options: {details}", err=True)
        raise typer.Exit(EXIT_INVALID)
    except (ValueError, DimensionOverflowError) as e:
        typer.echo(f"❌ Invalid input: {e}", err=True)
        raise typer.Exit(EXIT_INVALID)
    except (RuntimeError, ArithmeticError, OSError) as e:
        logger.exception("Run failed")
        typer.echo(f"❌ Run failed: {e}", err=True)
        raise typer.Exit(EXIT_FAILURE)


def _job(subcommand: str, config: Optional[Path], options: dict[str, Any]) -> JobSpec:
    merged: dict[str, Any] = load_config_file(config) if config else {}
    merged.update({key: value for key, value in options.items() if value is not None})
    return JobSpec.from_options(subcommand, merged)


def _emit(result, job: JobSpec) -> None:
    text = write_table(result, job.out, job.format)
    if job.out is None:
        typer.echo(text, nl=False)
    else:
        typer.echo(f"📄 Wrote {job.out}", err=True)


@app.command("bh-projective")
def bh_projective(
    sites: Optional[int] = SITES,
    strategy: Optional[Protocol] = STRATEGY,
    trajectories: Optional[int] = TRAJECTORIES,
    seed: Optional[int] = SEED,
    tunneling: Optional[float] = typer.Option(None, "--tunneling", "-J", help="Tunneling rate J"),
    interaction: Optional[float] = typer.Option(None, "--interaction", "-U", help="On-site U during free evolution"),
    threshold: Optional[float] = THRESHOLD,
    scan_step: Optional[float] = typer.Option(None, "--scan-step", help="Peak-scan resolution"),
    horizon: Optional[float] = typer.Option(None, "--horizon", help="Peak-scan horizon"),
    max_time: Optional[float] = MAX_TIME,
    grid_step: Optional[float] = GRID_STEP,
    sweep: Optional[str] = SWEEP,
    histogram: Optional[bool] = typer.Option(
        None, "--histogram/--no-histogram", help="Write per-site lock frequencies instead of the curve"
    ),
    workers: Optional[int] = WORKERS,
    out: Optional[Path] = OUT,
    format: Optional[OutputFormat] = FORMAT,
    config: Optional[Path] = CONFIG,
):
    """
    FUMES / Z-FUMES with projective measurements on the Bose-Hubbard chain.

    Example:
        zfumes bh-projective --sites 7 --strategy zfumes --trajectories 1000 --seed 1
        zfumes bh-projective --strategy fumes --sweep 3,4,5 --out scaling.csv
    """
    options = dict(locals())
    config = options.pop("config")

    def action():
        job = _job("bh-projective", config, options)
        if job.sweep:
            _emit(scaling_sweep(job, job.sweep), job)
            return
        stats = run_ensemble(job)
        _emit(histogram_frame(stats) if job.histogram else stats, job)

    _guarded(action)


@app.command("bh-continuous")
def bh_continuous(
    sites: Optional[int] = SITES,
    gamma: Optional[float] = typer.Option(None, "--gamma", help="Measurement strength per site (units of J_d)"),
    gamma_lock: Optional[float] = typer.Option(None, "--gamma-lock", help="Zeno-lock strength"),
    j_d: Optional[float] = typer.Option(None, "--j-d", help="Tunneling J_d during free evolution"),
    dt: Optional[float] = typer.Option(None, "--dt", help="Integrator step"),
    purity_cut: Optional[float] = typer.Option(None, "--purity-cut", help="Window closes at population 1 - cut"),
    max_window: Optional[float] = typer.Option(None, "--max-window", help="Longest measurement window"),
    ideal_lock: Optional[bool] = typer.Option(
        None, "--ideal-lock/--finite-lock", help="Exact projections or gamma_lock monitoring"
    ),
    trajectories: Optional[int] = TRAJECTORIES,
    seed: Optional[int] = SEED,
    threshold: Optional[float] = THRESHOLD,
    max_time: Optional[float] = MAX_TIME,
    grid_step: Optional[float] = GRID_STEP,
    sweep: Optional[str] = SWEEP,
    record: Optional[Path] = typer.Option(None, "--record", help="CSV dump of trajectory 0's currents"),
    record_stride: Optional[int] = typer.Option(None, "--record-stride", help="Keep every n-th record sample", min=0),
    workers: Optional[int] = WORKERS,
    out: Optional[Path] = OUT,
    format: Optional[OutputFormat] = FORMAT,
    config: Optional[Path] = CONFIG,
):
    """
    Z-FUMES with continuous homodyne measurement windows.

    Example:
        zfumes bh-continuous --sites 5 --gamma 0.5 --finite-lock --trajectories 1000
    """
    options = dict(locals())
    config = options.pop("config")

    def action():
        job = _job("bh-continuous", config, options)
        if job.sweep:
            _emit(scaling_sweep(job, job.sweep), job)
            return
        stats = run_ensemble(job)
        trajectory = None
        if job.record is not None:
            stride = job.sse.record_stride or 10
            recorded = job.model_copy(
                update={"sse": job.sse.model_copy(update={"record_stride": stride})}
            )
            trajectory = create_runner(recorded)(trajectory_rng(job.base_seed, 0))
        _emit(stats, job)
        if trajectory is not None:
            write_table(trajectory.homodyne, job.record, OutputFormat.CSV)
            typer.echo(f"📄 Wrote {job.record}", err=True)

    _guarded(action)


@app.command("bh-ramp")
def bh_ramp(
    sites: Optional[int] = SITES,
    tunneling: Optional[float] = typer.Option(None, "--tunneling", "-J", help="Tunneling rate J"),
    ramp_times: Optional[str] = typer.Option(None, "--ramp-times", help="Comma-separated ramp durations"),
    u_final: Optional[float] = typer.Option(None, "--u-final", help="Final U/J of the ramp"),
    ramp_steps: Optional[int] = typer.Option(None, "--ramp-steps", help="Constant-U slices", min=1),
    out: Optional[Path] = OUT,
    format: Optional[OutputFormat] = FORMAT,
    config: Optional[Path] = CONFIG,
):
    """
    Linear-ramp baseline: final Mott fidelity against ramp duration.
    """
    options = dict(locals())
    config = options.pop("config")

    def action():
        job = _job("bh-ramp", config, options)
        _emit(ramp_sweep(job), job)

    _guarded(action)


@app.command("toy")
def toy(
    sites: Optional[int] = typer.Option(None, "--sites", "-L", help="Toy lattice size", min=1),
    strategy: Optional[Protocol] = STRATEGY,
    distribution: Optional[Distribution] = typer.Option(
        None, "--distribution", help="multinomial or uniform reshuffling"
    ),
    trajectories: Optional[int] = TRAJECTORIES,
    seed: Optional[int] = SEED,
    sweep: Optional[str] = SWEEP,
    histogram: Optional[bool] = typer.Option(
        None, "--histogram/--no-histogram", help="Per-site lock frequency of single draws"
    ),
    workers: Optional[int] = WORKERS,
    out: Optional[Path] = OUT,
    format: Optional[OutputFormat] = FORMAT,
    config: Optional[Path] = CONFIG,
):
    """
    Reshuffling toy model: measurement counts against the closed forms.

    Example:
        zfumes toy --sites 100 --trajectories 1000
    """
    options = dict(locals())
    config = options.pop("config")

    def action():
        job = _job("toy", config, options)
        if job.histogram:
            rng = trajectory_rng(job.base_seed, 0)
            _emit(toy_histogram_frame(job.toy.L, job.toy.distribution, job.n_traj, rng), job)
            return
        sizes = job.sweep or [job.toy.L]
        rows = toy_sweep(job.toy, job.strategy.protocol, sizes, job.n_traj, job.base_seed, job.workers)
        _emit(rows, job)

    _guarded(action)


@app.command("random-ham")
def random_ham(
    outcomes: Optional[int] = typer.Option(None, "--outcomes", "-B", help="Outcomes per observable", min=2),
    observables: Optional[int] = typer.Option(None, "--observables", help="Number of observables L", min=1),
    strategy: Optional[Protocol] = STRATEGY,
    epsilon_o: Optional[float] = typer.Option(None, "--epsilon-o", help="Coupling threshold for a lock"),
    coupling_horizon: Optional[float] = typer.Option(None, "--coupling-horizon", help="Coupling-check horizon"),
    trajectories: Optional[int] = TRAJECTORIES,
    seed: Optional[int] = SEED,
    threshold: Optional[float] = THRESHOLD,
    horizon: Optional[float] = typer.Option(None, "--horizon", help="Peak-scan horizon"),
    max_time: Optional[float] = MAX_TIME,
    sweep: Optional[str] = SWEEP,
    workers: Optional[int] = WORKERS,
    out: Optional[Path] = OUT,
    format: Optional[OutputFormat] = FORMAT,
    config: Optional[Path] = CONFIG,
):
    """
    State transfer on GUE Hamiltonians; one Hamiltonian per trajectory.

    Example:
        zfumes random-ham --outcomes 2 --sweep 3,4,5,6,7 --strategy fumes --trajectories 200
    """
    options = dict(locals())
    config = options.pop("config")

    def action():
        job = _job("random-ham", config, options)
        _emit(general_sweep(job, job.sweep or [job.general.observables]), job)

    _guarded(action)


@app.command("formulas")
def formulas(
    sites: int = typer.Option(7, "--sites", "-L", help="Number of sites / observables", min=1),
    outcomes: int = typer.Option(2, "--outcomes", "-B", help="Outcomes per observable", min=2),
    out: Optional[Path] = OUT,
    format: Optional[OutputFormat] = FORMAT,
):
    """
    Closed-form measurement-count estimates for given L and B.
    """

    def action():
        frame = formula_frame(sites, outcomes)
        if format is None and out is None:
            typer.echo(frame.to_markdown(index=False, floatfmt=".6g"))
            return
        text = write_table(frame, out, format or OutputFormat.CSV)
        if out is None:
            typer.echo(text, nl=False)

    _guarded(action)


if __name__ == "__main__":
    app()
