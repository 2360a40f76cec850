from dotenv import load_dotenv

from .cli import app as cli_app
from .config import (
    BHParams,
    GeneralConfig,
    JobSpec,
    SSEConfig,
    StrategyConfig,
    ToyConfig,
)
from .ensemble import EnsembleStats, run_ensemble, scaling_sweep
from .logger import logger
from .protocols import (
    TrajectoryRecord,
    run_continuous_trajectory,
    run_general_trajectory,
    run_toy_zfumes,
    run_trajectory,
)

load_dotenv()

__all__ = [
    "BHParams",
    "EnsembleStats",
    "GeneralConfig",
    "JobSpec",
    "SSEConfig",
    "StrategyConfig",
    "ToyConfig",
    "TrajectoryRecord",
    "cli_app",
    "logger",
    "run_continuous_trajectory",
    "run_ensemble",
    "run_general_trajectory",
    "run_toy_zfumes",
    "run_trajectory",
    "scaling_sweep",
]


def main() -> None:
    """Entry point for the CLI application."""
    cli_app()
