"""Configuration models for zfumes.

Every configurable knob lives on a frozen pydantic model with a documented default.
``JobSpec.from_options`` assembles a job from a flat option mapping so the CLI can
layer flags over a key=value config file over these defaults.
"""

import math
import os
from enum import StrEnum
from pathlib import Path
from typing import Any, Mapping, Optional

from dotenv import dotenv_values, load_dotenv
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from .errors import ConfigurationError

load_dotenv()

# Largest L and N accepted by the Fock basis enumeration
MAX_SITES = 12
MAX_PARTICLES = 12
# Largest B**L accepted by the random-Hamiltonian setting
MAX_GENERAL_DIM = 4096


class Protocol(StrEnum):
    FUMES = "fumes"
    ZFUMES = "zfumes"


class Distribution(StrEnum):
    MULTINOMIAL = "multinomial"
    UNIFORM = "uniform"


class OutputFormat(StrEnum):
    CSV = "csv"
    JSON = "json"


class _Frozen(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")


class BHParams(_Frozen):
    """Bose-Hubbard chain parameters (hbar = 1, energies in units of J)."""

    L: int = Field(7, ge=1, description="number of sites")
    N: int = Field(7, ge=0, description="number of particles")
    J: float = Field(1.0, description="tunneling rate")
    U: float = Field(0.0, description="on-site interaction during free evolution")

    @field_validator("J", "U")
    @classmethod
    def _finite(cls, value: float) -> float:
        if not math.isfinite(value):
            raise ValueError("J and U must be finite")
        return value

    @property
    def unit_filling(self) -> bool:
        return self.L == self.N

    def sublattice(self, sites: int) -> "BHParams":
        """Parameters of a unit-filled sublattice with the same couplings."""
        return self.model_copy(update={"L": sites, "N": sites})


class StrategyConfig(_Frozen):
    """Peak-timed measurement strategy (times in units of 1/J)."""

    protocol: Protocol = Protocol.ZFUMES
    peak_threshold: float = Field(0.9, gt=0.0, le=1.0)
    scan_step: float = Field(0.01, gt=0.0)
    horizon: float = Field(10.0, gt=0.0)
    max_time: float = Field(100.0, gt=0.0)
    convergence_fidelity: float = Field(0.99, gt=0.0, le=1.0)
    grid_step: float = Field(0.1, gt=0.0)
    max_measurements: int = Field(100_000, ge=1)

    @model_validator(mode="after")
    def _ordered_times(self) -> "StrategyConfig":
        if not (self.scan_step < self.horizon <= self.max_time):
            raise ValueError("require 0 < scan_step < horizon <= max_time")
        return self


class SSEConfig(_Frozen):
    """Continuous homodyne monitoring (rates in units of J_d, times in 1/J_d)."""

    gamma: float = Field(0.5, ge=0.0, description="measurement strength per site")
    gamma_lock: float = Field(1000.0, gt=0.0, description="Zeno-lock strength")
    j_d: float = Field(1.0, gt=0.0, description="dynamical energy scale")
    dt: Optional[float] = Field(None, gt=0.0, description="integrator step")
    purity_cut: float = Field(1e-3, gt=0.0, lt=1.0)
    max_window: float = Field(50.0, gt=0.0)
    ideal_lock: bool = Field(True, description="enforce locks as exact projections")
    record_stride: int = Field(0, ge=0, description="keep every n-th record sample, 0 = none")

    @model_validator(mode="after")
    def _resolve_step(self) -> "SSEConfig":
        if self.dt is None:
            if self.ideal_lock:
                step = 1e-3 if self.gamma <= 10.0 else 0.1 / self.gamma
            else:
                step = 1e-5
            object.__setattr__(self, "dt", step)
        rates = [self.gamma] if self.ideal_lock else [self.gamma, self.gamma_lock]
        fastest = max(rates)
        if fastest > 0 and self.dt > 0.1 / fastest * (1 + 1e-12):
            raise ValueError(f"dt={self.dt} exceeds 0.1/max rate = {0.1 / fastest}")
        return self


class ToyConfig(_Frozen):
    L: int = Field(7, ge=1)
    distribution: Distribution = Distribution.MULTINOMIAL
    max_measurements: int = Field(100_000, ge=1)


class GeneralConfig(_Frozen):
    """Random-Hamiltonian setting with L observables of B outcomes each."""

    outcomes: int = Field(2, ge=2, description="B, outcomes per observable")
    observables: int = Field(3, ge=1, description="L, number of observables")
    epsilon_o: float = Field(1e-3, ge=0.0, le=1.0)
    coupling_horizon: float = Field(20.0, gt=0.0)
    max_measurements: int = Field(100_000, ge=1)

    @model_validator(mode="after")
    def _dimension_cap(self) -> "GeneralConfig":
        if self.outcomes**self.observables > MAX_GENERAL_DIM:
            raise ValueError(
                f"B**L = {self.outcomes ** self.observables} exceeds cap {MAX_GENERAL_DIM}"
            )
        return self

    @property
    def dimension(self) -> int:
        return self.outcomes**self.observables


def default_workers() -> int:
    """Worker count from ``ZFUMES_WORKERS``, else 1."""
    raw = os.getenv("ZFUMES_WORKERS", "1")
    try:
        return max(1, int(raw))
    except ValueError as e:
        raise ConfigurationError(f"ZFUMES_WORKERS must be an integer, got {raw!r}") from e


class JobSpec(_Frozen):
    """A fully validated experiment request."""

    subcommand: str
    bh: BHParams = BHParams()
    strategy: StrategyConfig = StrategyConfig()
    sse: SSEConfig = SSEConfig()
    toy: ToyConfig = ToyConfig()
    general: GeneralConfig = GeneralConfig()
    n_traj: int = Field(100, ge=1)
    base_seed: int = Field(0, ge=0)
    workers: int = Field(default_factory=default_workers, ge=1)
    out: Optional[Path] = None
    format: OutputFormat = OutputFormat.CSV
    sweep: Optional[list[int]] = None
    ramp_times: list[float] = [1.0, 5.0, 10.0, 20.0, 50.0]
    u_final: float = 30.0
    ramp_steps: int = Field(200, ge=1)
    histogram: bool = False
    record: Optional[Path] = None

    @field_validator("sweep", "ramp_times", mode="before")
    @classmethod
    def _split_lists(cls, value: Any) -> Any:
        if isinstance(value, str):
            return [item.strip() for item in value.split(",") if item.strip()]
        return value

    @classmethod
    def from_options(cls, subcommand: str, options: Mapping[str, Any]) -> "JobSpec":
        """Build a JobSpec from a flat option mapping (see ``OPTION_FIELDS``)."""
        sections: dict[str, dict[str, Any]] = {}
        top: dict[str, Any] = {"subcommand": subcommand}
        for key, value in options.items():
            if value is None:
                continue
            name = key.strip().lower().replace("-", "_")
            if name not in OPTION_FIELDS:
                raise ConfigurationError(f"unknown option {key!r}")
            section, field = OPTION_FIELDS[name]
            if section is None:
                top[field] = value
            else:
                sections.setdefault(section, {})[field] = value

        if "sites" in options and options["sites"] is not None and "N" not in sections.get("bh", {}):
            sections.setdefault("bh", {})["N"] = sections["bh"]["L"]
        if "toy" not in sections or "L" not in sections["toy"]:
            if "bh" in sections and "L" in sections["bh"]:
                sections.setdefault("toy", {})["L"] = sections["bh"]["L"]

        models = {
            "bh": BHParams,
            "strategy": StrategyConfig,
            "sse": SSEConfig,
            "toy": ToyConfig,
            "general": GeneralConfig,
        }
        for section, values in sections.items():
            top[section] = models[section](**values)
        return cls(**top)


# flat option name -> (section, field); section None means a JobSpec field
OPTION_FIELDS: dict[str, tuple[Optional[str], str]] = {
    "sites": ("bh", "L"),
    "particles": ("bh", "N"),
    "tunneling": ("bh", "J"),
    "interaction": ("bh", "U"),
    "strategy": ("strategy", "protocol"),
    "threshold": ("strategy", "peak_threshold"),
    "scan_step": ("strategy", "scan_step"),
    "horizon": ("strategy", "horizon"),
    "max_time": ("strategy", "max_time"),
    "grid_step": ("strategy", "grid_step"),
    "max_measurements": ("strategy", "max_measurements"),
    "gamma": ("sse", "gamma"),
    "gamma_lock": ("sse", "gamma_lock"),
    "j_d": ("sse", "j_d"),
    "dt": ("sse", "dt"),
    "purity_cut": ("sse", "purity_cut"),
    "max_window": ("sse", "max_window"),
    "ideal_lock": ("sse", "ideal_lock"),
    "record_stride": ("sse", "record_stride"),
    "distribution": ("toy", "distribution"),
    "toy_sites": ("toy", "L"),
    "outcomes": ("general", "outcomes"),
    "observables": ("general", "observables"),
    "epsilon_o": ("general", "epsilon_o"),
    "coupling_horizon": ("general", "coupling_horizon"),
    "trajectories": (None, "n_traj"),
    "seed": (None, "base_seed"),
    "workers": (None, "workers"),
    "out": (None, "out"),
    "format": (None, "format"),
    "sweep": (None, "sweep"),
    "ramp_times": (None, "ramp_times"),
    "u_final": (None, "u_final"),
    "ramp_steps": (None, "ramp_steps"),
    "histogram": (None, "histogram"),
    "record": (None, "record"),
}


def load_config_file(path: Path) -> dict[str, str]:
    """Read a key=value config file into a flat option mapping.

    Raises
    ------
    FileNotFoundError
        If the file does not exist
    """
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"Config file not found: {path}")
    values = dotenv_values(path)
    return {key.strip().lower(): value for key, value in values.items() if value is not None}
