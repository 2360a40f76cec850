"""
Tabular views of zfumes results and their CSV/JSON writers.
"""

import os
import tempfile
from pathlib import Path
from typing import Optional, Sequence, Union

import pandas as pd
from pydantic import BaseModel, TypeAdapter

from ..config import Distribution, OutputFormat
from ..ensemble import EnsembleStats
from ..protocols.commons import HomodyneRecord
from ..protocols.general_control import mf_general, mz_general
from ..protocols.toy_model import (
    exact_lock_probabilities,
    lock_histogram,
    mf_asymptotic,
    mf_exact,
    mz_bound,
    mz_bound_sum,
    p_avg,
    p_lock_uniform,
)

FLOAT_FORMAT = "%.9g"

Result = Union[BaseModel, Sequence[BaseModel]]


def to_frame(result: Result) -> pd.DataFrame:
    """
    Convert a result into the DataFrame written as CSV.

    Parameters
    ----------
    result : EnsembleStats, HomodyneRecord or sequence of row models
        Finalized result

    Returns
    -------
    pd.DataFrame
        One row per grid point, sample or sweep entry
    """
    if isinstance(result, EnsembleStats):
        return pd.DataFrame(
            {
                "time": result.time,
                "mean_fidelity": result.mean_fidelity,
                "stderr": result.stderr,
                "converged_fraction": result.converged_fraction,
            }
        )
    if isinstance(result, HomodyneRecord):
        return _record_frame(result)
    if isinstance(result, Sequence) and all(isinstance(row, BaseModel) for row in result):
        return pd.DataFrame([row.model_dump() for row in result])
    raise TypeError(f"no tabular view for {type(result).__name__}")


def _record_frame(record: HomodyneRecord) -> pd.DataFrame:
    frame = pd.DataFrame(record.currents)
    frame.columns = [f"I_{j}" for j in range(frame.shape[1])]
    frame.insert(0, "time", record.times)
    return frame


def histogram_frame(stats: EnsembleStats) -> pd.DataFrame:
    """
    Empirical lock frequency next to the multinomial and uniform expectations.

    Parameters
    ----------
    stats : EnsembleStats
        Stats computed with the lock histogram enabled

    Returns
    -------
    pd.DataFrame
        Columns site, empirical, multinomial_exact, uniform_exact
    """
    if stats.lock_frequency is None:
        raise ValueError("stats carry no lock histogram")
    L = stats.sites
    return pd.DataFrame(
        {
            "site": range(L),
            "empirical": stats.lock_frequency,
            "multinomial_exact": exact_lock_probabilities(L, Distribution.MULTINOMIAL),
            "uniform_exact": [p_lock_uniform(site, L) for site in range(L)],
        }
    )


def formula_frame(L: int, B: int = 2) -> pd.DataFrame:
    """Closed-form measurement-count estimates for L sites and B outcomes."""
    rows = [
        ("mf_exact", mf_exact(L)),
        ("mf_asymptotic", mf_asymptotic(L)),
        ("mz_bound", mz_bound(L)),
        ("mz_bound_sum", mz_bound_sum(L)),
        ("p_lock_edge", p_lock_uniform(0, L)),
    ]
    if L >= 3:
        exact, expansion = p_avg(L)
        rows += [("p_avg_exact", exact), ("p_avg_expansion", expansion)]
    harmonic, logarithmic = mz_general(B, L)
    rows += [
        ("mz_general_sum", harmonic),
        ("mz_general_log", logarithmic),
        ("mf_general", mf_general(B, L)),
    ]
    return pd.DataFrame(rows, columns=["quantity", "value"])


def render(result: Union[Result, pd.DataFrame], format: OutputFormat) -> str:
    """Serialized table text, as written to disk or stdout."""
    if format is OutputFormat.JSON:
        if isinstance(result, pd.DataFrame):
            return result.to_json(orient="records", indent=2, double_precision=15)
        if isinstance(result, BaseModel):
            return result.model_dump_json(indent=2)
        adapter = TypeAdapter(list[type(result[0])]) if result else TypeAdapter(list)
        return adapter.dump_json(list(result), indent=2).decode()
    frame = result if isinstance(result, pd.DataFrame) else to_frame(result)
    return frame.to_csv(float_format=FLOAT_FORMAT, lineterminator="\n", index=False)


def write_text_atomic(text: str, path: Path) -> Path:
    """Write through a temporary file in the target directory, then rename.

    Raises
    ------
    OSError
        With the target path in the message
    """
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    except OSError as e:
        raise OSError(f"cannot write {path}: {e}") from e
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as handle:
            handle.write(text)
        os.replace(tmp, path)
    except OSError as e:
        Path(tmp).unlink(missing_ok=True)
        raise OSError(f"cannot write {path}: {e}") from e
    return path


def write_table(
    result: Union[Result, pd.DataFrame],
    path: Optional[Path],
    format: OutputFormat = OutputFormat.CSV,
) -> str:
    """
    Serialize ``result`` and write it atomically to ``path`` when given.

    Parameters
    ----------
    result : EnsembleStats, HomodyneRecord, sequence of row models or DataFrame
        Finalized result
    path : Path, optional
        Destination; nothing is written when None
    format : OutputFormat
        ``csv`` (9 significant digits, ``\\n`` line ends) or ``json``

    Returns
    -------
    str
        The serialized text
    """
    text = render(result, OutputFormat(format))
    if path is not None:
        write_text_atomic(text, path)
    return text


def load_stats(path: Path) -> EnsembleStats:
    """Reload an EnsembleStats JSON file."""
    return EnsembleStats.model_validate_json(Path(path).read_text(encoding="utf-8"))


def toy_histogram_frame(L: int, distribution: Distribution, n_samples: int, rng) -> pd.DataFrame:
    """Sampled full-lattice lock frequency of the toy model against both exact forms."""
    return pd.DataFrame(
        {
            "site": range(L),
            "empirical": lock_histogram(L, Distribution(distribution), n_samples, rng),
            "multinomial_exact": exact_lock_probabilities(L, Distribution.MULTINOMIAL),
            "uniform_exact": [p_lock_uniform(site, L) for site in range(L)],
        }
    )
