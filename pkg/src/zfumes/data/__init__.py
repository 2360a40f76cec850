from .tables import (
    formula_frame,
    histogram_frame,
    load_stats,
    to_frame,
    toy_histogram_frame,
    write_table,
)

__all__ = [
    "formula_frame",
    "histogram_frame",
    "load_stats",
    "to_frame",
    "toy_histogram_frame",
    "write_table",
]
