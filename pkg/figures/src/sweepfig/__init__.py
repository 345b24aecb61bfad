"""Figure generation for spectral-efficiency sweep CSVs."""

from .plotting import format_gain, plot_se_vs_axis
from .table import SchemaError, SweepTable, load_table, median_iqr_curves

__all__ = [
    "SchemaError",
    "SweepTable",
    "format_gain",
    "load_table",
    "median_iqr_curves",
    "plot_se_vs_axis",
]
