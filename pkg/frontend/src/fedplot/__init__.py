"""Figures and reduced data tables from taskfed metrics CSVs."""

from .core import (
    EXPECTED_COLUMNS,
    TABLE_COLUMNS,
    PlotSpec,
    build_figure,
    group_mean_series,
    load_series,
    plot_loss_curves,
    read_metrics,
    table_path_for,
    write_table,
)
from .errors import PlotError

__all__ = [
    "EXPECTED_COLUMNS",
    "TABLE_COLUMNS",
    "PlotSpec",
    "PlotError",
    "build_figure",
    "group_mean_series",
    "load_series",
    "plot_loss_curves",
    "read_metrics",
    "table_path_for",
    "write_table",
]

__version__ = "0.1.0"
