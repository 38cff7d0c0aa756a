"""Read-only plotting companion for simulator run directories."""

from .artifacts import (
    RunHandle,
    discover,
    group_by_strategy,
    load_run,
    median_rounds,
)
from .errors import PlotError, RunDataError
from .figures import (
    build_bars_figure,
    build_curves_figure,
    plot_accuracy_curves,
    plot_rounds_bar,
    rounds_bar_data,
)

__all__ = [
    "RunHandle",
    "discover",
    "group_by_strategy",
    "load_run",
    "median_rounds",
    "PlotError",
    "RunDataError",
    "build_bars_figure",
    "build_curves_figure",
    "plot_accuracy_curves",
    "plot_rounds_bar",
    "rounds_bar_data",
]
