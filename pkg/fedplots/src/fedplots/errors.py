"""Error types and process exit codes."""

from __future__ import annotations

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_IO = 4


class PlotError(Exception):
    """Base class: bad inputs or unusable run selections."""

    exit_code = EXIT_USAGE


class RunDataError(PlotError):
    """Missing or malformed run-directory files."""

    exit_code = EXIT_IO
