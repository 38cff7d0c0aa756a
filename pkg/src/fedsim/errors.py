"""Error types and process exit codes."""

from __future__ import annotations

# CLI exit codes.
EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NUMERIC = 3
EXIT_IO = 4


class FedsimError(Exception):
    """Base class for all package errors."""

    exit_code = EXIT_CONFIG


class ConfigError(FedsimError):
    """Bad configuration: unknown key, type mismatch, constraint violation."""

    exit_code = EXIT_CONFIG


class DataFormatError(FedsimError):
    """Malformed data file. Message carries the byte offset of the problem."""

    exit_code = EXIT_IO


class NumericError(FedsimError):
    """Non-finite value produced where a finite one is required."""

    exit_code = EXIT_NUMERIC


class DivergenceError(NumericError):
    """A local solve produced a non-finite iterate."""

    def __init__(self, client_id: int, epoch: int, step: int):
        self.client_id = client_id
        self.epoch = epoch
        self.step = step
        super().__init__(
            f"local solve diverged at client {client_id}, epoch {epoch}, step {step}: "
            "non-finite iterate (reduce the client learning rate)"
        )
