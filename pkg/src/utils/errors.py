"""
Exception types raised across the simulator.
"""

from typing import Optional


class FedShuffleError(Exception):
    """Base class for every error the package raises on purpose."""


class ConfigurationError(FedShuffleError):
    """Invalid experiment configuration or compressor or run settings."""

    def __init__(self, message: str, field: Optional[str] = None):
        self.field = field
        super().__init__(f"{field}: {message}" if field else message)


class ProblemError(FedShuffleError):
    """Malformed problem data or an invalid oracle query."""


class DivergenceError(FedShuffleError):
    """An iterate left the finite range during a local epoch or aggregation."""

    def __init__(self, message: str, client: Optional[int] = None,
                 step: Optional[int] = None, epoch: Optional[int] = None):
        self.client = client
        self.step = step
        self.epoch = epoch
        super().__init__(message)


class LibSVMParseError(FedShuffleError):
    """Malformed LIBSVM input; line and column are 1-based."""

    def __init__(self, message: str, line: Optional[int] = None, column: Optional[int] = None):
        self.line = line
        self.column = column
        super().__init__(message)
