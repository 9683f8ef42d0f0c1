"""
Utility functions and helpers for the federated shuffling simulator.
"""

import os
import sys
import logging
from typing import List, Optional, Sequence

import numpy as np

from .errors import ProblemError

logger = logging.getLogger(__name__)

DEFAULT_LOG_FORMAT = '%(asctime)s - %(name)s - %(levelname)s - %(message)s'


def setup_logging(level: str = 'INFO', log_file: Optional[str] = None,
                  quiet: bool = False, log_format: str = DEFAULT_LOG_FORMAT) -> logging.Logger:
    """
    Configure root logging with a console handler and an optional file handler.

    Args:
        level: Logging level name for the file handler and, unless quiet, the console
        log_file: Optional path of a log file; its directory is created
        quiet: Raise the console threshold to ERROR (hides theorem-condition warnings)
        log_format: Format string shared by both handlers

    Returns:
        The package logger
    """
    console = logging.StreamHandler(sys.stderr)
    console.setLevel(logging.ERROR if quiet else level)
    handlers: List[logging.Handler] = [console]

    if log_file:
        os.makedirs(os.path.dirname(log_file) or '.', exist_ok=True)
        file_handler = logging.FileHandler(log_file, encoding='utf-8')
        file_handler.setLevel(level)
        handlers.append(file_handler)

    logging.basicConfig(level=level, format=log_format, handlers=handlers, force=True)
    return logging.getLogger('src')


def setup_directories(directories: Sequence[str] = ('results', 'logs')):
    """Create output directories if they don't exist."""
    for directory in directories:
        os.makedirs(directory, exist_ok=True)


def as_vector(x, d: Optional[int] = None, name: str = 'x') -> np.ndarray:
    """
    Convert input to a 1-D float64 array, checking its length when d is given.

    Raises:
        ProblemError: on wrong shape or length
    """
    vector = np.asarray(x, dtype=np.float64)
    if vector.ndim != 1:
        raise ProblemError(f"{name} must be a vector, got shape {vector.shape}")
    if d is not None and vector.shape[0] != d:
        raise ProblemError(f"{name} has length {vector.shape[0]}, expected {d}")
    return vector


def sq_norm(x: np.ndarray) -> float:
    """Squared Euclidean norm as a Python float."""
    return float(np.dot(x, x))


def is_diverged(x: np.ndarray, threshold: float) -> bool:
    """True when any entry is non-finite or exceeds threshold in absolute value."""
    if not np.all(np.isfinite(x)):
        return True
    return bool(np.max(np.abs(x), initial=0.0) > threshold)
