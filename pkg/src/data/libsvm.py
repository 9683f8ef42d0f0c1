"""
LIBSVM text format reader and writer.

Each data line is `<label> <idx>:<value> ...` with 1-based, strictly increasing
indices; `#` starts a comment that runs to the end of the line.
"""

import io
import re
import logging
from pathlib import Path
from typing import List, Optional, Tuple, Union

import numpy as np

from ..utils.config import Config
from ..utils.errors import LibSVMParseError
from .models import RawDataset

logger = logging.getLogger(__name__)

NUMBER = re.compile(r'[+-]?(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?', re.ASCII)
INDEX = re.compile(r'[+-]?\d+', re.ASCII)
TOKEN = re.compile(r'\S+')
MAX_INDEX_DIGITS = 18


def _number(token: str, line: int, column: int) -> float:
    if not NUMBER.fullmatch(token):
        raise LibSVMParseError(f"non-numeric token '{token[:40]}' at line {line}, column {column}", line, column)
    value = float(token)
    if not np.isfinite(value):
        raise LibSVMParseError(f"non-finite value '{token[:40]}' at line {line}, column {column}", line, column)
    return value


def _index(token: str, line: int, column: int) -> int:
    if not INDEX.fullmatch(token):
        raise LibSVMParseError(f"non-numeric token '{token[:40]}' at line {line}, column {column}", line, column)
    if len(token.lstrip('+-')) > MAX_INDEX_DIGITS:
        raise LibSVMParseError(f"index too large at line {line}, column {column}", line, column)
    index = int(token)
    if index < 1:
        raise LibSVMParseError(f"index must be >= 1 at line {line}, column {column}", line, column)
    return index


def _read_text(source) -> Tuple[str, str]:
    if isinstance(source, (bytes, bytearray)):
        data, name = bytes(source), '<bytes>'
    elif isinstance(source, str):
        return source, '<string>'
    elif isinstance(source, io.TextIOBase):
        return source.read(), getattr(source, 'name', '<stream>')
    else:
        data, name = source.read(), getattr(source, 'name', '<stream>')
        if isinstance(data, str):
            return data, name
    try:
        return data.decode('utf-8'), name
    except UnicodeDecodeError as e:
        raise LibSVMParseError(f"input is not valid UTF-8 (byte offset {e.start})")


def parse_libsvm(source, n_features: Optional[int] = None, max_features: Optional[int] = None,
                 max_dense_entries: Optional[int] = None, source_name: Optional[str] = None) -> RawDataset:
    """
    Parse LIBSVM data into a dense dataset.

    Args:
        source: Text, UTF-8 bytes, or a text/binary stream
        n_features: Fixed number of columns; indices above it are errors
        max_features: Largest index accepted (defaults to io.max_features)
        max_dense_entries: Largest N*d dense matrix accepted (defaults to io.max_dense_entries)
        source_name: Provenance string stored on the dataset

    Returns:
        RawDataset with d = max index seen (or n_features), absent entries 0

    Raises:
        LibSVMParseError: for every malformed input, with 1-based line and column
    """
    if max_features is None or max_dense_entries is None:
        settings = Config().io_config
        if max_features is None:
            max_features = int(settings.get('max_features', 100000))
        if max_dense_entries is None:
            max_dense_entries = int(settings.get('max_dense_entries', 50000000))
    text, name = _read_text(source)

    labels: List[float] = []
    rows: List[Tuple[List[int], List[float]]] = []
    width = 0

    for line_no, raw_line in enumerate(text.split('\n'), start=1):
        line = raw_line.split('#', 1)[0]
        tokens = list(TOKEN.finditer(line))
        if not tokens:
            continue

        label_token = tokens[0]
        labels.append(_number(label_token.group(), line_no, label_token.start() + 1))
        indices: List[int] = []
        values: List[float] = []
        previous = 0
        for match in tokens[1:]:
            token, column = match.group(), match.start() + 1
            if token.count(':') != 1:
                raise LibSVMParseError(
                    f"malformed feature '{token[:40]}' (expected index:value) at line {line_no}, column {column}",
                    line_no, column,
                )
            index_part, value_part = token.split(':')
            index = _index(index_part, line_no, column)
            value = _number(value_part, line_no, column + len(index_part) + 1)
            if index <= previous:
                raise LibSVMParseError(f"index not strictly increasing at line {line_no}", line_no, column)
            if index > max_features:
                raise LibSVMParseError(
                    f"index {index} exceeds max_features={max_features} at line {line_no}", line_no, column
                )
            if n_features is not None and index > n_features:
                raise LibSVMParseError(
                    f"index {index} exceeds n_features={n_features} at line {line_no}", line_no, column
                )
            previous = index
            indices.append(index)
            values.append(value)
        width = max(width, previous)
        rows.append((indices, values))

    if not rows:
        raise LibSVMParseError("empty dataset")
    d = n_features if n_features is not None else width
    if d < 1:
        raise LibSVMParseError("dataset has no features")
    if len(rows) * d > max_dense_entries:
        raise LibSVMParseError(
            f"dense matrix of {len(rows)} x {d} entries exceeds max_dense_entries={max_dense_entries}"
        )

    features = np.zeros((len(rows), d))
    for r, (indices, values) in enumerate(rows):
        if indices:
            features[r, np.array(indices) - 1] = values
    dataset = RawDataset(features, np.array(labels), source_name or name)
    logger.debug(f"Parsed {dataset.N} rows x {dataset.d} features from {dataset.source}")
    return dataset


def load_libsvm(path: Union[str, Path], **kwargs) -> RawDataset:
    """Read a LIBSVM file from disk."""
    path = Path(path)
    try:
        data = path.read_bytes()
    except OSError as e:
        raise LibSVMParseError(f"cannot read {path}: {e.strerror}")
    kwargs.setdefault('source_name', str(path))
    return parse_libsvm(data, **kwargs)


def dump_libsvm(raw: RawDataset, float_format: Optional[str] = None) -> str:
    """Serialize a dataset as LIBSVM text, omitting zero entries."""
    if float_format is None:
        float_format = Config().io_config.get('float_format', '%.17g')
    lines = []
    for label, row in zip(raw.targets, raw.features):
        parts = [float_format % label]
        for index in np.flatnonzero(row):
            parts.append(f"{index + 1}:{float_format % row[index]}")
        lines.append(' '.join(parts))
    return '\n'.join(lines) + '\n'


def summarize_dataset(raw: RawDataset) -> dict:
    """Counts reported by the parse-check command."""
    return {
        'source': raw.source,
        'rows': raw.N,
        'features': raw.d,
        'nonzeros': int(np.count_nonzero(raw.features)),
        'label_min': float(raw.targets.min()),
        'label_max': float(raw.targets.max()),
    }
