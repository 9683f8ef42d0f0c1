"""
Writers for run artifacts: trace CSV, seed summary, theory JSON, config copy and sweep manifest.
"""

import json
import math
import logging
from pathlib import Path
from typing import Any, Dict, List, Sequence, Union

import pandas as pd

from ..analysis.trace_stats import summarize_traces, traces_to_frame
from ..utils.config import Config
from .models import Trace, TheoryReport

logger = logging.getLogger(__name__)

TRACE_HEADER = '# fedshuffle-trace v1, uplink-only bits, 32-bit indices'
TRACE_COLUMNS = ['epoch', 'seed', 'cum_bits', 'sq_dist', 'f_gap', 'lyapunov']
MANIFEST_COLUMNS = ['index', 'prefix', 'algorithm', 'gamma', 'gamma_rule', 'k', 'repeats', 'terminated_early']


def _prepare(path: Union[str, Path]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    return path


def _json_safe(value: Any) -> Any:
    """Replace non-finite floats with None so the document stays strict JSON."""
    if isinstance(value, float):
        return value if math.isfinite(value) else None
    if isinstance(value, dict):
        return {key: _json_safe(item) for key, item in value.items()}
    if isinstance(value, (list, tuple)):
        return [_json_safe(item) for item in value]
    return value


def write_trace_csv(path: Union[str, Path], traces: Sequence[Trace], float_format: str = None) -> Path:
    """
    Write one row per epoch per run, preceded by the versioned header line.

    Lyapunov cells are empty for methods without shifts.
    """
    if float_format is None:
        float_format = Config().io_config.get('float_format', '%.17g')
    path = _prepare(path)
    frame = traces_to_frame(traces)[TRACE_COLUMNS]
    with open(path, 'w', encoding='utf-8', newline='') as file:
        file.write(TRACE_HEADER + '\n')
        frame.to_csv(file, index=False, float_format=float_format, na_rep='', lineterminator='\n')
    logger.info(f"Wrote {len(frame)} trace rows to {path}")
    return path


def read_trace_csv(path: Union[str, Path]) -> pd.DataFrame:
    return pd.read_csv(path, comment='#')


def write_summary_csv(path: Union[str, Path], traces: Sequence[Trace]) -> Path:
    """Mean and standard error across seeds at each (epoch, cum_bits) point."""
    path = _prepare(path)
    summary = summarize_traces(traces)
    summary.to_csv(path, index=False, float_format='%.17g', na_rep='', lineterminator='\n')
    logger.info(f"Wrote seed summary over {len(traces)} run(s) to {path}")
    return path


def write_theory_json(path: Union[str, Path], report: TheoryReport,
                      extra: Dict[str, Any] = None) -> Path:
    """Serialize a TheoryReport with its scaling metadata."""
    path = _prepare(path)
    document = report.to_dict()
    if extra:
        document.update(extra)
    with open(path, 'w', encoding='utf-8', newline='\n') as file:
        json.dump(_json_safe(document), file, indent=2, sort_keys=True)
        file.write('\n')
    logger.info(f"Wrote theory report to {path}")
    return path


def write_config_copy(path: Union[str, Path], raw: Dict[str, Any]) -> Path:
    path = _prepare(path)
    with open(path, 'w', encoding='utf-8', newline='\n') as file:
        json.dump(raw, file, indent=2, sort_keys=True)
        file.write('\n')
    return path


def write_manifest(path: Union[str, Path], rows: List[Dict[str, Any]]) -> Path:
    """One line per sweep grid point, mapping parameters to the output prefix."""
    path = _prepare(path)
    frame = pd.DataFrame(rows, columns=MANIFEST_COLUMNS)
    frame.to_csv(path, index=False, lineterminator='\n', float_format='%.17g')
    logger.info(f"Wrote manifest with {len(frame)} grid points to {path}")
    return path
