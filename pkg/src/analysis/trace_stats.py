"""
Seed aggregation of simulation traces.
"""

import logging
from typing import Dict, Sequence

import numpy as np
import pandas as pd

from ..data.models import Trace

logger = logging.getLogger(__name__)


def traces_to_frame(traces: Sequence[Trace]) -> pd.DataFrame:
    """
    Long-format table with one row per (seed, epoch).

    Args:
        traces: Runs of one configuration under different seeds

    Returns:
        DataFrame with columns epoch, seed, cum_bits, sq_dist, f_gap, lyapunov
    """
    rows = []
    for trace in traces:
        for record in trace.records:
            rows.append({
                'epoch': record.t,
                'seed': trace.config.seed,
                'cum_bits': record.cum_bits,
                'sq_dist': record.sq_dist,
                'f_gap': record.f_gap,
                'lyapunov': np.nan if record.lyapunov is None else record.lyapunov,
            })
    return pd.DataFrame(rows, columns=['epoch', 'seed', 'cum_bits', 'sq_dist', 'f_gap', 'lyapunov'])


def summarize_traces(traces: Sequence[Trace]) -> pd.DataFrame:
    """
    Mean and standard error of sq_dist (and Lyapunov values) across seeds, per (epoch, cum_bits).

    Runs are matched on cumulative uplink bits as well as the epoch index. Only points reached
    by every run are kept, so truncated traces or runs with different bit accounting shorten
    the summary.
    """
    if not traces:
        return pd.DataFrame(columns=['epoch', 'cum_bits', 'n_seeds', 'mean_sq_dist', 'se_sq_dist',
                                     'mean_lyapunov', 'se_lyapunov'])
    frame = traces_to_frame(traces)
    runs = len(traces)
    grouped = frame.groupby(['epoch', 'cum_bits'])
    summary = pd.DataFrame({
        'n_seeds': grouped['sq_dist'].count(),
        'mean_sq_dist': grouped['sq_dist'].mean(),
        'se_sq_dist': grouped['sq_dist'].std(ddof=1) / np.sqrt(grouped['sq_dist'].count()),
        'mean_lyapunov': grouped['lyapunov'].mean(),
        'se_lyapunov': grouped['lyapunov'].std(ddof=1) / np.sqrt(grouped['lyapunov'].count()),
    }).reset_index()

    complete = summary[summary['n_seeds'] == runs].reset_index(drop=True)
    if len(complete) < len(summary):
        logger.warning(f"{len(summary) - len(complete)} (epoch, cum_bits) points dropped: "
                       f"not every run reached them")
    return complete


def plateau_stats(traces: Sequence[Trace], last: int) -> Dict[str, float]:
    """
    Mean and standard error of each run's average sq_dist over its final `last` records.

    Averaging within a run first makes the runs independent samples.
    """
    per_run = np.array([trace.sq_dists[-last:].mean() for trace in traces])
    se = float(per_run.std(ddof=1) / np.sqrt(len(per_run))) if len(per_run) > 1 else 0.0
    return {'mean': float(per_run.mean()), 'se': se, 'runs': len(per_run)}


def final_values(traces: Sequence[Trace]) -> np.ndarray:
    return np.array([trace.records[-1].sq_dist for trace in traces])


def log_linear_fit(values: Sequence[float]) -> Dict[str, float]:
    """
    Least-squares line through log(values) vs index.

    Returns:
        Dictionary with slope, intercept and r_squared
    """
    y = np.log(np.asarray(values, dtype=np.float64))
    t = np.arange(len(y), dtype=np.float64)
    slope, intercept = np.polyfit(t, y, 1)
    fitted = slope * t + intercept
    residual = float(np.sum((y - fitted) ** 2))
    total = float(np.sum((y - y.mean()) ** 2))
    r_squared = 1.0 - residual / total if total > 0 else 1.0
    return {'slope': float(slope), 'intercept': float(intercept), 'r_squared': r_squared}
