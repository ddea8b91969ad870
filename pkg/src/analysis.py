"""Post-processing of closed-loop traces: convergence metrics and CSV export."""

import csv
import logging
import os
from contextlib import contextmanager
from typing import Dict, List, Optional, Tuple, Union

import numpy as np

from .models import BLOCKS, ROLES, ClosedLoopTrace, ConvergenceReport
from .scheme import error_label
import config


logger = logging.getLogger(__name__)


SIGNIFICANT_DIGITS = config.CSV_SIGNIFICANT_DIGITS
LYAPUNOV_RIPPLE = 1e-12


def format_value(value: float, digits: int = SIGNIFICANT_DIGITS) -> str:
    """Fixed-point decimal carrying exactly `digits` significant digits."""
    value = float(value)
    if not np.isfinite(value):
        return str(value)
    if value == 0.0:
        # also folds -0.0
        return np.format_float_positional(0.0, precision=digits - 1, unique=False, trim='k')
    # round first so a carry (9.99...e2 -> 1.00...e3) moves the exponent
    mantissa, exponent = f"{value:.{digits - 1}e}".split('e')
    decimals = max(digits - 1 - int(exponent), 0)
    return np.format_float_positional(float(f"{mantissa}e{exponent}"), precision=decimals, unique=False,
                                      trim='k' if decimals else '-')


def _require_samples(trace: ClosedLoopTrace):
    if len(trace.times) == 0:
        raise ValueError("Trace has no snapshots")


def error_norm_series(trace: ClosedLoopTrace) -> Tuple[np.ndarray, np.ndarray]:
    """
    Euclidean norm of the stacked error at every snapshot.

    Args:
        trace: Closed-loop trace

    Returns:
        Tuple of (times, norms)
    """
    _require_samples(trace)
    return trace.times, np.linalg.norm(trace.stacked_errors(), axis=1)


def decay_residual(trace: ClosedLoopTrace, gain: Optional[float] = None) -> float:
    """Largest deviation of any error component from e(0) * exp(-gain * t)."""
    if len(trace.times) == 0:
        return 0.0
    gain = trace.gain if gain is None else gain
    errors = trace.stacked_errors()
    expected = errors[0][None, :] * np.exp(-gain * trace.times)[:, None]
    return float(np.max(np.abs(errors - expected)))


def lyapunov_series(trace: ClosedLoopTrace) -> Tuple[np.ndarray, np.ndarray]:
    """V(t) = 1/2 e^T e as recorded during the run."""
    return trace.times, trace.lyapunov


def lyapunov_monotone(trace: ClosedLoopTrace, ripple: float = LYAPUNOV_RIPPLE) -> bool:
    """True when V never increases by more than the ripple allowance."""
    if len(trace.lyapunov) < 2:
        return True
    return bool(np.all(np.diff(trace.lyapunov) <= ripple))


def error_labels(trace: ClosedLoopTrace) -> List[str]:
    return [error_label(b, t) for b in BLOCKS for t in trace.assignment.block(b)]


def settling_time(times: np.ndarray, values: np.ndarray, threshold: float) -> Optional[float]:
    """
    First time after which |value| stays below threshold for the rest of the horizon.

    Returns:
        Settling time, or None if the last sample is still above threshold
    """
    above = np.flatnonzero(np.abs(values) >= threshold)
    if above.size == 0:
        return float(times[0])
    last = int(above[-1])
    if last == len(times) - 1:
        return None
    return float(times[last + 1])


def convergence_report(trace: ClosedLoopTrace, threshold: float) -> ConvergenceReport:
    """
    Summarize how a trace converges.

    Args:
        trace: Closed-loop trace
        threshold: Settling threshold, must be positive

    Returns:
        ConvergenceReport
    """
    if threshold <= 0:
        raise ValueError(f"Threshold must be positive, got {threshold}")
    _require_samples(trace)
    errors = trace.stacked_errors()
    settling = {label: settling_time(trace.times, errors[:, k], threshold)
                for k, label in enumerate(error_labels(trace))}
    report = ConvergenceReport(
        threshold=threshold,
        t_end=float(trace.times[-1]),
        settling_times=settling,
        max_decay_residual=decay_residual(trace),
        final_error_norm=float(np.linalg.norm(errors[-1])),
        lyapunov_monotone=lyapunov_monotone(trace),
    )
    logger.info(f"Convergence: {report}")
    return report


def trace_columns(trace: ClosedLoopTrace) -> List[str]:
    """Header row: time, every state component, every error, every aggregate control, V."""
    n = trace.dim
    columns = ['t']
    columns += [f"{role}{k}" for role in ROLES for k in range(1, n + 1)]
    columns += error_labels(trace)
    columns += [f"U{b}{k}" for b in BLOCKS for k in range(1, n + 1)]
    columns.append('V')
    return columns


def trace_rows(trace: ClosedLoopTrace) -> np.ndarray:
    samples = len(trace.times)
    return np.column_stack([
        trace.times,
        trace.states.reshape(samples, -1),
        trace.stacked_errors(),
        trace.controls.reshape(samples, -1),
        trace.lyapunov,
    ]) if samples else np.empty((0, len(trace_columns(trace))))


@contextmanager
def open_destination(destination: str):
    """Open a CSV destination for writing, creating parent directories."""
    handle = None
    try:
        parent = os.path.dirname(os.path.abspath(destination))
        os.makedirs(parent, exist_ok=True)
        handle = open(destination, 'w', newline='', encoding='utf-8')
        yield csv.writer(handle, lineterminator='\n')
    except OSError as e:
        logger.error(f"Could not write {destination}: {e}")
        raise
    finally:
        if handle:
            handle.close()


def write_table(destination: str, header: List[str], rows) -> str:
    with open_destination(destination) as writer:
        writer.writerow(header)
        for row in rows:
            writer.writerow([format_value(v) for v in row])
    logger.info(f"Wrote {destination}")
    return destination


def export_report_csv(report: ConvergenceReport, destination: str) -> str:
    """Write a convergence report as metric,value rows."""
    rows = [
        ('threshold', format_value(report.threshold)),
        ('t_end', format_value(report.t_end)),
        ('max_decay_residual', format_value(report.max_decay_residual)),
        ('final_error_norm', format_value(report.final_error_norm)),
        ('lyapunov_monotone', 'true' if report.lyapunov_monotone else 'false'),
    ]
    for label, value in report.settling_times.items():
        rows.append((f"settling_time:{label}", 'not-settled' if value is None else format_value(value)))
    with open_destination(destination) as writer:
        writer.writerow(['metric', 'value'])
        writer.writerows(rows)
    logger.info(f"Wrote {destination}")
    return destination


def export_csv(data: Union[ClosedLoopTrace, ConvergenceReport], destination: str) -> str:
    """
    Write a trace or a convergence report as CSV.

    Args:
        data: ClosedLoopTrace or ConvergenceReport
        destination: Output file path

    Returns:
        The path written
    """
    if isinstance(data, ConvergenceReport):
        return export_report_csv(data, destination)
    return write_table(destination, trace_columns(data), trace_rows(data))


def load_trace_csv(source: str) -> Dict[str, np.ndarray]:
    """Read an exported trace back as float columns keyed by header name."""
    with open(source, newline='', encoding='utf-8') as handle:
        reader = csv.reader(handle)
        header = next(reader)
        rows = [[float(v) for v in row] for row in reader if row]
    data = np.array(rows, dtype=float).reshape(len(rows), len(header))
    return {name: data[:, k] for k, name in enumerate(header)}


def figure_series(trace: ClosedLoopTrace, block: int, slot: int) -> Tuple[List[str], np.ndarray]:
    """
    Combined drive signal against combined response signal for one error slot.

    Args:
        trace: Closed-loop trace
        block: Error block (1 or 2)
        slot: 1-based slot m

    Returns:
        Tuple of (column labels, (T, 3) array of t, drive, response)
    """
    t = trace.assignment.block(block)[slot - 1]
    a, b, c, d = trace.scaling.block(block)
    x = trace.state(f"x{block}")[:, t.i - 1]
    y = trace.state(f"y{block}")[:, t.j - 1]
    z = trace.state(f"z{block}")[:, t.l - 1]
    w = trace.state(f"w{block}")[:, t.m - 1]
    drive = a[t.i - 1] * x + b[t.j - 1] * y
    response = c[t.l - 1] * z + d[t.m - 1] * w
    labels = ['t', f"x{block}{t.i}+y{block}{t.j}", f"z{block}{t.l}+w{block}{t.m}"]
    return labels, np.column_stack([trace.times, drive, response])


def export_figures(trace: ClosedLoopTrace, directory: str) -> List[str]:
    """
    Write one CSV per error slot (combined states) plus one with all errors.

    Args:
        trace: Closed-loop trace
        directory: Output directory

    Returns:
        Paths written, in figure order
    """
    paths = []
    number = 1
    for block in BLOCKS:
        for slot in range(1, trace.dim + 1):
            labels, rows = figure_series(trace, block, slot)
            paths.append(write_table(os.path.join(directory, f"figure{number}.csv"), labels, rows))
            number += 1
    errors = np.column_stack([trace.times, trace.stacked_errors()])
    paths.append(write_table(os.path.join(directory, f"figure{number}.csv"), ['t'] + error_labels(trace), errors))
    return paths
