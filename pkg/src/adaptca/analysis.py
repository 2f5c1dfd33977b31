"""Observables and statistics shared by the models."""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ConfigError


def pearson(a, b) -> float:
    """Pearson correlation of two equally shaped fields.

    Returns ``nan`` when either input has zero variance.
    """
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ConfigError(f"shape mismatch: {a.shape} vs {b.shape}")
    da = a - a.mean()
    db = b - b.mean()
    na = math.sqrt(float(np.sum(da * da)))
    nb = math.sqrt(float(np.sum(db * db)))
    scale = max(np.abs(a).max(initial=0.0), np.abs(b).max(initial=0.0), 1.0)
    if na <= 1e-12 * scale or nb <= 1e-12 * scale:
        return math.nan
    r = float(np.sum(da * db)) / (na * nb)
    return min(1.0, max(-1.0, r))


@dataclass
class TimeSeries:
    """Named ``(step, value)`` samples with strictly increasing steps."""

    name: str
    steps: list = field(default_factory=list)
    values: list = field(default_factory=list)

    def append(self, step: int, value: float) -> None:
        if self.steps and step <= self.steps[-1]:
            raise ValueError(f"steps must increase strictly: {step} after {self.steps[-1]}")
        self.steps.append(step)
        self.values.append(float(value))

    def __len__(self) -> int:
        return len(self.steps)

    def as_arrays(self) -> tuple[np.ndarray, np.ndarray]:
        return np.asarray(self.steps), np.asarray(self.values, dtype=np.float64)

    def tail_mean(self, n: int) -> float:
        return float(np.mean(self.values[-n:]))


def running_mean_convergence(ts: TimeSeries, window: int = 1000, tol: float = 0.05):
    """First step at which the trailing ``window`` samples span less than ``tol``.

    Returns ``None`` if no such window exists.
    """
    if window < 2:
        raise ConfigError("window must be >= 2", key="window")
    steps, values = ts.as_arrays()
    if len(values) < window:
        return None
    windows = np.lib.stride_tricks.sliding_window_view(values, window)
    spread = windows.max(axis=1) - windows.min(axis=1)
    hit = np.flatnonzero(spread < tol)
    if hit.size == 0:
        return None
    return int(steps[hit[0] + window - 1])


def histogram(values, bins: int = 50, range=None) -> tuple[np.ndarray, np.ndarray]:
    """Counts of the finite entries of ``values``; non-finite entries are dropped."""
    if bins < 1:
        raise ConfigError("bins must be >= 1", key="bins")
    v = np.asarray(values, dtype=np.float64).ravel()
    v = v[np.isfinite(v)]
    if v.size == 0:
        lo, hi = range if range is not None else (0.0, 1.0)
        return np.zeros(bins, dtype=np.int64), np.linspace(lo, hi, bins + 1)
    counts, edges = np.histogram(v, bins=bins, range=range)
    return counts.astype(np.int64), edges


def format_value(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return str(int(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return f"{float(v):.9g}"
    return str(v)


def write_csv(path, header, rows) -> Path:
    """CSV with a header row; floats use 9 significant digits."""
    path = Path(path)
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for row in rows:
            writer.writerow([format_value(v) for v in row])
    return path


def write_records(path, records: list[dict]) -> Path:
    header = list(records[0]) if records else []
    return write_csv(path, header, ([rec[k] for k in header] for rec in records))


def blocked_stderr(samples, n_blocks: int = 100) -> float:
    """Standard error of the mean from ``n_blocks`` contiguous block means.

    Blocks much longer than the autocorrelation time make the block means
    nearly independent.
    """
    x = np.asarray(samples, dtype=np.float64)
    m = len(x) // n_blocks
    if m < 1:
        raise ValueError("not enough samples for the requested number of blocks")
    means = x[: m * n_blocks].reshape(n_blocks, m).mean(axis=1)
    return float(means.std(ddof=1) / math.sqrt(n_blocks))
