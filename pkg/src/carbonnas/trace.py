"""Hourly carbon-intensity traces: loading, querying, and error metrics.

The only ingestion format is a CSV with header ``timestamp,carbon_intensity``,
ISO-8601 UTC timestamps at strict hourly resolution, and intensities in
gCO2/kWh. Internally a trace is an hour-indexed array; all downstream code
works with hour indices relative to the trace start.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from datetime import datetime, timedelta, timezone
from pathlib import Path

import numpy as np

HOUR = timedelta(hours=1)


class TraceError(ValueError):
    """Malformed or inconsistent carbon-trace data."""


@dataclass(frozen=True)
class CarbonTrace:
    """Hourly carbon-intensity series for one grid region.

    Index ``i`` corresponds to the hour ``start + i hours``. Immutable after
    construction; safe to share across concurrent simulation runs.
    """

    region_id: str
    start: datetime
    intensities: np.ndarray = field(repr=False)

    def __post_init__(self):
        arr = np.asarray(self.intensities, dtype=float)
        if arr.ndim != 1 or arr.size == 0:
            raise TraceError("trace must be a non-empty 1-D intensity series")
        if not np.all(np.isfinite(arr)):
            raise TraceError("trace contains non-finite intensities")
        if np.any(arr < 0):
            raise TraceError("trace contains negative intensities")
        arr = arr.copy()
        arr.flags.writeable = False
        object.__setattr__(self, "intensities", arr)

    def __len__(self) -> int:
        return int(self.intensities.size)


@dataclass(frozen=True)
class TraceWindow:
    """Intensity extremes attained over the inclusive hour range [t0, t1]."""

    t0: int
    t1: int
    c_min: float
    c_max: float


def _parse_timestamp(raw: str, line_no: int) -> datetime:
    try:
        ts = datetime.fromisoformat(raw.replace("Z", "+00:00"))
    except ValueError as exc:
        raise TraceError(f"line {line_no}: bad timestamp {raw!r}: {exc}") from exc
    if ts.tzinfo is None:
        ts = ts.replace(tzinfo=timezone.utc)
    ts = ts.astimezone(timezone.utc)
    if ts.minute or ts.second or ts.microsecond:
        raise TraceError(f"line {line_no}: timestamp {raw!r} is not hour-aligned")
    return ts


def load_trace(path: str | Path, region_id: str | None = None) -> CarbonTrace:
    """Load a CSV trace, validating hourly spacing and value sanity.

    Every format violation is reported with the offending 1-based line number
    (the header is line 1). Sub-hourly, gapped, or duplicated timestamps are
    rejected rather than resampled.
    """
    path = Path(path)
    if not path.exists():
        raise TraceError(f"trace file not found: {path}")
    if region_id is None:
        region_id = path.stem

    start: datetime | None = None
    prev: datetime | None = None
    values: list[float] = []
    with path.open(newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or [h.strip() for h in header[:2]] != ["timestamp", "carbon_intensity"]:
            raise TraceError(f"line 1: expected header 'timestamp,carbon_intensity', got {header}")
        for line_no, row in enumerate(reader, start=2):
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) < 2:
                raise TraceError(f"line {line_no}: expected 2 columns, got {len(row)}")
            ts = _parse_timestamp(row[0].strip(), line_no)
            try:
                value = float(row[1])
            except ValueError as exc:
                raise TraceError(f"line {line_no}: bad intensity {row[1]!r}") from exc
            if not np.isfinite(value):
                raise TraceError(f"line {line_no}: non-finite intensity {row[1]!r}")
            if value < 0:
                raise TraceError(f"line {line_no}: negative intensity {value}")
            if prev is not None:
                delta = ts - prev
                if delta == timedelta(0):
                    raise TraceError(f"line {line_no}: duplicate hour {row[0].strip()}")
                if delta != HOUR:
                    raise TraceError(
                        f"line {line_no}: gap or irregular spacing ({delta} after {prev.isoformat()})"
                    )
            else:
                start = ts
            prev = ts
            values.append(value)

    if not values:
        raise TraceError(f"trace file {path} contains no data rows")
    assert start is not None
    return CarbonTrace(region_id=region_id, start=start, intensities=np.array(values))


def serialize_trace(trace: CarbonTrace, path: str | Path) -> None:
    """Write a trace back out in the ingestion CSV format."""
    path = Path(path)
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["timestamp", "carbon_intensity"])
        for i, value in enumerate(trace.intensities):
            ts = trace.start + i * HOUR
            writer.writerow([ts.strftime("%Y-%m-%dT%H:%M:%S+00:00"), repr(float(value))])


def intensity_at(trace: CarbonTrace, t: int) -> float:
    """Intensity (gCO2/kWh) at hour index ``t``."""
    if not 0 <= t < len(trace):
        raise IndexError(f"hour index {t} out of range for trace of length {len(trace)}")
    return float(trace.intensities[t])


def window_extremes(trace: CarbonTrace, t0: int, t1: int) -> TraceWindow:
    """Min and max intensity over the inclusive hour window [t0, t1]."""
    if not (0 <= t0 <= t1 < len(trace)):
        raise IndexError(f"invalid window ({t0}, {t1}) for trace of length {len(trace)}")
    segment = trace.intensities[t0 : t1 + 1]
    return TraceWindow(t0=t0, t1=t1, c_min=float(segment.min()), c_max=float(segment.max()))


def mape(actual, predicted) -> float:
    """Mean absolute percentage error, in percent.

    Zero actual values make the metric undefined and are an error; grid
    intensities are strictly positive so this never triggers on real traces.
    """
    a = np.asarray(actual, dtype=float)
    p = np.asarray(predicted, dtype=float)
    if a.shape != p.shape or a.ndim != 1 or a.size == 0:
        raise ValueError(f"mape needs equal non-empty 1-D inputs, got {a.shape} and {p.shape}")
    if np.any(a == 0):
        raise ValueError("mape undefined: actual contains zero values")
    return float(100.0 / a.size * np.sum(np.abs(a - p) / np.abs(a)))


_EPOCH = datetime(2021, 7, 2, tzinfo=timezone.utc)


def square_wave_trace(
    low: float,
    high: float,
    half_period: int,
    hours: int,
    region_id: str = "synthetic-square",
    start: datetime = _EPOCH,
) -> CarbonTrace:
    """Two-level square wave starting at the low level; handy for tests."""
    idx = (np.arange(hours) // half_period) % 2
    values = np.where(idx == 0, low, high).astype(float)
    return CarbonTrace(region_id=region_id, start=start, intensities=values)


def sinusoid_trace(
    mean: float,
    amplitude: float,
    hours: int,
    period: int = 24,
    noise_sd: float = 0.0,
    seed: int = 0,
    region_id: str = "synthetic-sine",
    start: datetime = _EPOCH,
) -> CarbonTrace:
    """Daily-cycle sinusoid with optional i.i.d. Gaussian noise, clipped at 0."""
    t = np.arange(hours)
    values = mean + amplitude * np.sin(2 * np.pi * t / period)
    if noise_sd > 0:
        values = values + np.random.default_rng(seed).normal(0.0, noise_sd, hours)
    return CarbonTrace(region_id=region_id, start=start, intensities=np.clip(values, 0.0, None))
