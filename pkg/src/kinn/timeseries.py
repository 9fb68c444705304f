"""Series ingestion, aggregation, splitting, scaling, windowing and PACF."""

from __future__ import annotations

import csv
import enum
import math
from dataclasses import dataclass, field
from datetime import datetime, timedelta, timezone
from pathlib import Path
from typing import Sequence

import numpy as np

from . import kernels


class SeriesError(ValueError):
    """Malformed, gapped or otherwise unusable series data."""

    def __init__(self, message: str, index: int | None = None):
        super().__init__(message if index is None else f"{message} (row {index})")
        self.index = index


class EmptyInputError(SeriesError):
    pass


class GapError(SeriesError):
    pass


EPOCH = datetime(1970, 1, 1, tzinfo=timezone.utc)


@dataclass(frozen=True)
class TimeSeries:
    """Scalar observations at a fixed interval (seconds) starting at ``start_time``."""

    values: np.ndarray
    interval: float = 1.0
    start_time: datetime = EPOCH

    def __post_init__(self):
        vals = np.array(self.values, dtype=np.float64).ravel()
        vals.setflags(write=False)
        object.__setattr__(self, "values", vals)
        if vals.size == 0:
            raise EmptyInputError("series has no values")
        if not self.interval > 0:
            raise SeriesError(f"interval must be positive, got {self.interval}")
        if not np.all(np.isfinite(vals)):
            raise SeriesError("series contains non-finite values", int(np.argmin(np.isfinite(vals))))

    def __len__(self) -> int:
        return self.values.size

    def timestamps(self) -> list[datetime]:
        return [self.start_time + timedelta(seconds=self.interval * i) for i in range(len(self))]

    def slice(self, start: int, stop: int | None = None) -> "TimeSeries":
        stop = len(self) if stop is None else stop
        return TimeSeries(
            self.values[start:stop],
            self.interval,
            self.start_time + timedelta(seconds=self.interval * start),
        )

    def with_values(self, values) -> "TimeSeries":
        return TimeSeries(values, self.interval, self.start_time)


def _parse_time(text: str) -> datetime:
    text = text.strip()
    try:
        return EPOCH + timedelta(seconds=float(text))
    except ValueError:
        pass
    ts = datetime.fromisoformat(text.replace("Z", "+00:00"))
    if ts.tzinfo is None:
        ts = ts.replace(tzinfo=timezone.utc)
    return ts


def load_csv(path: str | Path, time_column: str = "timestamp", value_column: str = "value",
             fill: str | None = None) -> TimeSeries:
    """Read a headered CSV into a gapless series.

    Timestamps may be ISO-8601 or numeric seconds. The interval is taken from
    the first two rows. Gaps raise :class:`GapError` unless ``fill="forward"``,
    which repeats the last observed value across missing slots.
    """
    if fill not in (None, "forward"):
        raise ValueError(f"unknown fill mode {fill!r}")
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None:
            raise EmptyInputError(f"{path}: empty file")
        for col in (time_column, value_column):
            if col not in reader.fieldnames:
                raise SeriesError(f"{path}: missing column {col!r} (have {reader.fieldnames})")
        times: list[datetime] = []
        values: list[float] = []
        for i, row in enumerate(reader):
            try:
                t = _parse_time(row[time_column])
                v = float(row[value_column])
            except (TypeError, ValueError) as exc:
                raise SeriesError(f"{path}: malformed row ({exc})", i) from exc
            if not math.isfinite(v):
                raise SeriesError(f"{path}: non-finite value", i)
            times.append(t)
            values.append(v)
    if not values:
        raise EmptyInputError(f"{path}: no data rows")
    if len(values) == 1:
        return TimeSeries(values, 1.0, times[0])

    interval = (times[1] - times[0]).total_seconds()
    if interval <= 0:
        raise GapError(f"{path}: timestamps not increasing", 1)
    out = [values[0]]
    for i in range(1, len(times)):
        step = (times[i] - times[i - 1]).total_seconds()
        if step <= 0:
            raise GapError(f"{path}: timestamps not increasing", i)
        ratio = step / interval
        n_steps = round(ratio)
        if abs(ratio - n_steps) > 1e-9 * max(1.0, ratio):
            raise GapError(f"{path}: timestamp off the {interval:g}s grid", i)
        if n_steps > 1:
            if fill != "forward":
                raise GapError(f"{path}: gap of {step:g}s where {interval:g}s expected", i)
            out.extend([out[-1]] * (n_steps - 1))
        out.append(values[i])
    return TimeSeries(out, interval, times[0])


def write_csv(ts: TimeSeries, path: str | Path) -> None:
    """Two-column export: ISO-8601 timestamp, value (repr precision)."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["timestamp", "value"])
        for t, v in zip(ts.timestamps(), ts.values):
            w.writerow([t.isoformat(), repr(float(v))])


def aggregate(ts: TimeSeries, bucket: float) -> TimeSeries:
    """Mean over consecutive buckets; a trailing partial bucket is dropped."""
    ratio = bucket / ts.interval
    k = round(ratio)
    if k < 1 or abs(ratio - k) > 1e-9 * ratio:
        raise SeriesError(f"bucket {bucket:g}s is not a multiple of the {ts.interval:g}s interval")
    n = len(ts) // k
    if n == 0:
        raise EmptyInputError(f"series of {len(ts)} values is shorter than one bucket of {k}")
    means = ts.values[:n * k].reshape(n, k).mean(axis=1)
    return TimeSeries(means, float(bucket), ts.start_time)


@dataclass(frozen=True)
class SplitSpec:
    train_fraction: float = 0.7
    val_fraction: float = 0.1
    test_fraction: float = 0.2

    def __post_init__(self):
        fr = (self.train_fraction, self.val_fraction, self.test_fraction)
        if any(not 0.0 < f < 1.0 for f in fr):
            raise ValueError(f"split fractions must lie in (0, 1): {fr}")
        if abs(sum(fr) - 1.0) > 1e-9:
            raise ValueError(f"split fractions must sum to 1: {fr}")

    def lengths(self, n: int) -> tuple[int, int, int]:
        # tiny epsilon so that e.g. 100 * 0.7 = 70.0000...01 style noise floors correctly
        n_train = int(math.floor(n * self.train_fraction + 1e-9))
        n_val = int(math.floor(n * self.val_fraction + 1e-9))
        n_test = n - n_train - n_val
        for name, size in (("train", n_train), ("validation", n_val), ("test", n_test)):
            if size <= 0:
                raise SeriesError(f"{name} split is empty for a series of length {n}")
        return n_train, n_val, n_test


def split(ts: TimeSeries, spec: SplitSpec = SplitSpec()) -> tuple[TimeSeries, TimeSeries, TimeSeries]:
    n_train, n_val, _ = spec.lengths(len(ts))
    return ts.slice(0, n_train), ts.slice(n_train, n_train + n_val), ts.slice(n_train + n_val)


@dataclass(frozen=True)
class ScalerParams:
    mean: float
    std: float

    def __post_init__(self):
        if not self.std > 0:
            raise ValueError(f"scaler std must be positive, got {self.std}")

    def to_dict(self) -> dict:
        return {"mean": self.mean, "std": self.std}


def fit_scaler(train: TimeSeries | np.ndarray) -> ScalerParams:
    values = train.values if isinstance(train, TimeSeries) else np.asarray(train, dtype=np.float64)
    std = float(values.std())
    if values.size < 2 or std == 0.0:
        raise SeriesError("cannot fit a scaler on a zero-variance series")
    return ScalerParams(float(values.mean()), std)


def scale(values, params: ScalerParams) -> np.ndarray:
    return (np.asarray(values, dtype=np.float64) - params.mean) / params.std


def unscale(values, params: ScalerParams) -> np.ndarray:
    return np.asarray(values, dtype=np.float64) * params.std + params.mean


def transform(ts: TimeSeries, params: ScalerParams) -> TimeSeries:
    return ts.with_values(scale(ts.values, params))


def inverse_transform(ts: TimeSeries, params: ScalerParams) -> TimeSeries:
    return ts.with_values(unscale(ts.values, params))


class ChannelLayout(enum.Enum):
    VALUES_ONLY = "values"
    VALUES_PLUS_EXPERT = "values+expert"


@dataclass
class WindowedDataset:
    """Rows of ``p`` past values (oldest first) with the next value as target.

    ``target_index[i]`` is the position of row ``i``'s target in the
    windowed series.
    """

    inputs: np.ndarray  # (N, L, C)
    targets: np.ndarray  # (N,)
    p: int
    channel_layout: ChannelLayout = ChannelLayout.VALUES_ONLY
    target_index: np.ndarray = field(default=None)

    def __post_init__(self):
        if self.target_index is None:
            self.target_index = np.arange(self.p, self.p + len(self.targets))

    def __len__(self) -> int:
        return len(self.targets)

    def subset(self, rows) -> "WindowedDataset":
        return WindowedDataset(self.inputs[rows], self.targets[rows], self.p, self.channel_layout,
                               self.target_index[rows])


def make_windows(ts: TimeSeries | np.ndarray, p: int, expert_preds: Sequence[float] | None = None,
                 layout: ChannelLayout | None = None) -> WindowedDataset:
    """Slide a length-``p`` window over the series.

    Row ``i`` holds ``x[i], ..., x[i+p-1]`` in chronological order and targets
    ``x[i+p]``. With the expert layout, channel 2 repeats the expert's
    prediction for that row's target at every step.
    """
    values = ts.values if isinstance(ts, TimeSeries) else np.asarray(ts, dtype=np.float64)
    if p < 1:
        raise ValueError("window size must be >= 1")
    n = values.size
    if n < p + 1:
        raise SeriesError(f"series of length {n} is too short for window size {p}")
    if layout is None:
        layout = ChannelLayout.VALUES_ONLY if expert_preds is None else ChannelLayout.VALUES_PLUS_EXPERT
    N = n - p
    windows = np.lib.stride_tricks.sliding_window_view(values, p)[:N]
    targets = values[p:].copy()
    if layout is ChannelLayout.VALUES_ONLY:
        inputs = windows[:, :, None].copy()
    else:
        if expert_preds is None:
            raise ValueError("expert layout requires expert predictions")
        e = np.asarray(expert_preds, dtype=np.float64).ravel()
        if e.size != N:
            raise SeriesError(f"{e.size} expert predictions for {N} targets")
        inputs = np.empty((N, p, 2))
        inputs[:, :, 0] = windows
        inputs[:, :, 1] = e[:, None]
    return WindowedDataset(inputs, targets, p, layout)


def autocorrelation(values: np.ndarray, max_lag: int) -> np.ndarray:
    """Biased sample autocorrelation for lags ``0..max_lag``."""
    x = np.asarray(values, dtype=np.float64)
    x = x - x.mean()
    denom = float(np.dot(x, x))
    if denom == 0.0:
        raise SeriesError("autocorrelation of a zero-variance series")
    n = x.size
    return np.array([np.dot(x[:n - k], x[k:]) / denom for k in range(max_lag + 1)])


def pacf(ts: TimeSeries | np.ndarray, max_lag: int) -> np.ndarray:
    """Partial autocorrelation for lags ``0..max_lag`` via Durbin-Levinson."""
    values = ts.values if isinstance(ts, TimeSeries) else np.asarray(ts, dtype=np.float64)
    if max_lag < 1:
        raise ValueError("max_lag must be positive")
    if values.size <= max_lag + 1:
        raise SeriesError(f"series of length {values.size} too short for max_lag {max_lag}")
    rho = autocorrelation(values, max_lag)
    return kernels.durbin_levinson(rho)


def pacf_band(n: int) -> float:
    """Half-width of the large-sample 95% band around zero."""
    return 2.0 / math.sqrt(n)
