"""Residual fusion of a recurrent network with an expert forecaster.

The network sees the window plus the expert's forecast for the target and
regresses the expert's error, so the fused forecast is
``network(window, expert) + expert``. Everything is computed in scaled
units and reported in the original ones.
"""

from __future__ import annotations

import enum
import json
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from . import nn
from .experts import ExpertModel, expert_from_dict
from .timeseries import (
    ChannelLayout,
    ScalerParams,
    SeriesError,
    TimeSeries,
    WindowedDataset,
    fit_scaler,
    make_windows,
    scale,
    unscale,
)


class ConditioningMode(enum.Enum):
    APPEND = "append"  # expert forecast appended as step p+1 of a 1-channel sequence
    STACK = "stack"  # expert forecast repeated in a second channel

    @property
    def input_channels(self) -> int:
        return 1 if self is ConditioningMode.APPEND else 2


class BundleError(ValueError):
    pass


def condition_inputs(windows, expert_preds, mode: ConditioningMode) -> WindowedDataset:
    """Attach the (already scaled) expert forecast to each window row."""
    if isinstance(windows, WindowedDataset):
        base = windows.inputs[:, :, 0]
        targets, p, tidx = windows.targets, windows.p, windows.target_index
    else:
        base = np.asarray(windows, dtype=np.float64)
        if base.ndim == 3:
            base = base[:, :, 0]
        targets, p, tidx = np.full(base.shape[0], np.nan), base.shape[1], None
    e = np.asarray(expert_preds, dtype=np.float64).ravel()
    N = base.shape[0]
    if e.size != N:
        raise SeriesError(f"{e.size} expert predictions for {N} windows")
    if mode is ConditioningMode.APPEND:
        inputs = np.empty((N, p + 1, 1))
        inputs[:, :p, 0] = base
        inputs[:, p, 0] = e
        layout = ChannelLayout.VALUES_ONLY
    else:
        inputs = np.empty((N, p, 2))
        inputs[:, :, 0] = base
        inputs[:, :, 1] = e[:, None]
        layout = ChannelLayout.VALUES_PLUS_EXPERT
    return WindowedDataset(inputs, np.asarray(targets, dtype=np.float64).copy(), p, layout, tidx)


def unpack_conditioned(ds: WindowedDataset, mode: ConditioningMode) -> tuple[np.ndarray, np.ndarray]:
    """Inverse of :func:`condition_inputs`: ``(windows N x p, expert N)``."""
    if mode is ConditioningMode.APPEND:
        return ds.inputs[:, :-1, 0].copy(), ds.inputs[:, -1, 0].copy()
    return ds.inputs[:, :, 0].copy(), ds.inputs[:, 0, 1].copy()


def repack(ds: WindowedDataset, src: ConditioningMode, dst: ConditioningMode) -> WindowedDataset:
    windows, e = unpack_conditioned(ds, src)
    out = condition_inputs(windows, e, dst)
    out.targets = ds.targets.copy()
    out.target_index = ds.target_index.copy()
    return out


@dataclass
class SeriesSplit:
    """A contiguous working series with split boundaries (original units).

    Targets ``t`` with ``t < n_train`` are training targets, the next
    ``n_val`` are validation targets and the rest are test targets.
    """

    values: np.ndarray
    n_train: int
    n_val: int

    @classmethod
    def from_splits(cls, train: TimeSeries, val: TimeSeries, test: TimeSeries) -> "SeriesSplit":
        return cls(np.concatenate([train.values, val.values, test.values]), len(train), len(val))

    @property
    def n(self) -> int:
        return self.values.size

    @property
    def train_values(self) -> np.ndarray:
        return self.values[:self.n_train]

    def ranges(self, first_target: int) -> dict[str, tuple[int, int]]:
        if first_target >= self.n_train:
            raise SeriesError(
                f"first usable target {first_target} leaves no training targets (train length {self.n_train})"
            )
        a = self.n_train
        b = self.n_train + self.n_val
        return {"train": (first_target, a), "val": (a, b), "test": (b, self.n)}


@dataclass
class TrainSettings:
    epochs: int = 600
    batch_size: int = 32
    lr: float = 1e-3
    seed: int = 0


def _row_sets(ds: WindowedDataset, ranges: dict[str, tuple[int, int]]) -> dict[str, WindowedDataset]:
    out = {}
    for name, (a, b) in ranges.items():
        rows = np.nonzero((ds.target_index >= a) & (ds.target_index < b))[0]
        out[name] = ds.subset(rows)
    return out


@dataclass
class PlainModel:
    """The unconditioned network: window in, next value out."""

    params: nn.NetworkParams
    scaler: ScalerParams
    p: int

    def predict(self, values, start: int, stop: int | None = None) -> np.ndarray:
        x = np.asarray(values, dtype=np.float64)
        stop = x.size if stop is None else stop
        if start < self.p:
            raise SeriesError(f"targets before index {self.p} have no full window")
        xs = scale(x[start - self.p:stop - 1], self.scaler)
        if stop - start == 0:
            return np.zeros(0)
        windows = np.lib.stride_tricks.sliding_window_view(xs, self.p)[:stop - start]
        pred = nn.predict(self.params, windows[:, :, None])
        return unscale(pred, self.scaler)


def train_plain(config: nn.NetworkConfig, data: SeriesSplit, p: int = 3, settings: TrainSettings = TrainSettings(),
                first_target: int | None = None) -> tuple[PlainModel, nn.TrainReport]:
    first = p if first_target is None else max(p, first_target)
    scaler = fit_scaler(data.train_values)
    ds = make_windows(scale(data.values, scaler), p)
    sets = _row_sets(ds, data.ranges(first))
    config = replace(config, input_channels=1)
    params, report = nn.train(config, sets["train"], sets["val"], settings.epochs, settings.batch_size,
                              settings.seed, settings.lr)
    return PlainModel(params, scaler, p), report


@dataclass
class KinnModel:
    params: nn.NetworkParams
    expert: ExpertModel
    mode: ConditioningMode
    scaler: ScalerParams
    p: int

    def conditioned(self, values, start: int, stop: int | None = None):
        """Conditioned network inputs and scaled expert forecasts for targets ``[start, stop)``."""
        x = np.asarray(values, dtype=np.float64)
        stop = x.size if stop is None else stop
        if start < max(self.p, self.expert.min_history):
            raise SeriesError(
                f"targets before index {max(self.p, self.expert.min_history)} lack window or expert history"
            )
        e = scale(self.expert.rolling_forecast(x, start, stop), self.scaler)
        xs = scale(x[start - self.p:max(stop - 1, start - self.p)], self.scaler)
        windows = np.lib.stride_tricks.sliding_window_view(xs, self.p)[:stop - start] if stop > start else np.zeros((0, self.p))
        return condition_inputs(windows, e, self.mode), e


def kinn_forward(model: KinnModel, batch: np.ndarray, expert_preds_scaled) -> np.ndarray:
    """Fused forecast in ORIGINAL units: unscale(network(batch) + expert)."""
    e = np.asarray(expert_preds_scaled, dtype=np.float64).ravel()
    out = nn.forward(model.params, batch)
    if out.size != e.size:
        raise nn.ShapeError(f"{out.size} network outputs vs {e.size} expert predictions")
    return unscale(out + e, model.scaler)


def kinn_predict(model: KinnModel, values, start: int, stop: int | None = None) -> np.ndarray:
    """One-step-ahead fused forecasts for targets ``[start, stop)`` of ``values``."""
    x = np.asarray(values, dtype=np.float64)
    stop = x.size if stop is None else stop
    if stop == start:
        return np.zeros(0)
    ds, e = model.conditioned(x, start, stop)
    out = nn.predict(model.params, ds.inputs)
    return unscale(out + e, model.scaler)


def kinn_dataset(values, expert: ExpertModel, scaler: ScalerParams, p: int, mode: ConditioningMode,
                 first_target: int) -> tuple[WindowedDataset, np.ndarray]:
    """Residual-target dataset over every target from ``first_target`` on.

    Returns the conditioned rows (targets are ``x_t - expert_t`` in scaled
    units) and the scaled expert forecasts.
    """
    x = np.asarray(values, dtype=np.float64)
    e = scale(expert.rolling_forecast(x, first_target, x.size), scaler)
    xs = scale(x, scaler)
    base = make_windows(xs, p)
    rows = np.arange(first_target - p, x.size - p)
    base = base.subset(rows)
    ds = condition_inputs(base, e, mode)
    ds.targets = base.targets - e
    return ds, e


def kinn_train(config: nn.NetworkConfig, expert: ExpertModel, data: SeriesSplit,
               mode: ConditioningMode = ConditioningMode.STACK, p: int = 3,
               settings: TrainSettings = TrainSettings(),
               first_target: int | None = None) -> tuple[KinnModel, nn.TrainReport]:
    """Train the network on the expert's residuals; the expert must already be fitted."""
    first = max(p, expert.min_history) if first_target is None else max(p, expert.min_history, first_target)
    scaler = fit_scaler(data.train_values)
    ds, _ = kinn_dataset(data.values, expert, scaler, p, mode, first)
    sets = _row_sets(ds, data.ranges(first))
    config = replace(config, input_channels=mode.input_channels)
    params, report = nn.train(config, sets["train"], sets["val"], settings.epochs, settings.batch_size,
                              settings.seed, settings.lr)
    return KinnModel(params, expert, mode, scaler, p), report


# ---------------------------------------------------------------------------
# bundle persistence: network.ckpt, expert.json, scaler.json, manifest.json

BUNDLE_VERSION = 1


def save_bundle(model: KinnModel, directory: str | Path) -> None:
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    nn.save_checkpoint(model.params, d / "network.ckpt")
    (d / "expert.json").write_text(json.dumps(model.expert.to_dict(), indent=2, sort_keys=True) + "\n")
    (d / "scaler.json").write_text(json.dumps(model.scaler.to_dict(), indent=2, sort_keys=True) + "\n")
    manifest = {"version": BUNDLE_VERSION, "mode": model.mode.value, "p": model.p,
                "network": nn._config_to_dict(model.params.config)}
    (d / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")


def load_bundle(directory: str | Path) -> KinnModel:
    d = Path(directory)
    try:
        manifest = json.loads((d / "manifest.json").read_text())
        expert = expert_from_dict(json.loads((d / "expert.json").read_text()))
        scaler = ScalerParams(**json.loads((d / "scaler.json").read_text()))
    except FileNotFoundError as exc:
        raise BundleError(f"incomplete bundle at {d}: {exc.filename} missing") from exc
    if manifest.get("version") != BUNDLE_VERSION:
        raise BundleError(f"bundle version {manifest.get('version')} unsupported")
    params = nn.load_checkpoint(d / "network.ckpt")
    return KinnModel(params, expert, ConditioningMode(manifest["mode"]), scaler, int(manifest["p"]))
