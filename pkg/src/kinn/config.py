"""Run configuration: a YAML file of sections, every key optional.

Unknown sections or keys and out-of-range values are rejected by
:func:`load_config` before anything is computed.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import yaml


class ConfigError(ValueError):
    pass


@dataclass
class DatasetConfig:
    kind: str = "synthetic"  # synthetic | arma | csv
    # synthetic generator
    length: int = 8000
    season: int = 48
    amplitude: float = 12.0
    ar_coef: float = 0.9
    noise_std: float = 0.7
    peak_variance: float = 3.0
    texture: float = 0.3
    capacity: float = 1.0
    seed: int = 0
    # arma simulator
    ar: list = field(default_factory=lambda: [0.8])
    ma: list = field(default_factory=list)
    intercept: float = 0.0
    # csv ingestion
    path: str | None = None
    time_column: str = "timestamp"
    value_column: str = "value"
    fill: str | None = None
    # base sampling interval of generated data and aggregation bucket, seconds
    interval: float = 1800.0
    bucket: float | None = None
    train_fraction: float = 0.7
    val_fraction: float = 0.1
    test_fraction: float = 0.2


@dataclass
class ExpertConfig:
    kind: str = "sarima"  # sarima | seasonal_naive
    p: int = 1
    d: int = 0
    q: int = 1
    P: int = 0
    D: int = 1
    Q: int = 1
    s: int = 48
    max_iterations: int = 2000
    tolerance: float = 1e-8
    noise_distribution: str = "uniform"
    noise_seed: int = 1
    lag: int = 1


@dataclass
class NetworkSection:
    widths: list = field(default_factory=lambda: [64, 64, 64])
    activations: list | None = None
    window: int = 3
    epochs: int = 600
    batch_size: int = 32
    learning_rate: float = 1e-3
    seed: int = 0


@dataclass
class KinnSection:
    mode: str = "stack"  # stack | append


@dataclass
class ExperimentSection:
    ids: list = field(default_factory=lambda: [1, 2, 3, 4, 5])
    reduced_fractions: list = field(default_factory=lambda: [0.5, 0.1])
    noisy_reduced_fraction: float = 0.1
    stepwise_threshold: float = 1.5


@dataclass
class RunConfig:
    dataset: DatasetConfig = field(default_factory=DatasetConfig)
    expert: ExpertConfig = field(default_factory=ExpertConfig)
    network: NetworkSection = field(default_factory=NetworkSection)
    kinn: KinnSection = field(default_factory=KinnSection)
    experiment: ExperimentSection = field(default_factory=ExperimentSection)
    output_dir: str = "out"

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)


_SECTIONS = {
    "dataset": DatasetConfig,
    "expert": ExpertConfig,
    "network": NetworkSection,
    "kinn": KinnSection,
    "experiment": ExperimentSection,
}


def _coerce(value: Any, default: Any, where: str) -> Any:
    if value is None:
        return None
    if isinstance(default, bool):
        if not isinstance(value, bool):
            raise ConfigError(f"{where}: expected true/false, got {value!r}")
        return value
    if isinstance(default, int) and not isinstance(default, bool):
        if isinstance(value, bool) or not isinstance(value, int):
            if isinstance(value, float) and value.is_integer():
                return int(value)
            raise ConfigError(f"{where}: expected an integer, got {value!r}")
        return value
    if isinstance(default, float):
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(f"{where}: expected a number, got {value!r}")
        return float(value)
    if isinstance(default, list) and not isinstance(value, list):
        raise ConfigError(f"{where}: expected a list, got {value!r}")
    return value


def _build(cls, data: dict, section: str):
    if not isinstance(data, dict):
        raise ConfigError(f"[{section}] must be a mapping")
    obj = cls()
    names = {f.name for f in dataclasses.fields(cls)}
    for key, value in data.items():
        if key not in names:
            raise ConfigError(f"unknown key {section}.{key}")
        setattr(obj, key, _coerce(value, getattr(obj, key), f"{section}.{key}"))
    return obj


def config_from_dict(data: dict | None) -> RunConfig:
    data = dict(data or {})
    cfg = RunConfig()
    for key, value in data.items():
        if key == "output_dir":
            cfg.output_dir = str(value)
        elif key in _SECTIONS:
            setattr(cfg, key, _build(_SECTIONS[key], value or {}, key))
        else:
            raise ConfigError(f"unknown section {key!r}")
    validate(cfg)
    return cfg


def load_config(path: str | Path | None, overrides: list[str] | None = None) -> RunConfig:
    """Read ``path`` (or defaults when None) and apply ``section.key=value`` overrides."""
    data: dict = {}
    if path is not None:
        try:
            text = Path(path).read_text(encoding="utf-8")
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        try:
            data = yaml.safe_load(text) or {}
        except yaml.YAMLError as exc:
            raise ConfigError(f"{path}: invalid YAML ({exc})") from exc
        if not isinstance(data, dict):
            raise ConfigError(f"{path}: top level must be a mapping")
    for item in overrides or []:
        if "=" not in item:
            raise ConfigError(f"override {item!r} is not section.key=value")
        dotted, raw = item.split("=", 1)
        value = yaml.safe_load(raw)
        if dotted == "output_dir":
            data["output_dir"] = value
            continue
        if "." not in dotted:
            raise ConfigError(f"override {item!r} is not section.key=value")
        section, key = dotted.split(".", 1)
        data.setdefault(section, {})
        if not isinstance(data[section], dict):
            raise ConfigError(f"[{section}] must be a mapping")
        data[section][key] = value
    return config_from_dict(data)


def validate(cfg: RunConfig) -> None:
    d, e, n, k, x = cfg.dataset, cfg.expert, cfg.network, cfg.kinn, cfg.experiment

    def need(cond, msg):
        if not cond:
            raise ConfigError(msg)

    need(d.kind in ("synthetic", "arma", "csv"), f"dataset.kind must be synthetic, arma or csv, not {d.kind!r}")
    need(d.length > 0, "dataset.length must be positive")
    need(d.season >= 1, "dataset.season must be >= 1")
    need(min(d.amplitude, d.noise_std, d.peak_variance, d.texture, d.capacity) >= 0,
         "dataset amplitude, noise_std, peak_variance, texture and capacity must be non-negative")
    need(abs(d.ar_coef) < 1, "dataset.ar_coef must lie in (-1, 1)")
    need(d.interval > 0, "dataset.interval must be positive")
    need(d.bucket is None or d.bucket > 0, "dataset.bucket must be positive")
    need(d.fill in (None, "forward"), "dataset.fill must be null or 'forward'")
    for f in (d.train_fraction, d.val_fraction, d.test_fraction):
        need(0 < f < 1, "split fractions must lie in (0, 1)")
    need(abs(d.train_fraction + d.val_fraction + d.test_fraction - 1) <= 1e-9, "split fractions must sum to 1")
    if d.kind == "csv":
        need(d.path is not None, "dataset.path is required for csv data")
        need(Path(d.path).is_file(), f"dataset.path {d.path} does not exist")

    need(e.kind in ("sarima", "seasonal_naive"), f"expert.kind must be sarima or seasonal_naive, not {e.kind!r}")
    for name in ("p", "d", "q", "P", "D", "Q"):
        need(getattr(e, name) >= 0, f"expert.{name} must be non-negative")
    need(e.s >= 1, "expert.s must be >= 1")
    need(e.max_iterations >= 1, "expert.max_iterations must be >= 1")
    need(e.tolerance > 0, "expert.tolerance must be positive")
    need(e.noise_distribution in ("uniform", "gaussian"), "expert.noise_distribution must be uniform or gaussian")
    need(e.lag >= 1, "expert.lag must be >= 1")

    need(len(n.widths) >= 1 and all(isinstance(w, int) and w > 0 for w in n.widths),
         "network.widths must be a non-empty list of positive integers")
    need(n.activations is None or len(n.activations) == len(n.widths),
         "network.activations must match network.widths in length")
    need(n.window >= 1, "network.window must be >= 1")
    need(n.epochs >= 0, "network.epochs must be >= 0")
    need(n.batch_size >= 1, "network.batch_size must be >= 1")
    need(n.learning_rate > 0, "network.learning_rate must be positive")

    need(k.mode in ("stack", "append"), "kinn.mode must be stack or append")

    need(all(i in (1, 2, 3, 4, 5) for i in x.ids), "experiment.ids must be drawn from 1..5")
    need(all(0 < f <= 1 for f in x.reduced_fractions), "experiment.reduced_fractions must lie in (0, 1]")
    need(0 < x.noisy_reduced_fraction <= 1, "experiment.noisy_reduced_fraction must lie in (0, 1]")
    need(x.stepwise_threshold >= 0, "experiment.stepwise_threshold must be non-negative")


def dump_config(cfg: RunConfig) -> str:
    return yaml.safe_dump(cfg.to_dict(), sort_keys=False)
