"""The seven experiment rows: plain network vs. expert vs. fused model.

Pipeline per row: load and aggregate the series, split 70/10/20, keep the
most recent fraction of the training split, fit (and possibly degrade) the
expert, train the plain network and the fused model, and score all three on
the untouched test split in original units.
"""

from __future__ import annotations

import csv
import json
import logging
import math
import traceback
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from . import nn, svg
from .config import RunConfig
from .experts import (
    ExpertModel,
    FitOptions,
    SarimaConfig,
    SarimaModel,
    decorate,
    fit_sarima,
    seasonal_naive,
    simulate_arma,
)
from .residual import (
    ConditioningMode,
    KinnModel,
    PlainModel,
    SeriesSplit,
    TrainSettings,
    kinn_predict,
    kinn_train,
    train_plain,
)
from .timeseries import SplitSpec, TimeSeries, aggregate, load_csv, split

logger = logging.getLogger(__name__)

RESULTS_SCHEMA_VERSION = 1

# Reference MSEs (nn, expert, kinn) per row on a real traffic-flow series: metadata only, never thresholds.
REFERENCE_TABLE = {
    "1": (5.90, 1.24, 0.74),
    "2a": (6.36, 1.52, 0.89),
    "2b": (6.68, 2.67, 1.53),
    "3": (5.90, 7.81, 3.09),
    "4": (6.68, 7.81, 3.73),
    "5a": (5.90, 621.00, 5.92),
    "5b": (5.90, 9.04, 5.91),
}

CSV_COLUMNS = ["experiment", "row", "description", "train_pct", "mse_nn", "mse_expert", "mse_kinn"]


@dataclass(frozen=True)
class SyntheticSpec:
    """Seasonal traffic-like series: rectified sinusoid plus level-scaled AR(1) noise.

    ``texture`` adds a fixed, seeded intra-season pattern (repeatable fine
    structure that a short window cannot see but a seasonal model can) and
    ``capacity`` softly saturates the flow at ``capacity * amplitude``.
    Both are disabled by 0.
    """

    length: int = 8000
    season: int = 48
    amplitude: float = 12.0
    ar_coef: float = 0.9
    noise_std: float = 0.7
    peak_variance: float = 3.0
    seed: int = 0
    interval: float = 1800.0
    texture: float = 0.3
    capacity: float = 1.0


def generate_synthetic(spec: SyntheticSpec) -> TimeSeries:
    """``x_t = sat(max(0, L_t + noise_std * (1 + peak_variance * b_t) * z_t))``

    with ``b_t = max(0, sin(2 pi (t mod s) / s))``, the level
    ``L_t = amplitude * (b_t + texture * u_(t mod s) * (0.5 + b_t))`` for a seeded
    pattern ``u`` uniform on [-1, 1], ``z`` a unit-variance AR(1) process and
    ``sat(y) = C tanh(y / C)`` with ``C = capacity * amplitude``.
    With ``noise_std = 0`` the series is exactly periodic.
    """
    t = np.arange(spec.length)
    phase = t % spec.season
    base = np.maximum(0.0, np.sin(2.0 * np.pi * phase / spec.season))
    rng = np.random.default_rng(spec.seed)
    pattern = rng.uniform(-1.0, 1.0, spec.season)
    level = spec.amplitude * (base + spec.texture * pattern[phase] * (0.5 + base))
    x = level
    if spec.noise_std > 0.0:
        eps = rng.standard_normal(spec.length + 100)
        z = np.empty_like(eps)
        z[0] = eps[0]
        innov = math.sqrt(1.0 - spec.ar_coef ** 2)
        for i in range(1, eps.size):
            z[i] = spec.ar_coef * z[i - 1] + innov * eps[i]
        x = level + spec.noise_std * (1.0 + spec.peak_variance * base) * z[100:]
    x = np.maximum(x, 0.0)
    cap = spec.capacity * spec.amplitude
    if cap > 0.0:
        x = cap * np.tanh(x / cap)
    return TimeSeries(x, spec.interval)


def load_dataset(cfg: RunConfig) -> TimeSeries:
    """The (aggregated) series described by the dataset section."""
    d = cfg.dataset
    if d.kind == "synthetic":
        ts = generate_synthetic(SyntheticSpec(d.length, d.season, d.amplitude, d.ar_coef, d.noise_std,
                                              d.peak_variance, d.seed, d.interval, d.texture, d.capacity))
    elif d.kind == "arma":
        ts = simulate_arma(d.ar, d.ma, d.intercept, d.length, d.noise_std, d.seed, d.interval)
    else:
        ts = load_csv(d.path, d.time_column, d.value_column, d.fill)
    if d.bucket is not None and d.bucket != ts.interval:
        ts = aggregate(ts, d.bucket)
    return ts


def split_spec(cfg: RunConfig) -> SplitSpec:
    d = cfg.dataset
    return SplitSpec(d.train_fraction, d.val_fraction, d.test_fraction)


@dataclass(frozen=True)
class ExperimentSpec:
    id: int
    row: str
    description: str
    data_fraction: float
    expert_kind: str  # fitted | noisy | zero | lagged


def table_specs(cfg: RunConfig, ids: Sequence[int] | None = None) -> list[ExperimentSpec]:
    """Experiment rows for the requested ids (experiments 2 and 5 have sub-rows)."""
    x = cfg.experiment
    ids = x.ids if ids is None else ids
    specs = []
    for i in sorted(set(ids)):
        if i == 1:
            specs.append(ExperimentSpec(1, "1", "Full training set and accurate expert", 1.0, "fitted"))
        elif i == 2:
            for j, f in enumerate(x.reduced_fractions):
                specs.append(ExperimentSpec(2, f"2{chr(ord('a') + j)}",
                                            f"Reduced training set ({f * 100:g}%) and accurate expert", f, "fitted"))
        elif i == 3:
            specs.append(ExperimentSpec(3, "3", "Full training set and noisy expert", 1.0, "noisy"))
        elif i == 4:
            f = x.noisy_reduced_fraction
            specs.append(ExperimentSpec(4, "4", f"Reduced training set ({f * 100:g}%) and noisy expert", f, "noisy"))
        elif i == 5:
            specs.append(ExperimentSpec(5, "5a", "Full training set and zero expert prediction", 1.0, "zero"))
            specs.append(ExperimentSpec(5, "5b", "Full training set and delayed expert prediction", 1.0, "lagged"))
        else:
            raise ValueError(f"unknown experiment id {i}")
    return specs


@dataclass
class ExperimentResult:
    id: int
    row: str
    description: str
    data_fraction: float
    expert_kind: str
    status: str = "ok"
    error: str | None = None
    mse_nn: float = math.nan
    mse_expert: float = math.nan
    mse_kinn: float = math.nan
    exceed_vs_expert: float = math.nan
    exceed_vs_nn: float = math.nan
    near_tie_vs_expert: float = math.nan
    near_tie_vs_nn: float = math.nan
    epochs_to_best_nn: int = -1
    epochs_to_best_kinn: int = -1
    test_index: list = field(default_factory=list)
    truth: list = field(default_factory=list)
    pred_nn: list = field(default_factory=list)
    pred_expert: list = field(default_factory=list)
    pred_kinn: list = field(default_factory=list)
    err_nn: list = field(default_factory=list)
    err_expert: list = field(default_factory=list)
    err_kinn: list = field(default_factory=list)
    report_nn: dict = field(default_factory=dict)
    report_kinn: dict = field(default_factory=dict)
    expert_fit: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return dict(self.__dict__)

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentResult":
        return cls(**d)


def stepwise_analysis(err_model: Sequence[float], err_other: Sequence[float], threshold: float = 1.5) -> dict:
    """Fraction of steps where the model's absolute error strictly exceeds the
    comparator's, and fraction where the two differ by less than ``threshold``."""
    a = np.asarray(err_model, dtype=np.float64)
    b = np.asarray(err_other, dtype=np.float64)
    if a.shape != b.shape:
        raise ValueError(f"error series lengths differ: {a.size} vs {b.size}")
    if a.size == 0:
        raise ValueError("empty error series")
    return {
        "exceed": int(np.count_nonzero(a > b)) / a.size,
        "near_tie": int(np.count_nonzero(np.abs(a - b) < threshold)) / a.size,
    }


def _mse(pred: np.ndarray, truth: np.ndarray) -> float:
    d = pred - truth
    return float(np.dot(d, d) / d.size)


def _settings(cfg: RunConfig) -> TrainSettings:
    n = cfg.network
    return TrainSettings(n.epochs, n.batch_size, n.learning_rate, n.seed)


def network_config(cfg: RunConfig, channels: int = 1) -> nn.NetworkConfig:
    n = cfg.network
    return nn.NetworkConfig(channels, tuple(n.widths), None if n.activations is None else tuple(n.activations), n.seed)


def fit_expert(cfg: RunConfig, train_values: np.ndarray) -> ExpertModel:
    e = cfg.expert
    if e.kind == "seasonal_naive":
        return seasonal_naive(e.s)
    return fit_sarima(train_values, SarimaConfig(e.p, e.d, e.q, e.P, e.D, e.Q, e.s),
                      FitOptions(e.max_iterations, e.tolerance))


def working_split(cfg: RunConfig, series: TimeSeries, data_fraction: float) -> SeriesSplit:
    """Split 70/10/20 and keep only the most recent ``data_fraction`` of train."""
    train, val, test = split(series, split_spec(cfg))
    keep = max(1, int(math.floor(len(train) * data_fraction + 1e-9)))
    return SeriesSplit.from_splits(train.slice(len(train) - keep), val, test)


class _Cache:
    """Per-process memo of the fitted expert and plain network for each data fraction."""

    def __init__(self):
        self.experts: dict[float, ExpertModel] = {}
        self.plain: dict[float, tuple[PlainModel, nn.TrainReport]] = {}


def run_experiment(spec: ExperimentSpec, cfg: RunConfig, series: TimeSeries | None = None,
                   cache: _Cache | None = None) -> ExperimentResult:
    res = ExperimentResult(spec.id, spec.row, spec.description, spec.data_fraction, spec.expert_kind)
    try:
        _run(spec, cfg, series, cache or _Cache(), res)
    except Exception as exc:  # isolate failures per row
        logger.error("experiment %s failed: %s", spec.row, exc)
        res.status = "failed"
        res.error = f"{type(exc).__name__}: {exc}"
        logger.debug(traceback.format_exc())
    return res


def _run(spec: ExperimentSpec, cfg: RunConfig, series: TimeSeries | None, cache: _Cache,
         res: ExperimentResult) -> None:
    series = load_dataset(cfg) if series is None else series
    data = working_split(cfg, series, spec.data_fraction)
    p = cfg.network.window
    settings = _settings(cfg)

    base = cache.experts.get(spec.data_fraction)
    if base is None:
        base = fit_expert(cfg, data.train_values)
        cache.experts[spec.data_fraction] = base
    if isinstance(base, SarimaModel):
        res.expert_fit = dict(base.fit_metadata, **base.to_dict())
        res.expert_fit.pop("fit_metadata", None)
    # all three models are scored on targets where the undegraded expert has history
    first = max(p, base.min_history)

    e = cfg.expert
    if spec.expert_kind == "fitted":
        expert = base
    elif spec.expert_kind == "noisy":
        amplitude = float(np.std(data.train_values))
        expert = decorate(base, "noisy", amplitude=amplitude, seed=e.noise_seed, distribution=e.noise_distribution)
    elif spec.expert_kind == "zero":
        expert = decorate(base, "zero")
    elif spec.expert_kind == "lagged":
        expert = decorate(base, "lagged", k=e.lag)
    else:
        raise ValueError(f"unknown expert kind {spec.expert_kind!r}")

    plain = cache.plain.get(spec.data_fraction)
    if plain is None:
        logger.info("[%s] training plain network", spec.row)
        plain = train_plain(network_config(cfg), data, p, settings, first_target=first)
        cache.plain[spec.data_fraction] = plain
    plain_model, plain_report = plain

    logger.info("[%s] training fused model", spec.row)
    mode = ConditioningMode(cfg.kinn.mode)
    kinn_model, kinn_report = kinn_train(network_config(cfg), expert, data, mode, p, settings, first_target=first)

    a, b = data.ranges(first)["test"]
    truth = data.values[a:b]
    pred_nn = plain_model.predict(data.values, a, b)
    pred_expert = expert.rolling_forecast(data.values, a, b)
    pred_kinn = kinn_predict(kinn_model, data.values, a, b)
    err_nn, err_expert, err_kinn = (np.abs(v - truth) for v in (pred_nn, pred_expert, pred_kinn))
    thr = cfg.experiment.stepwise_threshold
    vs_expert = stepwise_analysis(err_kinn, err_expert, thr)
    vs_nn = stepwise_analysis(err_kinn, err_nn, thr)

    res.mse_nn = _mse(pred_nn, truth)
    res.mse_expert = _mse(pred_expert, truth)
    res.mse_kinn = _mse(pred_kinn, truth)
    res.exceed_vs_expert, res.near_tie_vs_expert = vs_expert["exceed"], vs_expert["near_tie"]
    res.exceed_vs_nn, res.near_tie_vs_nn = vs_nn["exceed"], vs_nn["near_tie"]
    res.epochs_to_best_nn = plain_report.best_epoch
    res.epochs_to_best_kinn = kinn_report.best_epoch
    res.test_index = list(range(a, b))
    res.truth = truth.tolist()
    res.pred_nn, res.pred_expert, res.pred_kinn = pred_nn.tolist(), pred_expert.tolist(), pred_kinn.tolist()
    res.err_nn, res.err_expert, res.err_kinn = err_nn.tolist(), err_expert.tolist(), err_kinn.tolist()
    res.report_nn = plain_report.to_dict()
    res.report_kinn = kinn_report.to_dict()
    logger.info("[%s] mse nn %.4f expert %.4f kinn %.4f", spec.row, res.mse_nn, res.mse_expert, res.mse_kinn)


def _run_group(args) -> list[ExperimentResult]:
    specs, cfg = args
    series = load_dataset(cfg)
    cache = _Cache()
    return [run_experiment(s, cfg, series, cache) for s in specs]


def run_all(cfg: RunConfig, specs: Sequence[ExperimentSpec], jobs: int = 1) -> list[ExperimentResult]:
    """Run rows in order. With ``jobs > 1`` rows sharing a data fraction run in
    one worker process, so each worker reuses its fitted expert and plain network."""
    if jobs <= 1:
        return _run_group((list(specs), cfg))
    from concurrent.futures import ProcessPoolExecutor

    groups: dict[float, list[ExperimentSpec]] = {}
    for s in specs:
        groups.setdefault(s.data_fraction, []).append(s)
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        done = list(pool.map(_run_group, [(g, cfg) for g in groups.values()]))
    by_row = {r.row: r for group in done for r in group}
    return [by_row[s.row] for s in specs]


# ---------------------------------------------------------------------------
# output files

def _fmt(v: float) -> str:
    return repr(float(v))


def write_results(results: Sequence[ExperimentResult], out_dir: str | Path, plots: bool = True) -> list[Path]:
    """results.csv, results.json, predictions-<row>.csv and (optionally) SVG plots."""
    if not results:
        raise ValueError("no results to write")
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written = []
    with open(out / "results.csv", "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(CSV_COLUMNS)
        for r in results:
            w.writerow([r.id, r.row, r.description, f"{r.data_fraction * 100:g}", _fmt(r.mse_nn),
                        _fmt(r.mse_expert), _fmt(r.mse_kinn)])
    written.append(out / "results.csv")
    doc = {
        "schema_version": RESULTS_SCHEMA_VERSION,
        "reference_table": {k: dict(zip(("mse_nn", "mse_expert", "mse_kinn"), v)) for k, v in REFERENCE_TABLE.items()},
        "results": [r.to_dict() for r in results],
    }
    (out / "results.json").write_text(json.dumps(doc, indent=1, sort_keys=True) + "\n", encoding="utf-8")
    written.append(out / "results.json")
    for r in results:
        if r.status != "ok":
            continue
        path = out / f"predictions-{r.row}.csv"
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["t", "truth", "nn", "expert", "kinn"])
            for row in zip(r.test_index, r.truth, r.pred_nn, r.pred_expert, r.pred_kinn):
                w.writerow([row[0]] + [_fmt(v) for v in row[1:]])
        written.append(path)
        if plots:
            written.extend(plot_result(r, out))
    return written


def load_results(out_dir: str | Path) -> list[ExperimentResult]:
    path = Path(out_dir) / "results.json"
    doc = json.loads(path.read_text(encoding="utf-8"))
    if doc.get("schema_version") != RESULTS_SCHEMA_VERSION:
        raise ValueError(f"{path}: unsupported schema version {doc.get('schema_version')}")
    return [ExperimentResult.from_dict(d) for d in doc["results"]]


def plot_result(r: ExperimentResult, out_dir: str | Path, steps: int | None = 100) -> list[Path]:
    """Prediction overlay and step-wise absolute error chart over the first ``steps`` test targets."""
    out = Path(out_dir)
    n = len(r.test_index) if steps is None else min(steps, len(r.test_index))
    x = r.test_index[:n]
    pred_path = out / f"predictions-{r.row}.svg"
    svg.line_chart(pred_path, f"Experiment {r.row}: predictions", x,
                   [("truth", r.truth[:n]), ("NN", r.pred_nn[:n]), ("expert", r.pred_expert[:n]), ("KINN", r.pred_kinn[:n])],
                   "test step", "value")
    err_path = out / f"errors-{r.row}.svg"
    svg.line_chart(err_path, f"Experiment {r.row}: step-wise absolute error", x,
                   [("NN", r.err_nn[:n]), ("expert", r.err_expert[:n]), ("KINN", r.err_kinn[:n])],
                   "test step", "absolute error")
    return [pred_path, err_path]


def summary_table(results: Sequence[ExperimentResult]) -> str:
    header = CSV_COLUMNS
    rows = [[str(r.id), r.row, r.description, f"{r.data_fraction * 100:g}",
             f"{r.mse_nn:.4f}", f"{r.mse_expert:.4f}", f"{r.mse_kinn:.4f}"] for r in results]
    widths = [max(len(h), *(len(row[i]) for row in rows)) for i, h in enumerate(header)]
    lines = ["  ".join(h.ljust(w) for h, w in zip(header, widths))]
    lines.append("  ".join("-" * w for w in widths))
    lines += ["  ".join(c.ljust(w) for c, w in zip(row, widths)) for row in rows]
    for r in results:
        if r.status != "ok":
            lines.append(f"row {r.row} FAILED: {r.error}")
    return "\n".join(lines)
