"""Expert forecasters: seasonal ARIMA fit by conditional sum of squares,
seasonal-naive persistence, degraded-expert decorators and an ARMA simulator.

Every expert exposes ``predict_one(history)`` (one-step-ahead forecast of the
value that follows ``history``) and ``rolling_forecast(values, start, stop)``
(the same forecast for every target index in ``[start, stop)`` using the
observed values before it).
"""

from __future__ import annotations

import json
import math
import warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from . import kernels
from .simplex import nelder_mead
from .timeseries import TimeSeries


class ExpertError(ValueError):
    pass


class InsufficientHistory(ExpertError):
    pass


class NonStationaryError(ExpertError):
    pass


class ConvergenceWarning(UserWarning):
    pass


def _values(series) -> np.ndarray:
    if isinstance(series, TimeSeries):
        return series.values
    return np.asarray(series, dtype=np.float64)


class ExpertModel:
    """Base class: subclasses implement ``predict_one``; ``min_history`` bounds its input."""

    min_history: int = 0

    def predict_one(self, history: Sequence[float]) -> float:
        raise NotImplementedError

    def _check_history(self, n: int) -> None:
        if n < self.min_history:
            raise InsufficientHistory(
                f"{type(self).__name__} needs {self.min_history} past values, got {n}"
            )

    def rolling_forecast(self, series, start: int, stop: int | None = None) -> np.ndarray:
        x = _values(series)
        stop = x.size if stop is None else stop
        _check_range(x, start, stop)
        self._check_history(start)
        return np.array([self.predict_one(x[:t]) for t in range(start, stop)])

    def to_dict(self) -> dict:
        raise NotImplementedError


def _check_range(x: np.ndarray, start: int, stop: int) -> None:
    if not 0 <= start <= stop <= x.size:
        raise ExpertError(f"forecast range [{start}, {stop}) outside a series of length {x.size}")


def rolling_forecast(model: ExpertModel, full_series, start: int, stop: int | None = None) -> np.ndarray:
    """One-step-ahead forecasts for targets ``start..stop-1`` from the true history."""
    return model.rolling_forecast(full_series, start, stop)


# ---------------------------------------------------------------------------
# seasonal ARIMA

@dataclass(frozen=True)
class SarimaConfig:
    p: int = 1
    d: int = 0
    q: int = 1
    P: int = 0
    D: int = 1
    Q: int = 1
    s: int = 48

    def __post_init__(self):
        for name in ("p", "d", "q", "P", "D", "Q", "s"):
            if int(getattr(self, name)) < 0:
                raise ValueError(f"order {name} must be non-negative")
        if (self.P or self.D or self.Q) and self.s < 2:
            raise ValueError("season length s must be >= 2 when seasonal orders are used")

    @property
    def n_diff(self) -> int:
        return self.d + self.D * self.s

    @property
    def max_ar_lag(self) -> int:
        return self.p + self.P * self.s

    @property
    def max_ma_lag(self) -> int:
        return self.q + self.Q * self.s

    @property
    def min_history(self) -> int:
        return self.n_diff + max(self.max_ar_lag, self.max_ma_lag)

    @property
    def n_params(self) -> int:
        return self.p + self.q + self.P + self.Q + 1

    def validate_for(self, n: int) -> None:
        if self.n_diff + self.max_ar_lag >= n:
            raise ExpertError(f"{self} needs more than {n} training values")

    def to_dict(self) -> dict:
        return {k: int(getattr(self, k)) for k in ("p", "d", "q", "P", "D", "Q", "s")}


def difference_poly(config: SarimaConfig) -> np.ndarray:
    """Coefficients of (1-B)^d (1-B^s)^D, lowest power first."""
    poly = np.array([1.0])
    for _ in range(config.d):
        poly = np.convolve(poly, [1.0, -1.0])
    seasonal = np.zeros(config.s + 1) if config.D else None
    if seasonal is not None:
        seasonal[0], seasonal[-1] = 1.0, -1.0
        for _ in range(config.D):
            poly = np.convolve(poly, seasonal)
    return poly


def difference(x: np.ndarray, poly: np.ndarray) -> np.ndarray:
    """``w[i] = sum_k poly[k] * x[i + nd - k]``, accumulated in a fixed order."""
    nd = poly.size - 1
    n = x.size
    w = x[nd:].copy()
    for k in range(1, nd + 1):
        if poly[k] != 0.0:
            w += poly[k] * x[nd - k:n - k]
    return w


def _undifference_offset(x: np.ndarray, poly: np.ndarray, t: int) -> float:
    """``sum_{k>=1} poly[k] * x[t-k]``; ``x_t = w_t - offset``."""
    acc = 0.0
    for k in range(1, poly.size):
        if poly[k] != 0.0:
            acc += poly[k] * x[t - k]
    return acc


def _expand(nonseasonal: Sequence[float], seasonal: Sequence[float], s: int, sign: float):
    """Multiply (1 + sign*sum c_i B^i)(1 + sign*sum C_j B^{js}); return nonzero lags/coefs.

    Coefficients come back in the ``pred += coef * lagged`` convention, so AR
    terms (sign=-1) are negated back.
    """
    a = np.zeros(len(nonseasonal) + 1)
    a[0] = 1.0
    a[1:] = sign * np.asarray(nonseasonal, dtype=np.float64)
    b = np.zeros(len(seasonal) * s + 1)
    b[0] = 1.0
    for j, c in enumerate(seasonal, start=1):
        b[j * s] = sign * c
    prod = np.convolve(a, b)
    lags = np.nonzero(prod[1:])[0] + 1
    return lags.astype(np.intp), sign * prod[lags]


def _stationary(coefs: Sequence[float]) -> bool:
    """Roots of 1 - sum c_i z^i all lie outside the unit circle."""
    coefs = np.asarray(coefs, dtype=np.float64)
    if coefs.size == 0 or not np.any(coefs):
        return True
    if not np.all(np.isfinite(coefs)):
        return False
    poly = np.concatenate(([1.0], -coefs))
    roots = np.polynomial.polynomial.polyroots(poly)
    return bool(np.all(np.abs(roots) > 1.0))


@dataclass
class SarimaModel(ExpertModel):
    """Multiplicative seasonal ARIMA in mean form on the differenced series ``w``:

    ``(1 - ar(B))(1 - sar(B^s)) (w_t - intercept) = (1 + ma(B))(1 + sma(B^s)) e_t``
    """

    config: SarimaConfig
    ar: np.ndarray = field(default_factory=lambda: np.zeros(0))
    ma: np.ndarray = field(default_factory=lambda: np.zeros(0))
    sar: np.ndarray = field(default_factory=lambda: np.zeros(0))
    sma: np.ndarray = field(default_factory=lambda: np.zeros(0))
    intercept: float = 0.0
    residual_variance: float = 0.0
    fit_metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        c = self.config
        self.ar = np.asarray(self.ar, dtype=np.float64).ravel()
        self.ma = np.asarray(self.ma, dtype=np.float64).ravel()
        self.sar = np.asarray(self.sar, dtype=np.float64).ravel()
        self.sma = np.asarray(self.sma, dtype=np.float64).ravel()
        for name, arr, k in (("ar", self.ar, c.p), ("ma", self.ma, c.q), ("sar", self.sar, c.P), ("sma", self.sma, c.Q)):
            if arr.size != k:
                raise ExpertError(f"{name} has {arr.size} coefficients, config order is {k}")
        if self.residual_variance < 0:
            raise ExpertError("residual variance must be non-negative")
        self._diff = difference_poly(c)
        self._ar_lags, self._ar_coefs = _expand(self.ar, self.sar, c.s, -1.0)
        self._ma_lags, self._ma_coefs = _expand(self.ma, self.sma, c.s, 1.0)

    @property
    def min_history(self) -> int:  # type: ignore[override]
        return self.config.min_history

    @property
    def is_stationary(self) -> bool:
        return _stationary(self.ar) and _stationary(self.sar)

    def residuals(self, x) -> tuple[np.ndarray, np.ndarray, float]:
        """CSS residuals and one-step predictions on the differenced scale."""
        w = difference(_values(x), self._diff)
        return kernels.css_filter(w, self._ar_lags, self._ar_coefs, self._ma_lags, self._ma_coefs,
                                  float(self.intercept), self.config.max_ar_lag)

    def predict_one(self, history) -> float:
        x = _values(history)
        self._check_history(x.size)
        _, pred, _ = self.residuals(x)
        return float(pred[-1] - _undifference_offset(x, self._diff, x.size))

    def rolling_forecast(self, series, start: int, stop: int | None = None) -> np.ndarray:
        x = _values(series)
        stop = x.size if stop is None else stop
        _check_range(x, start, stop)
        self._check_history(start)
        if stop == start:
            return np.zeros(0)
        nd = self.config.n_diff
        # predictions for target t only use x[:t]
        _, pred, _ = self.residuals(x[:stop - 1])
        return np.array([pred[t - nd] - _undifference_offset(x, self._diff, t) for t in range(start, stop)])

    def to_dict(self) -> dict:
        return {
            "kind": "sarima",
            "config": self.config.to_dict(),
            "ar": self.ar.tolist(),
            "ma": self.ma.tolist(),
            "sar": self.sar.tolist(),
            "sma": self.sma.tolist(),
            "intercept": float(self.intercept),
            "residual_variance": float(self.residual_variance),
            "fit_metadata": dict(self.fit_metadata),
        }


@dataclass(frozen=True)
class FitOptions:
    max_iter: int = 2000
    ftol: float = 1e-8
    step: float = 0.1


def _split_params(theta: np.ndarray, c: SarimaConfig):
    i = 0
    ar = theta[i:i + c.p]; i += c.p
    ma = theta[i:i + c.q]; i += c.q
    sar = theta[i:i + c.P]; i += c.P
    sma = theta[i:i + c.Q]; i += c.Q
    return ar, ma, sar, sma, float(theta[i])


def css_objective(theta: np.ndarray, w: np.ndarray, c: SarimaConfig) -> float:
    """Conditional sum of squares on the differenced series; +inf off the stationary region."""
    ar, ma, sar, sma, mu = _split_params(theta, c)
    if not (_stationary(ar) and _stationary(sar)):
        return math.inf
    ar_lags, ar_coefs = _expand(ar, sar, c.s, -1.0)
    ma_lags, ma_coefs = _expand(ma, sma, c.s, 1.0)
    val = kernels.css_value(w, ar_lags, ar_coefs, ma_lags, ma_coefs, mu, c.max_ar_lag)
    return val if math.isfinite(val) else math.inf


def fit_sarima(train, config: SarimaConfig, opt: FitOptions = FitOptions()) -> SarimaModel:
    """Least conditional-sum-of-squares fit by Nelder-Mead.

    Coefficients start at zero and the intercept at the mean of the
    differenced series. Hitting ``max_iter`` keeps the best point found and
    sets ``fit_metadata["converged"] = False`` with a warning.
    """
    x = _values(train)
    config.validate_for(x.size)
    w = difference(x, difference_poly(config))
    mu0 = float(w.mean())
    theta0 = np.zeros(config.n_params)
    theta0[-1] = mu0
    steps = np.full(config.n_params, opt.step)
    w_std = float(w.std())
    steps[-1] = opt.step * w_std if w_std > 0 else opt.step

    res = nelder_mead(lambda th: css_objective(th, w, config), theta0, steps,
                      max_iter=opt.max_iter, ftol=opt.ftol)
    ar, ma, sar, sma, mu = _split_params(res.x, config)
    if not (_stationary(ar) and _stationary(sar)):
        raise NonStationaryError("optimum lies outside the stationary region")
    n_resid = w.size - config.max_ar_lag
    meta = {
        "css": res.fun,
        "iterations": res.iterations,
        "evaluations": res.evaluations,
        "converged": res.converged,
        "n_residuals": n_resid,
    }
    if not res.converged:
        warnings.warn(f"Nelder-Mead stopped after {res.iterations} iterations without converging",
                      ConvergenceWarning, stacklevel=2)
    model = SarimaModel(config, ar.copy(), ma.copy(), sar.copy(), sma.copy(), mu,
                        res.fun / n_resid, meta)
    model.trace = res.trace  # type: ignore[attr-defined]
    return model


# ---------------------------------------------------------------------------
# simple experts and decorators

class SeasonalNaive(ExpertModel):
    """Repeats the value one season back."""

    def __init__(self, s: int):
        if s < 1:
            raise ValueError("season length must be >= 1")
        self.s = int(s)
        self.min_history = self.s

    def predict_one(self, history) -> float:
        x = _values(history)
        self._check_history(x.size)
        return float(x[-self.s])

    def rolling_forecast(self, series, start, stop=None):
        x = _values(series)
        stop = x.size if stop is None else stop
        _check_range(x, start, stop)
        self._check_history(start)
        return x[start - self.s:stop - self.s].astype(np.float64, copy=True)

    def to_dict(self):
        return {"kind": "seasonal_naive", "s": self.s}


def seasonal_naive(s: int) -> SeasonalNaive:
    return SeasonalNaive(s)


class ZeroExpert(ExpertModel):
    """Always predicts 0; the wrapped expert is kept only for bookkeeping."""

    def __init__(self, inner: ExpertModel | None = None):
        self.inner = inner
        self.min_history = 0

    def predict_one(self, history) -> float:
        return 0.0

    def rolling_forecast(self, series, start, stop=None):
        x = _values(series)
        stop = x.size if stop is None else stop
        _check_range(x, start, stop)
        return np.zeros(stop - start)

    def to_dict(self):
        return {"kind": "zero", "inner": None if self.inner is None else self.inner.to_dict()}


class LaggedExpert(ExpertModel):
    """Returns the observed value ``k`` steps before the target."""

    def __init__(self, k: int = 1, inner: ExpertModel | None = None):
        if k < 1:
            raise ValueError("lag must be a positive integer")
        self.k = int(k)
        self.inner = inner
        self.min_history = self.k

    def predict_one(self, history) -> float:
        x = _values(history)
        self._check_history(x.size)
        return float(x[-self.k])

    def rolling_forecast(self, series, start, stop=None):
        x = _values(series)
        stop = x.size if stop is None else stop
        _check_range(x, start, stop)
        self._check_history(start)
        return x[start - self.k:stop - self.k].astype(np.float64, copy=True)

    def to_dict(self):
        return {"kind": "lagged", "k": self.k, "inner": None if self.inner is None else self.inner.to_dict()}


class NoisyExpert(ExpertModel):
    """Adds a seeded random offset to the inner expert's prediction.

    The offset for a target depends only on ``(seed, target index)``, where
    the target index is the history length, so forecasts do not depend on
    call order. ``uniform`` draws from ``[-amplitude, amplitude]``;
    ``gaussian`` draws from N(0, amplitude^2).
    """

    _CHUNK = 1024

    def __init__(self, inner: ExpertModel, amplitude: float, seed: int = 0, distribution: str = "uniform"):
        if amplitude < 0:
            raise ValueError("noise amplitude must be non-negative")
        if distribution not in ("uniform", "gaussian"):
            raise ValueError(f"unknown noise distribution {distribution!r}")
        self.inner = inner
        self.amplitude = float(amplitude)
        self.seed = int(seed)
        self.distribution = distribution
        self.min_history = inner.min_history
        self._chunks: dict[int, np.ndarray] = {}

    def offsets(self, start: int, stop: int) -> np.ndarray:
        out = np.empty(stop - start)
        for t in range(start, stop):
            c, r = divmod(t, self._CHUNK)
            chunk = self._chunks.get(c)
            if chunk is None:
                rng = np.random.default_rng([self.seed, c])
                if self.distribution == "uniform":
                    chunk = rng.uniform(-self.amplitude, self.amplitude, self._CHUNK)
                else:
                    chunk = rng.normal(0.0, self.amplitude, self._CHUNK)
                self._chunks[c] = chunk
            out[t - start] = chunk[r]
        return out

    def predict_one(self, history) -> float:
        x = _values(history)
        return self.inner.predict_one(x) + float(self.offsets(x.size, x.size + 1)[0])

    def rolling_forecast(self, series, start, stop=None):
        x = _values(series)
        stop = x.size if stop is None else stop
        return self.inner.rolling_forecast(x, start, stop) + self.offsets(start, stop)

    def to_dict(self):
        return {"kind": "noisy", "inner": self.inner.to_dict(), "amplitude": self.amplitude,
                "seed": self.seed, "distribution": self.distribution}


def decorate(inner: ExpertModel, kind: str, *, amplitude: float | None = None, seed: int = 0,
             k: int = 1, distribution: str = "uniform") -> ExpertModel:
    """Wrap ``inner`` as a degraded expert: ``noisy``, ``zero`` or ``lagged``."""
    if kind == "noisy":
        if amplitude is None:
            raise ValueError("noisy decorator needs an amplitude")
        return NoisyExpert(inner, amplitude, seed, distribution)
    if kind == "zero":
        return ZeroExpert(inner)
    if kind == "lagged":
        return LaggedExpert(k, inner)
    raise ValueError(f"unknown decorator {kind!r}")


# ---------------------------------------------------------------------------
# persistence

def expert_from_dict(d: dict | None) -> ExpertModel | None:
    if d is None:
        return None
    kind = d.get("kind")
    if kind == "sarima":
        return SarimaModel(SarimaConfig(**d["config"]), d["ar"], d["ma"], d["sar"], d["sma"],
                           float(d["intercept"]), float(d["residual_variance"]), dict(d.get("fit_metadata", {})))
    if kind == "seasonal_naive":
        return SeasonalNaive(d["s"])
    if kind == "zero":
        return ZeroExpert(expert_from_dict(d.get("inner")))
    if kind == "lagged":
        return LaggedExpert(d["k"], expert_from_dict(d.get("inner")))
    if kind == "noisy":
        return NoisyExpert(expert_from_dict(d["inner"]), d["amplitude"], d["seed"], d.get("distribution", "uniform"))
    raise ExpertError(f"unknown expert kind {kind!r}")


def save_expert(model: ExpertModel, path: str | Path) -> None:
    Path(path).write_text(json.dumps(model.to_dict(), indent=2, sort_keys=True) + "\n", encoding="utf-8")


def load_expert(path: str | Path) -> ExpertModel:
    return expert_from_dict(json.loads(Path(path).read_text(encoding="utf-8")))


# ---------------------------------------------------------------------------
# simulation

def simulate_arma(ar: Sequence[float], ma: Sequence[float], intercept: float, n: int,
                  noise_std: float = 1.0, seed: int = 0, interval: float = 1.0) -> TimeSeries:
    """Gaussian ARMA in mean form, ``x_t - mu = sum ar_i (x_{t-i} - mu) + e_t + sum ma_j e_{t-j}``.

    The first ``10 * (len(ar) + len(ma) + 1)`` samples are discarded as burn-in.
    """
    ar = np.asarray(ar, dtype=np.float64)
    ma = np.asarray(ma, dtype=np.float64)
    if not _stationary(ar):
        raise NonStationaryError(f"AR coefficients {ar.tolist()} are not stationary")
    if n < 1:
        raise ValueError("n must be positive")
    burn = 10 * (ar.size + ma.size + 1)
    total = n + burn
    rng = np.random.default_rng(seed)
    e = rng.standard_normal(total) * noise_std
    y = np.zeros(total)  # deviations from the mean
    p, q = ar.size, ma.size
    for t in range(total):
        acc = e[t]
        for i in range(min(p, t)):
            acc += ar[i] * y[t - 1 - i]
        for j in range(min(q, t)):
            acc += ma[j] * e[t - 1 - j]
        y[t] = acc
    return TimeSeries(y[burn:] + intercept, interval)
