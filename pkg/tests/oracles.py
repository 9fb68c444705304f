"""Independent reference computations used by the unit and acceptance tests."""

import numpy as np

from kinn import nn


def finite_difference_grad(params: nn.NetworkParams, batch, targets, h: float = 1e-5) -> np.ndarray:
    """Central differences of the batch MSE with respect to every parameter."""
    work = params.copy()
    flat = work.flat
    out = np.empty_like(flat)
    for i in range(flat.size):
        keep = flat[i]
        flat[i] = keep + h
        up = nn.mse_loss(nn.forward(work, batch), targets)
        flat[i] = keep - h
        down = nn.mse_loss(nn.forward(work, batch), targets)
        flat[i] = keep
        out[i] = (up - down) / (2.0 * h)
    return out


def max_relative_error(analytic: np.ndarray, numeric: np.ndarray, floor: float = 1e-6) -> float:
    """Largest elementwise ``|a - n| / max(|a|, |n|, floor)``.

    The floor keeps entries whose true gradient is essentially zero from
    dividing rounding noise by nothing.
    """
    a = np.asarray(analytic, dtype=np.float64)
    n = np.asarray(numeric, dtype=np.float64)
    scale = np.maximum(np.maximum(np.abs(a), np.abs(n)), floor)
    return float(np.max(np.abs(a - n) / scale))


def random_gradcheck_case(seed: int):
    """A small random network, batch and targets (widths <= 4, p <= 4, B <= 8)."""
    rng = np.random.default_rng(seed)
    n_layers = int(rng.integers(1, 3))
    widths = tuple(int(w) for w in rng.integers(1, 5, size=n_layers))
    channels = int(rng.integers(1, 3))
    p = int(rng.integers(1, 5))
    B = int(rng.integers(1, 9))
    acts = tuple(rng.choice(["sigmoid", "tanh", "linear", "relu"], size=n_layers))
    config = nn.NetworkConfig(channels, widths, acts, seed=seed)
    params = nn.init_params(config)
    # move away from the initialization so every gate and bias path is exercised
    params.flat[:] += rng.normal(0.0, 0.3, size=params.flat.size)
    batch = rng.normal(size=(B, p, channels))
    targets = rng.normal(size=B)
    return params, batch, targets


def regression_pacf(x, max_lag: int) -> np.ndarray:
    """PACF as the last least-squares coefficient of the lag-k autoregression.

    The regression runs on the demeaned series padded with zeros at both
    ends, whose normal equations are exactly the Toeplitz system built from
    the biased sample autocovariances.
    """
    x = np.asarray(x, dtype=np.float64) - np.mean(x)
    n = x.size
    out = [1.0]
    for k in range(1, max_lag + 1):
        padded = np.concatenate([np.zeros(k), x, np.zeros(k)])
        rows = n + k
        y = padded[k:k + rows]
        X = np.column_stack([padded[k - j:k - j + rows] for j in range(1, k + 1)])
        coef, *_ = np.linalg.lstsq(X, y, rcond=None)
        out.append(coef[-1])
    return np.array(out)


def plain_regression_pacf(x, max_lag: int) -> np.ndarray:
    """Textbook PACF: OLS of x_t on an intercept and x_{t-1..t-k}, last coefficient."""
    x = np.asarray(x, dtype=np.float64)
    out = [1.0]
    for k in range(1, max_lag + 1):
        y = x[k:]
        X = np.column_stack([np.ones(y.size)] + [x[k - j:x.size - j] for j in range(1, k + 1)])
        coef, *_ = np.linalg.lstsq(X, y, rcond=None)
        out.append(coef[-1])
    return np.array(out)


def brute_force_exceedance(err_model, err_other) -> float:
    count = 0
    for a, b in zip(err_model, err_other):
        if a > b:
            count += 1
    return count / len(err_model)


class TrueTargetExpert:
    """An expert that knows the series it is scored on: forecasts are the true targets."""

    min_history = 0

    def __init__(self, values):
        self.values = np.asarray(values, dtype=np.float64)

    def predict_one(self, history) -> float:
        return float(self.values[len(history)])

    def rolling_forecast(self, series, start, stop=None):
        stop = len(self.values) if stop is None else stop
        return self.values[start:stop].copy()

    def to_dict(self) -> dict:
        return {"kind": "true_target"}
