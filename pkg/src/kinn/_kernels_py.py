"""Pure-Python reference versions of the compiled kernels in ``_kernels.pyx``.

Same signatures and the same floating-point operation order, so both
backends agree bitwise on identical inputs.
"""

import math

import numpy as np


def css_filter(w, ar_lags, ar_coefs, ma_lags, ma_coefs, mu, start):
    """Conditional ARMA filter over ``w`` with sparse lag polynomials.

    For ``t >= start``::

        pred[t] = mu + sum_k a_k (w[t - lag_k] - mu) + sum_j b_j e[t - lag_j]
        e[t] = w[t] - pred[t]

    Residuals before ``start`` are held at zero and ``pred`` there is NaN.
    ``pred`` has one extra slot holding the forecast for ``t = len(w)``.
    Returns ``(residuals, predictions, css)``.
    """
    w = np.asarray(w, dtype=np.float64)
    n = w.shape[0]
    n_ar = len(ar_lags)
    n_ma = len(ma_lags)
    ar_l = [int(v) for v in ar_lags]
    ar_c = [float(v) for v in ar_coefs]
    ma_l = [int(v) for v in ma_lags]
    ma_c = [float(v) for v in ma_coefs]
    wl = w.tolist()
    e = [0.0] * n
    pred = [math.nan] * (n + 1)
    css = 0.0
    for t in range(start, n + 1):
        acc = mu
        for k in range(n_ar):
            acc += ar_c[k] * (wl[t - ar_l[k]] - mu)
        for j in range(n_ma):
            lag = t - ma_l[j]
            if lag >= 0:
                acc += ma_c[j] * e[lag]
        pred[t] = acc
        if t < n:
            r = wl[t] - acc
            e[t] = r
            css += r * r
    return np.array(e), np.array(pred), css


def css_value(w, ar_lags, ar_coefs, ma_lags, ma_coefs, mu, start):
    return css_filter(w, ar_lags, ar_coefs, ma_lags, ma_coefs, mu, start)[2]


def durbin_levinson(rho):
    """PACF at lags ``0..K`` from autocorrelations ``rho[0..K]``."""
    rho = np.asarray(rho, dtype=np.float64)
    K = rho.shape[0] - 1
    out = np.empty(K + 1)
    out[0] = 1.0
    phi = [0.0] * (K + 1)
    prev = [0.0] * (K + 1)
    v = 1.0
    for k in range(1, K + 1):
        num = rho[k]
        for j in range(1, k):
            num -= prev[j] * rho[k - j]
        if v <= 0.0:
            out[k:] = math.nan
            break
        a = num / v
        phi[k] = a
        for j in range(1, k):
            phi[j] = prev[j] - a * prev[k - j]
        v *= 1.0 - a * a
        out[k] = a
        prev[:k + 1] = phi[:k + 1]
    return out

