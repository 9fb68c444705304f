# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled inner loops. ``_kernels_py`` holds the matching pure-Python code."""

import numpy as np
cimport numpy as cnp
from libc.math cimport NAN

cnp.import_array()


def css_filter(w, ar_lags, ar_coefs, ma_lags, ma_coefs, double mu, Py_ssize_t start):
    cdef const double[::1] wv = np.ascontiguousarray(w, dtype=np.float64)
    cdef const Py_ssize_t[::1] arl = np.ascontiguousarray(ar_lags, dtype=np.intp)
    cdef const double[::1] arc = np.ascontiguousarray(ar_coefs, dtype=np.float64)
    cdef const Py_ssize_t[::1] mal = np.ascontiguousarray(ma_lags, dtype=np.intp)
    cdef const double[::1] mac = np.ascontiguousarray(ma_coefs, dtype=np.float64)
    cdef Py_ssize_t n = wv.shape[0]
    cdef Py_ssize_t n_ar = arl.shape[0], n_ma = mal.shape[0]
    e_arr = np.zeros(n)
    pred_arr = np.full(n + 1, np.nan)
    cdef double[::1] e = e_arr
    cdef double[::1] pred = pred_arr
    cdef double css = _css_loop(wv, arl, arc, mal, mac, mu, start, e, pred)
    return e_arr, pred_arr, css


def css_value(w, ar_lags, ar_coefs, ma_lags, ma_coefs, double mu, Py_ssize_t start):
    cdef const double[::1] wv = np.ascontiguousarray(w, dtype=np.float64)
    cdef Py_ssize_t n = wv.shape[0]
    e_arr = np.zeros(n)
    pred_arr = np.empty(n + 1)
    return _css_loop(wv,
                     np.ascontiguousarray(ar_lags, dtype=np.intp),
                     np.ascontiguousarray(ar_coefs, dtype=np.float64),
                     np.ascontiguousarray(ma_lags, dtype=np.intp),
                     np.ascontiguousarray(ma_coefs, dtype=np.float64),
                     mu, start, e_arr, pred_arr)


cdef double _css_loop(const double[::1] w, const Py_ssize_t[::1] arl, const double[::1] arc,
                      const Py_ssize_t[::1] mal, const double[::1] mac, double mu,
                      Py_ssize_t start, double[::1] e, double[::1] pred) noexcept nogil:
    cdef Py_ssize_t n = w.shape[0]
    cdef Py_ssize_t n_ar = arl.shape[0], n_ma = mal.shape[0]
    cdef Py_ssize_t t, k, lag
    cdef double acc, r, css = 0.0
    for t in range(start):
        pred[t] = NAN
    for t in range(start, n + 1):
        acc = mu
        for k in range(n_ar):
            acc += arc[k] * (w[t - arl[k]] - mu)
        for k in range(n_ma):
            lag = t - mal[k]
            if lag >= 0:
                acc += mac[k] * e[lag]
        pred[t] = acc
        if t < n:
            r = w[t] - acc
            e[t] = r
            css += r * r
    return css


def durbin_levinson(rho):
    cdef const double[::1] r = np.ascontiguousarray(rho, dtype=np.float64)
    cdef Py_ssize_t K = r.shape[0] - 1
    out_arr = np.empty(K + 1)
    cdef double[::1] out = out_arr
    cdef double[::1] phi = np.zeros(K + 1)
    cdef double[::1] prev = np.zeros(K + 1)
    cdef double v = 1.0, num, a
    cdef Py_ssize_t k, j
    out[0] = 1.0
    for k in range(1, K + 1):
        num = r[k]
        for j in range(1, k):
            num -= prev[j] * r[k - j]
        if v <= 0.0:
            for j in range(k, K + 1):
                out[j] = NAN
            break
        a = num / v
        phi[k] = a
        for j in range(1, k):
            phi[j] = prev[j] - a * prev[k - j]
        v *= 1.0 - a * a
        out[k] = a
        for j in range(k + 1):
            prev[j] = phi[j]
    return out_arr

