import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import plain_regression_pacf, regression_pacf

from kinn.timeseries import (
    ChannelLayout,
    EmptyInputError,
    GapError,
    ScalerParams,
    SeriesError,
    SplitSpec,
    TimeSeries,
    aggregate,
    autocorrelation,
    fit_scaler,
    inverse_transform,
    load_csv,
    make_windows,
    pacf,
    pacf_band,
    split,
    transform,
    write_csv,
)


def _csv(tmp_path, rows, header="timestamp,value"):
    path = tmp_path / "data.csv"
    path.write_text(header + "\n" + "".join(r + "\n" for r in rows))
    return path


# --- TimeSeries and CSV ingestion ---------------------------------------------------


def test_timeseries_rejects_empty_and_bad_interval():
    with pytest.raises(EmptyInputError):
        TimeSeries([])
    with pytest.raises(SeriesError):
        TimeSeries([1.0], interval=0)
    with pytest.raises(SeriesError):
        TimeSeries([1.0, float("nan")])


def test_timeseries_values_are_read_only():
    ts = TimeSeries([1.0, 2.0])
    with pytest.raises(ValueError):
        ts.values[0] = 5.0


def test_load_csv_three_rows(tmp_path):
    path = _csv(tmp_path, ["2020-01-01T00:00:00,1", "2020-01-01T00:00:30,2", "2020-01-01T00:01:00,3"])
    ts = load_csv(path)
    assert ts.interval == 30.0
    assert ts.values.tolist() == [1.0, 2.0, 3.0]


def test_load_csv_numeric_timestamps(tmp_path):
    path = _csv(tmp_path, ["0,1", "30,2", "60,3"])
    assert load_csv(path).interval == 30.0


def test_load_csv_gap_reports_index(tmp_path):
    path = _csv(tmp_path, ["0,1", "30,2", "90,3", "120,4"])
    with pytest.raises(GapError) as err:
        load_csv(path)
    assert err.value.index == 2


def test_load_csv_forward_fill(tmp_path):
    path = _csv(tmp_path, ["0,1", "30,2", "90,3"])
    ts = load_csv(path, fill="forward")
    assert ts.values.tolist() == [1.0, 2.0, 2.0, 3.0]


def test_load_csv_empty_file(tmp_path):
    path = tmp_path / "empty.csv"
    path.write_text("")
    with pytest.raises(EmptyInputError):
        load_csv(path)
    with pytest.raises(EmptyInputError):
        load_csv(_csv(tmp_path, []))


def test_load_csv_malformed_row_and_order(tmp_path):
    with pytest.raises(SeriesError) as err:
        load_csv(_csv(tmp_path, ["0,1", "30,abc"]))
    assert err.value.index == 1
    with pytest.raises(GapError):
        load_csv(_csv(tmp_path, ["0,1", "30,2", "20,3"]))
    with pytest.raises(SeriesError):
        load_csv(_csv(tmp_path, ["0,1"], header="time,value"))


def test_load_csv_custom_columns(tmp_path):
    path = _csv(tmp_path, ["0,9,1", "60,9,2"], header="t,other,flow")
    ts = load_csv(path, time_column="t", value_column="flow")
    assert ts.values.tolist() == [1.0, 2.0]


def test_csv_round_trip(tmp_path):
    ts = TimeSeries(np.random.default_rng(0).normal(size=20), interval=1800.0)
    path = tmp_path / "out.csv"
    write_csv(ts, path)
    back = load_csv(path)
    assert back.interval == 1800.0
    assert np.array_equal(back.values, ts.values)


# --- aggregation ---------------------------------------------------------------------


def test_aggregate_examples():
    ts = TimeSeries([1, 2, 3, 4], interval=30)
    out = aggregate(ts, 60)
    assert out.values.tolist() == [1.5, 3.5]
    assert out.interval == 60
    assert np.all(aggregate(TimeSeries([7.0] * 9, 5), 15).values == 7.0)
    assert len(aggregate(TimeSeries([1, 2, 3, 4, 5], 1), 2)) == 2


def test_aggregate_rejects_off_grid_bucket():
    with pytest.raises(SeriesError):
        aggregate(TimeSeries([1, 2, 3], 30), 45)
    with pytest.raises(EmptyInputError):
        aggregate(TimeSeries([1, 2], 30), 90)


@settings(max_examples=50, deadline=None)
@given(st.lists(st.floats(-1e3, 1e3), min_size=1, max_size=60), st.integers(1, 7))
def test_aggregate_preserves_mass(values, k):
    ts = TimeSeries(values, 1.0)
    if len(values) < k:
        return
    out = aggregate(ts, float(k))
    n = len(out)
    assert math.isclose(float(out.values.sum() * k), float(np.sum(values[:n * k])), abs_tol=1e-9 * (1 + np.abs(values).sum()))


# --- split and scaling ---------------------------------------------------------------


def test_split_lengths():
    assert SplitSpec().lengths(100) == (70, 10, 20)
    assert SplitSpec().lengths(101) == (70, 10, 21)
    with pytest.raises(SeriesError):
        SplitSpec().lengths(3)
    with pytest.raises(ValueError):
        SplitSpec(0.5, 0.1, 0.1)


def test_split_is_contiguous():
    ts = TimeSeries(np.arange(100.0))
    train, val, test = split(ts)
    assert np.array_equal(np.concatenate([train.values, val.values, test.values]), ts.values)
    assert test.start_time > val.start_time > train.start_time


def test_scaler_examples():
    params = fit_scaler(TimeSeries([0.0, 2.0]))
    assert (params.mean, params.std) == (1.0, 1.0)
    assert transform(TimeSeries([1.0]), params).values.tolist() == [0.0]
    with pytest.raises(SeriesError):
        fit_scaler(TimeSeries([3.0, 3.0, 3.0]))
    with pytest.raises(ValueError):
        ScalerParams(0.0, 0.0)


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 10_000), st.floats(-100, 100), st.floats(0.01, 100))
def test_scaler_round_trip(seed, loc, spread):
    x = np.random.default_rng(seed).normal(loc, spread, size=50)
    ts = TimeSeries(x)
    params = fit_scaler(ts)
    back = inverse_transform(transform(ts, params), params)
    assert np.max(np.abs(back.values - x)) <= 1e-10 * max(1.0, np.max(np.abs(x)))


# --- windows -------------------------------------------------------------------------


def test_make_windows_examples():
    ds = make_windows(TimeSeries([1, 2, 3, 4]), 3)
    assert ds.inputs.shape == (1, 3, 1)
    assert ds.inputs[0, :, 0].tolist() == [1, 2, 3]
    assert ds.targets.tolist() == [4]
    ds = make_windows(TimeSeries([1, 2, 3, 4]), 3, expert_preds=[3.9])
    assert ds.channel_layout is ChannelLayout.VALUES_PLUS_EXPERT
    assert ds.inputs[0, :, 1].tolist() == [3.9, 3.9, 3.9]
    with pytest.raises(SeriesError):
        make_windows(TimeSeries([1, 2, 3]), 3)
    with pytest.raises(SeriesError):
        make_windows(TimeSeries([1, 2, 3, 4, 5]), 3, expert_preds=[1.0])


@settings(max_examples=50, deadline=None)
@given(st.lists(st.floats(-1e6, 1e6), min_size=2, max_size=40), st.integers(1, 6))
def test_windowing_round_trip(values, p):
    if len(values) < p + 1:
        return
    ds = make_windows(np.array(values), p)
    assert len(ds) == len(values) - p
    rebuilt = list(ds.inputs[:, 0, 0]) + list(ds.inputs[-1, 1:, 0]) + [ds.targets[-1]]
    assert rebuilt == list(values)
    assert np.array_equal(ds.targets, np.array(values)[ds.target_index])


# --- autocorrelation and PACF --------------------------------------------------------


def _ar1(phi, n, seed):
    rng = np.random.default_rng(seed)
    e = rng.standard_normal(n + 200)
    x = np.zeros_like(e)
    for t in range(1, e.size):
        x[t] = phi * x[t - 1] + e[t]
    return x[200:]


def test_pacf_lag_zero_is_one():
    assert pacf(np.random.default_rng(1).normal(size=50), 5)[0] == 1.0


def test_pacf_ar1():
    n = 5000
    x = _ar1(0.8, n, seed=3)
    pc = pacf(x, 10)
    assert 0.75 <= pc[1] <= 0.85
    assert np.all(np.abs(pc[2:]) < pacf_band(n))
    ols = plain_regression_pacf(x, 10)
    assert 0.75 <= ols[1] <= 0.85
    assert np.max(np.abs(pc - ols)) < 0.02


def test_pacf_white_noise():
    n = 5000
    pc = pacf(np.random.default_rng(11).standard_normal(n), 20)
    assert np.all(np.abs(pc[1:]) < 3 / math.sqrt(n))


def test_pacf_matches_regression_oracle():
    rng = np.random.default_rng(2024)
    for trial in range(50):
        n = int(rng.integers(30, 201))
        x = rng.standard_normal(n).cumsum() * 0.3 + rng.standard_normal(n)
        k = int(rng.integers(1, 11))
        assert np.max(np.abs(pacf(x, k) - regression_pacf(x, k))) < 1e-6, trial


def test_pacf_errors():
    with pytest.raises(ValueError):
        pacf(np.arange(10.0), 0)
    with pytest.raises(SeriesError):
        pacf(np.arange(5.0), 5)
    with pytest.raises(SeriesError):
        autocorrelation(np.ones(10), 2)
