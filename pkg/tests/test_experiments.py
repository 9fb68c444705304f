import json
import math

import numpy as np
import pytest

from oracles import brute_force_exceedance

from kinn.config import load_config
from kinn.experiments import (
    CSV_COLUMNS,
    ExperimentResult,
    SyntheticSpec,
    _Cache,
    generate_synthetic,
    load_dataset,
    load_results,
    run_experiment,
    stepwise_analysis,
    summary_table,
    table_specs,
    working_split,
    write_results,
)
from kinn.experts import seasonal_naive
from kinn.timeseries import autocorrelation

# small, fast run: short series, tiny network, seasonal naive expert
FAST = ["dataset.length=1200", "dataset.season=24", "expert.kind=seasonal_naive", "expert.s=24",
        "network.widths=[3]", "network.epochs=2"]


# --- synthetic generator -------------------------------------------------------------


def test_generator_zero_amplitude_and_noise():
    x = generate_synthetic(SyntheticSpec(length=500, amplitude=0.0, noise_std=0.0)).values
    assert np.all(x == 0.0)


def test_generator_noiseless_is_periodic():
    x = generate_synthetic(SyntheticSpec(length=960, noise_std=0.0)).values
    assert np.array_equal(x[48:], x[:-48])
    pred = seasonal_naive(48).rolling_forecast(x, 48)
    assert np.mean((pred - x[48:]) ** 2) == 0.0


def test_generator_properties():
    spec = SyntheticSpec()
    x = generate_synthetic(spec).values
    assert x.size == 8000
    assert np.all(x >= 0.0)
    assert np.all(x <= spec.capacity * spec.amplitude)
    assert autocorrelation(x, 48)[48] > 0.5
    assert np.array_equal(x, generate_synthetic(spec).values)
    assert not np.array_equal(x, generate_synthetic(SyntheticSpec(seed=1)).values)


def test_generator_peaks_are_noisier_than_troughs():
    spec = SyntheticSpec(length=9600)
    x = generate_synthetic(spec).values
    clean = generate_synthetic(SyntheticSpec(length=9600, noise_std=0.0)).values
    phase = np.arange(x.size) % 48
    base = np.sin(2 * np.pi * phase / 48)
    resid = x - clean
    assert np.std(resid[base > 0.8]) > 2.0 * np.std(resid[base < 0.0])


# --- experiment table ------------------------------------------------------------------


def test_table_specs():
    cfg = load_config(None)
    specs = table_specs(cfg)
    assert [s.row for s in specs] == ["1", "2a", "2b", "3", "4", "5a", "5b"]
    assert [s.row for s in table_specs(cfg, [5])] == ["5a", "5b"]
    assert {s.expert_kind for s in table_specs(cfg, [5])} == {"zero", "lagged"}
    assert table_specs(cfg, [2])[1].data_fraction == 0.1
    with pytest.raises(ValueError):
        table_specs(cfg, [9])


def test_working_split_keeps_recent_train_and_same_test():
    cfg = load_config(None, FAST)
    series = load_dataset(cfg)
    full = working_split(cfg, series, 1.0)
    tenth = working_split(cfg, series, 0.1)
    assert tenth.n_train == 84 and full.n_train == 840
    assert np.array_equal(tenth.values[:84], full.values[756:840])
    assert np.array_equal(tenth.values[84:], full.values[840:])


# --- stepwise analysis ---------------------------------------------------------------


def test_stepwise_examples():
    assert stepwise_analysis([1, 2, 3], [2, 2, 2])["exceed"] == pytest.approx(1 / 3)
    assert stepwise_analysis([0.5], [0.5])["exceed"] == 0.0
    assert stepwise_analysis([3.0, 0.0], [0.0, 3.0], threshold=1.5)["near_tie"] == 0.0
    assert stepwise_analysis([1.0, 0.0], [0.0, 3.0], threshold=1.5)["near_tie"] == 0.5
    with pytest.raises(ValueError):
        stepwise_analysis([1, 2], [1])
    with pytest.raises(ValueError):
        stepwise_analysis([], [])


def test_stepwise_matches_brute_force():
    rng = np.random.default_rng(0)
    for _ in range(20):
        n = int(rng.integers(1, 300))
        a = np.round(rng.exponential(size=n), 1)
        b = np.round(rng.exponential(size=n), 1)
        assert stepwise_analysis(a, b)["exceed"] == brute_force_exceedance(a, b)


# --- running rows --------------------------------------------------------------------


@pytest.fixture(scope="module")
def fast_rows():
    cfg = load_config(None, FAST)
    series = load_dataset(cfg)
    before = series.values.copy()
    cache = _Cache()
    rows = {s.row: run_experiment(s, cfg, series, cache) for s in table_specs(cfg)}
    return cfg, series, before, rows


def test_rows_succeed_and_share_test_targets(fast_rows):
    _, _, _, rows = fast_rows
    assert all(r.status == "ok" for r in rows.values()), [r.error for r in rows.values()]
    # indices are relative to each row's working series; the targets themselves agree
    assert rows["1"].truth == rows["2b"].truth == rows["5b"].truth
    assert rows["1"].test_index == rows["5b"].test_index
    assert rows["1"].mse_nn == rows["5a"].mse_nn


def test_degraded_expert_scores(fast_rows):
    _, _, _, rows = fast_rows
    truth = np.array(rows["5a"].truth)
    assert rows["5a"].mse_expert == pytest.approx(np.mean(truth ** 2), rel=1e-12)
    r = rows["5b"]
    full = np.concatenate([[np.nan], truth])
    lag_pred = np.array(r.pred_expert)
    assert np.array_equal(lag_pred[1:], full[1:-1])
    assert r.mse_expert == pytest.approx(np.mean((lag_pred - truth) ** 2), rel=1e-12)
    assert rows["3"].mse_expert > rows["1"].mse_expert


def test_test_set_is_immutable(fast_rows):
    _, series, before, rows = fast_rows
    assert np.array_equal(series.values, before)
    n = series.values.size
    assert np.array_equal(np.array(rows["1"].truth), before[n - len(rows["1"].truth):])


def test_stored_errors_match_predictions(fast_rows):
    _, _, _, rows = fast_rows
    r = rows["3"]
    truth = np.array(r.truth)
    assert np.array_equal(r.err_kinn, np.abs(np.array(r.pred_kinn) - truth))
    assert r.exceed_vs_nn == brute_force_exceedance(r.err_kinn, r.err_nn)
    assert r.exceed_vs_expert == brute_force_exceedance(r.err_kinn, r.err_expert)


def test_write_and_load_results(fast_rows, tmp_path):
    _, _, _, rows = fast_rows
    results = list(rows.values())
    written = write_results(results, tmp_path)
    names = {p.name for p in written}
    assert {"results.csv", "results.json", "predictions-1.csv", "predictions-1.svg", "errors-5b.svg"} <= names
    header = (tmp_path / "results.csv").read_text().splitlines()[0]
    assert header.split(",") == CSV_COLUMNS
    back = load_results(tmp_path)
    assert [r.to_dict() for r in back] == [r.to_dict() for r in results]
    doc = json.loads((tmp_path / "results.json").read_text())
    assert doc["reference_table"]["1"]["mse_kinn"] == 0.74
    svg_text = (tmp_path / "predictions-1.svg").read_text()
    assert svg_text.startswith("<svg") or svg_text.startswith("<?xml")
    assert "KINN" in svg_text
    table = summary_table(results)
    assert "5b" in table and "mse_kinn" in table


def test_failed_row_is_isolated():
    cfg = load_config(None, FAST + ["expert.s=2000"])
    spec = table_specs(cfg, [1])[0]
    r = run_experiment(spec, cfg)
    assert r.status == "failed" and r.error
    assert math.isnan(r.mse_kinn)
    assert "FAILED" in summary_table([r])
    with pytest.raises(ValueError):
        write_results([], ".")


def test_result_dict_round_trip():
    r = ExperimentResult(1, "1", "d", 1.0, "fitted", mse_nn=1.5)
    assert ExperimentResult.from_dict(r.to_dict()) == r
