import math
import os
from pathlib import Path

import numpy as np
import pytest

import gbforest

ROOT = Path(os.environ.get("GBF_SOURCE_DIR", Path(__file__).resolve().parents[2]))


def poisson_data(n=200, p=5, seed=0):
    rng = np.random.default_rng(seed)
    X = rng.uniform(-1, 1, size=(n, p))
    y = rng.poisson(np.exp(X[:, 0] + X[:, 1]))
    return X, y.astype(float)


def test_fit_predict_shapes_and_bounds():
    X, y = poisson_data()
    model = gbforest.fit(X, y, "poisson", num_trees=60, sample_fraction=0.4, seed=3)
    assert model.family == "poisson"
    assert model.stages == 2 and model.n == 200 and model.p == 5
    assert len(model.training_mean_ll) == 3
    out = model.predict(X[:10])
    assert out["link_estimate"].shape == (10,)
    assert np.all(out["link_variance"] >= 0)
    assert np.all(out["ci_lo"] <= out["ci_hi"])
    lo, hi = model.prediction_range()
    assert math.isinf(hi)
    assert np.all(out["link_estimate"] >= lo)


def test_predict_stages_matches_truncated_predict():
    X, y = poisson_data(seed=1)
    model = gbforest.fit(X, y, "poisson", num_trees=40, seed=4)
    stages = model.predict_stages(X[0])
    assert stages["link_estimate"].shape == (3,)
    assert stages["link_estimate"][0] == pytest.approx(model.eta0)
    for s in range(3):
        single = model.predict(X[:1], stages=s)
        assert single["link_estimate"][0] == stages["link_estimate"][s]


def test_binomial_with_trials_inside_range():
    rng = np.random.default_rng(2)
    X = rng.uniform(-1, 1, size=(150, 4))
    trials = rng.integers(1, 5, size=150)
    y = rng.binomial(trials, 1 / (1 + np.exp(-2 * X[:, 0]))).astype(float)
    model = gbforest.fit(X, y, "binomial", trials=trials.tolist(), num_trees=50, seed=5)
    lo, hi = model.prediction_range()
    link = model.predict(X)["link_estimate"]
    assert np.all((link >= lo) & (link <= hi))


def test_save_load_round_trip(tmp_path):
    X, y = poisson_data(seed=3)
    model = gbforest.fit(X, y, "poisson", num_trees=30, seed=6)
    path = tmp_path / "m.gbf"
    model.save(path)
    back = gbforest.load_model(path)
    a, b = model.predict(X), back.predict(X)
    for key in a:
        np.testing.assert_array_equal(a[key], b[key])
    assert gbforest.Model.from_bytes(model.to_bytes()).eta0 == model.eta0


def test_errors_become_exceptions():
    X, y = poisson_data(n=20)
    with pytest.raises(gbforest.GbfError):
        gbforest.fit(X, y, "poisson", stages=3)
    with pytest.raises(ValueError):
        gbforest.fit(X, y, "weibull")


def test_simulate_is_deterministic():
    config = {
        "family": "poisson",
        "n_train": 80,
        "n_test_random": 10,
        "replicates": 2,
        "scales": [1, 4],
        "sample_fractions": [0.4],
        "num_trees": 20,
        "seed": 9,
    }
    first = gbforest.simulate(config)
    assert first == gbforest.simulate(config)
    records, summary = first
    assert len(records.splitlines()) == 1 + 2 * 2
    assert summary.startswith("family,signal,scale")


def test_cv_on_abalone_subset(tmp_path):
    lines = (ROOT / "data" / "abalone.csv").read_text().splitlines()
    subset = tmp_path / "abalone.csv"
    subset.write_text("\n".join(lines[:301]) + "\n")
    report = gbforest.cv(subset, ROOT / "data" / "abalone.schema", "poisson", folds=3, num_trees=30, seed=2)
    assert [r["stage"] for r in report["rows"]] == [0, 1, 2]
    assert report["rows"][2]["mse"] < report["rows"][0]["mse"]
