import numpy as np
import pytest

from auditbench.dataset import BenchmarkSpec, DataTable, Schema, SplitSpec, generate_benchmark, split
from auditbench.errors import NonPositiveL2, TooFewRows
from auditbench.models import (
    DP_LOGISTIC,
    LOGISTIC,
    STUMPS,
    ModelSpec,
    accuracy,
    clean_dp_coefficients,
    feature_importance,
    load_model,
    predict,
    save_model,
    train,
    train_dp,
)


def separable(n=200, seed=0):
    rng = np.random.default_rng(seed)
    X = rng.normal(size=(n, 2))
    X = X[np.abs(X.sum(1)) > 0.05][: n]
    y = (X @ np.array([1.0, 1.0]) > 0).astype(int)
    schema = Schema(features=(("a", "numeric"), ("b", "numeric")))
    group = rng.integers(0, 2, size=len(y))
    return DataTable(schema, {"a": X[:, 0], "b": X[:, 1]}, group, y)


@pytest.fixture(scope="module")
def bench():
    return generate_benchmark(BenchmarkSpec(n_rows=3000, seed=2))


@pytest.mark.parametrize("cls", [LOGISTIC, STUMPS])
def test_separable_fit(cls):
    t = separable()
    spec = ModelSpec(cls, epochs=2000, learning_rate=1.0) if cls == LOGISTIC else ModelSpec(cls, n_stumps=300)
    model = train(spec, t)
    # independent check: recompute predictions from the rule itself
    pred = predict(model, t).yhat
    if cls == LOGISTIC:
        assert np.array_equal(pred, t.y)
    else:
        assert np.mean(pred == t.y) > 0.95


def test_loss_history_non_increasing(bench):
    model = train(ModelSpec(LOGISTIC), bench)
    h = np.asarray(model.loss_history)
    assert np.all(np.diff(h) <= 1e-12)


def test_single_class_is_degenerate():
    t = separable()
    t = DataTable(t.schema, t.features, t.group, np.ones(len(t), dtype=int))
    model = train(ModelSpec(LOGISTIC), t)
    assert model.degenerate
    assert predict(model, t).yhat.min() == 1


@pytest.mark.parametrize("cls", [LOGISTIC, STUMPS])
def test_training_deterministic(bench, cls):
    a = train(ModelSpec(cls, n_stumps=20), bench, seed=5)
    b = train(ModelSpec(cls, n_stumps=20), bench, seed=5)
    assert a.to_dict() == b.to_dict()


def test_dropped_columns_are_imputed(bench):
    model = train(ModelSpec(LOGISTIC), bench)
    strong = "x0"
    dropped = bench.drop_features([strong])
    filled = bench.with_features({strong: np.full(len(bench), np.mean(bench.features[strong]))})
    assert np.array_equal(predict(model, dropped).yhat, predict(model, filled).yhat)


def test_all_features_dropped_gives_constant(bench):
    model = train(ModelSpec(LOGISTIC), bench)
    yhat = predict(model, bench.drop_features(bench.feature_names)).yhat
    assert np.unique(yhat).size == 1


def test_save_load_round_trip(tmp_path, bench):
    for spec in (ModelSpec(LOGISTIC), ModelSpec(STUMPS, n_stumps=10)):
        model = train(spec, bench)
        save_model(model, tmp_path / "m.json")
        again = load_model(tmp_path / "m.json")
        assert np.array_equal(again.predict_proba(bench), model.predict_proba(bench))


def test_dp_huge_budget_matches_clean(bench):
    spec = ModelSpec(DP_LOGISTIC, dp_epsilon=1e9, l2=1e-3)
    model = train_dp(spec, bench, seed=1)
    clean = clean_dp_coefficients(spec, bench)
    assert np.max(np.abs(model.params["weights"] - clean[:-1])) < 1e-3


def test_dp_needs_l2(bench):
    with pytest.raises(NonPositiveL2):
        train_dp(ModelSpec(DP_LOGISTIC, dp_epsilon=1.0, l2=0.0), bench)


def test_dp_accuracy_falls_with_budget():
    t = generate_benchmark(BenchmarkSpec(n_rows=4000, seed=11))
    fit, test = split(t, SplitSpec(0.7, 0))
    acc = {}
    for eps in (0.1, 10.0):
        spec = ModelSpec(DP_LOGISTIC, dp_epsilon=eps, l2=1e-3)
        acc[eps] = np.mean([accuracy(train_dp(spec, fit, seed=s), test) for s in range(100)])
    assert acc[0.1] <= acc[10.0]


def test_importance_ranks_copied_feature_first():
    wins = 0
    for seed in range(50):
        rng = np.random.default_rng(seed)
        a = rng.normal(size=300)
        y = (a > 0).astype(int)
        schema = Schema(features=(("a", "numeric"), ("b", "numeric"), ("c", "numeric")))
        t = DataTable(schema, {"a": a, "b": rng.normal(size=300), "c": np.ones(300)}, rng.integers(0, 2, 300), y)
        model = train(ModelSpec(LOGISTIC), t)
        r = feature_importance(model, t, seed)
        wins += r.score("a") > r.score("b")
        assert r.score("c") == 0
        assert r.strongest(1) == ["a"]
    assert wins == 50


def test_importance_deterministic_and_min_rows(bench):
    model = train(ModelSpec(LOGISTIC), bench)
    assert feature_importance(model, bench, 3) == feature_importance(model, bench, 3)
    with pytest.raises(TooFewRows):
        feature_importance(model, bench.take(np.arange(10)), 0)
