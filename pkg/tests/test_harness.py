import numpy as np
import pytest

from auditbench import harness
from auditbench.config import parse_config
from auditbench.dataset import DataTable, Schema, write_csv
from auditbench.errors import MixedConfigs
from auditbench.reliability import AuditOutcome, IntervalConfiguration


def cfg(scenario="B", grids=None, reps=3, B=200, rows=4000, modes="natural", bench=None, **extra):
    raw = {
        "dataset": {"kind": "benchmark", "benchmark": {"n_rows": rows, "seed": 1, **(bench or {})}},
        "model": {"class": "logistic_regression"},
        "scenario": scenario,
        "grids": grids or {},
        "repetitions": reps,
        "bootstrap_B": B,
        "disparity_mode": modes,
        **extra,
    }
    return parse_config(raw)


def rows_by(rows, **kw):
    return [r for r in rows if all(r[k] == v for k, v in kw.items())]


def test_null_population_baseline_contains_zero():
    c = cfg(reps=100, rows=2000, B=200, bench={"signal_strength": 0.0, "base_rate_underprivileged": 0.5})
    hits = 0
    for rep in range(100):
        _, _, boot = harness.run_baseline(c, rep)
        hits += boot["SPD"].interval.contains(0.0)
    assert hits >= 90


def test_skewed_baseline_direction():
    c = cfg(modes="skewed")
    _, audit, boot = harness.run_baseline(c, 0)
    # the underprivileged group receives most positive predictions
    assert boot["SPD"].estimate.value > 0.3
    assert boot["SPD"].interval.lower > 0


def test_baseline_deterministic():
    c = cfg()
    a = harness.run_baseline(c, 2)
    b = harness.run_baseline(c, 2)
    assert a[0].to_dict() == b[0].to_dict()
    assert np.array_equal(a[2]["AOD"].values, b[2]["AOD"].values)


def test_scenario_a_zero_noise():
    res = harness.run_scenario_a(cfg("A", {"epsilon": [1e9]}))
    assert all(r["overlap_proportion"] == 1.0 for r in harness.aggregate([res]))


def test_scenario_a_budget_and_size_trends():
    c = cfg("A", {"epsilon": [0.01, 0.05, 0.5, 1, 10], "subsample": ["full", 5000, 1000]}, reps=4, rows=25000)
    rows = rows_by(harness.aggregate([harness.run(c)]), metric="SPD")
    ov = {r["condition"]: r["overlap_proportion"] for r in rows}
    for size in ("", ";n=5000", ";n=1000"):
        seq = [ov[f"eps={e:g}{size}"] for e in (0.01, 0.05, 0.5, 1, 10)]
        assert all(b >= a - 0.05 for a, b in zip(seq, seq[1:])), seq
    for e in (0.05, 0.5, 1):
        assert ov[f"eps={e:g}"] >= ov[f"eps={e:g};n=5000"] - 0.05 >= ov[f"eps={e:g};n=1000"] - 0.1


def test_scenario_b_empty_grid_is_identity():
    res = harness.run_scenario_b(cfg(reps=2))
    rows = harness.aggregate([res])
    assert {(r["experiment"], r["condition"]) for r in rows} == {("baseline", "none")}
    for r in rows:
        assert r["overlap_proportion"] == 1.0
        assert r["outcome"] == "Accurate"
    recs = [r for r in res.records if r.condition == "none"]
    base = {(r.repetition, r.metric): r.point for r in res.records if r.condition == "audit"}
    assert all(r.point == base[(r.repetition, r.metric)] for r in recs)


def test_scenario_b_subsample_ordering():
    c = cfg(grids={"subsample": [0.03, 0.2, 0.8]}, reps=4, rows=10000)
    ov = {(r["condition"], r["metric"]): r["overlap_proportion"] for r in harness.aggregate([harness.run(c)])}
    for m in ("SPD", "AOD", "EOD"):
        assert ov[("frac=0.03", m)] < ov[("frac=0.2", m)] < ov[("frac=0.8", m)]


def test_independent_marginals_type2_on_skewed_source():
    c = cfg(grids={"synthesizers": ["independent_marginals"]}, reps=2, modes="skewed")
    rows = rows_by(harness.aggregate([harness.run(c)]), metric="SPD")
    assert rows[0]["baseline_config"] == IntervalConfiguration.POSITIVE.value
    assert rows[0]["experiment_config"] == IntervalConfiguration.PARITY.value
    assert rows[0]["outcome"] == AuditOutcome.TYPE2.value


def test_grid_completeness_and_skip_records():
    c = cfg(grids={"subsample": [0.001, 0.5], "features": [1]}, reps=2, rows=2000)
    res = harness.run(c)
    cond = [r for r in res.records if r.condition != "audit"]
    assert len(cond) == 2 * 3 * 3
    tiny = [r for r in cond if r.condition == "frac=0.001"]
    assert all(r.skipped for r in tiny)
    assert {r.skip_reason for r in tiny} <= {"EmptyGroup", "TooManyDegenerate", "UndefinedRate", "EmptyResult"}


def test_jobs_do_not_change_results(tmp_path):
    c = cfg(grids={"missingness": [0.2], "synthesizers": ["gaussian_copula"]}, reps=3, rows=2000, modes=["natural", "skewed"])
    a, b = harness.run(c, jobs=1), harness.run(c, jobs=3)
    harness.write_results_csv(a, tmp_path / "a.csv")
    harness.write_results_csv(b, tmp_path / "b.csv")
    assert (tmp_path / "a.csv").read_bytes() == (tmp_path / "b.csv").read_bytes()


def test_scenario_c_barrier_logged():
    c = cfg("C", {"features": [1]}, reps=2, rows=2000)
    res = harness.run_scenario_c(c)
    events = [e for e in res.provenance["events"] if e["stage"] == "replica_train"]
    assert len(events) == 2
    for e in events:
        assert e["inputs"] == ["model_spec", "auditor_training_split"]
        assert not any("param" in i or "weight" in i for i in e["inputs"])


def test_scenario_c_determinism():
    c = cfg("C", {"subsample": [0.5]}, reps=2, rows=2000)
    a, b = harness.run(c), harness.run(c)
    assert harness.aggregate([a]) == harness.aggregate([b])


def nonlinear_csv(tmp_path, n=6000, seed=0):
    rng = np.random.default_rng(seed)
    group = rng.integers(0, 2, n)
    x0 = rng.normal(size=n) * np.where(group == 1, 1.4, 0.8)
    x1 = rng.normal(size=n)
    p = 1 / (1 + np.exp(-(3 * (np.abs(x0) - 1) + 0.3 * x1)))
    y = (rng.random(n) < p).astype(int)
    schema = Schema(features=(("x0", "numeric"), ("x1", "numeric")))
    path = tmp_path / "nl.csv"
    write_csv(DataTable(schema, {"x0": x0, "x1": x1}, group, y), path)
    return path, schema


def test_wrong_replica_class_is_less_reliable(tmp_path):
    path, schema = nonlinear_csv(tmp_path)
    overlaps = {}
    for replica in ("boosted_stumps", "logistic_regression"):
        raw = {
            "dataset": {"kind": "csv", "path": str(path), "schema": schema.to_dict()},
            "model": {"class": "boosted_stumps"},
            "replica_model": {"class": replica},
            "scenario": "C",
            "grids": {"subsample": [1.0]},
            "metrics": ["SPD"],
            "repetitions": 3,
            "bootstrap_B": 200,
        }
        rows = harness.aggregate([harness.run(parse_config(raw))])
        overlaps[replica] = rows[0]["overlap_proportion"]
    assert overlaps["logistic_regression"] < overlaps["boosted_stumps"]


def test_aggregate_pools_value_multisets():
    from auditbench.metrics import Interval

    recs = [
        harness.Record("natural", 0, "subsample", "frac=0.5", "SPD", 0.0, np.array([0.0, 0.0, 5.0, 5.0, 5.0])),
        harness.Record("natural", 1, "subsample", "frac=0.5", "SPD", 0.0, np.array([0.0, 0.0, 0.0, 5.0, 5.0])),
    ]
    reports = harness._reports(cfg(), recs, {("natural", "SPD"): (Interval(-1, 1), None)})
    report, n_skipped = reports[("subsample", "frac=0.5", "SPD", "natural")]
    assert report.overlap_proportion == 0.5
    assert n_skipped == 0


def test_aggregate_rejects_mixed_configs():
    a = harness.run(cfg(reps=1, rows=1000))
    b = harness.run(cfg(reps=1, rows=1200))
    with pytest.raises(MixedConfigs):
        harness.aggregate([a, b])
    assert len(harness.aggregate([a, a])) == len(harness.aggregate([a]))


def test_single_result_summary_matches_report():
    res = harness.run(cfg(grids={"subsample": [0.5]}, reps=1))
    row = rows_by(harness.aggregate([res]), metric="EOD")[0]
    report, _ = res.reports[("subsample", "frac=0.5", "EOD", "natural")]
    assert row["overlap_proportion"] == report.overlap_proportion
    assert row["outcome"] == report.outcome.value
