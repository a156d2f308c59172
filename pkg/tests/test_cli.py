import csv
import os
import shutil

import pytest
import yaml

from auditbench.cli import main

ROOT = os.path.dirname(os.path.dirname(os.path.abspath(__file__)))


def write_cfg(tmp_path, raw, name="c.yaml"):
    p = tmp_path / name
    p.write_text(yaml.safe_dump(raw))
    return str(p)


TINY = {
    "dataset": {"kind": "benchmark", "benchmark": {"n_rows": 1500, "seed": 2}},
    "scenario": "B",
    "repetitions": 1,
    "bootstrap_B": 50,
}


def test_validate_ok_and_compat(tmp_path, capsys):
    assert main(["validate", write_cfg(tmp_path, TINY)]) == 0
    assert "OK" in capsys.readouterr().out
    bad = {**TINY, "scenario": "A", "grids": {"epsilon": [1], "synthesizers": ["independent_marginals"]}}
    assert main(["validate", write_cfg(tmp_path, bad)]) == 2
    err = capsys.readouterr().err
    assert "compatibility matrix" in err


def test_validate_missing_file(tmp_path):
    assert main(["validate", str(tmp_path / "nope.yaml")]) == 3


def test_gen_data(tmp_path, capsys):
    cfg = write_cfg(tmp_path, {**TINY, "dataset": {"kind": "benchmark", "benchmark": {"n_rows": 1000, "seed": 4}}})
    assert main(["gen-data", cfg, "--out", str(tmp_path / "a")]) == 0
    out = capsys.readouterr().out
    lines = (tmp_path / "a" / "dataset.csv").read_text().splitlines()
    assert len(lines) == 1001
    assert main(["gen-data", cfg, "--out", str(tmp_path / "b")]) == 0
    assert (tmp_path / "a" / "dataset.csv").read_bytes() == (tmp_path / "b" / "dataset.csv").read_bytes()
    # independent tally of the written file
    with open(tmp_path / "a" / "dataset.csv") as fh:
        rows = list(csv.DictReader(fh))
    for label in ("privileged", "underprivileged"):
        ys = [int(r["y"]) for r in rows if r["group"] == label]
        assert f"base_rate[{label}]: {sum(ys) / len(ys):.4f} (n={len(ys)})" in out


def test_gen_data_needs_benchmark(tmp_path):
    raw = {**TINY, "dataset": {"kind": "csv", "path": "x.csv", "schema": {"features": [{"name": "a", "kind": "numeric"}]}}}
    assert main(["gen-data", write_cfg(tmp_path, raw), "--out", str(tmp_path)]) == 2


def test_trivial_run_is_accurate(tmp_path):
    assert main(["run", write_cfg(tmp_path, TINY), "--out", str(tmp_path / "out")]) == 0
    with open(tmp_path / "out" / "summary.csv") as fh:
        rows = list(csv.DictReader(fh))
    assert rows and all(r["overlap_proportion"] == "1.0" and r["outcome"] == "Accurate" for r in rows)
    for name in ("results.csv", "summary.csv", "provenance.txt"):
        assert (tmp_path / "out" / name).is_file()
    header = (tmp_path / "out" / "results.csv").read_text().splitlines()[0]
    assert header == "scenario,experiment,condition,repetition,metric,disparity_mode,value,kind,skipped,skip_reason"


def test_degenerate_run_exit_code(tmp_path):
    raw = {**TINY, "grids": {"subsample": [0.0005]}}
    assert main(["run", write_cfg(tmp_path, raw), "--out", str(tmp_path / "out")]) == 4
    assert (tmp_path / "out" / "results.csv").is_file()


def test_seed_precedence(tmp_path, monkeypatch):
    cfg = write_cfg(tmp_path, {**TINY, "master_seed": 1})

    def seed_of(out):
        text = (tmp_path / out / "provenance.txt").read_text()
        return yaml.safe_load(text)["master_seed"]

    monkeypatch.setenv("AUDITBENCH_SEED", "7")
    main(["run", cfg, "--out", str(tmp_path / "env")])
    main(["run", cfg, "--out", str(tmp_path / "flag"), "--seed", "9"])
    monkeypatch.delenv("AUDITBENCH_SEED")
    main(["run", cfg, "--out", str(tmp_path / "plain")])
    assert (seed_of("env"), seed_of("flag"), seed_of("plain")) == (7, 9, 1)


def test_report_formats(tmp_path, capsys):
    raw = {**TINY, "grids": {"subsample": [0.5, 0.8]}, "repetitions": 2}
    out = str(tmp_path / "out")
    assert main(["run", write_cfg(tmp_path, raw), "--out", out]) == 0
    capsys.readouterr()
    assert main(["report", out, "--format", "md"]) == 0
    text = capsys.readouterr().out
    assert "### subsample" in text and "| disparity_mode | condition | SPD | AOD | EOD |" in text
    assert main(["report", out, "--format", "csv"]) == 0
    table = (tmp_path / "out" / "report" / "table_subsample.csv").read_text().splitlines()
    assert table[0] == "disparity_mode,condition,SPD_overlap,AOD_overlap,EOD_overlap,SPD_outcome,AOD_outcome,EOD_outcome"
    plot = (tmp_path / "out" / "report" / "plot_data.csv").read_text().splitlines()
    assert plot[0] == "experiment,disparity_mode,condition,metric,value,baseline_lower,baseline_upper"
    assert len(plot) == 1 + 2 * 2 * 3 * 50


def test_report_missing(tmp_path):
    assert main(["report", str(tmp_path)]) == 3


CORPUS = [
    TINY,
    {**TINY, "scenario": "A", "grids": {"epsilon": [1.0]}},
    {**TINY, "scenario": "A"},
    {**TINY, "grids": {"features": [20]}},
    {**TINY, "grids": {"missingness": [0.7]}},
    {**TINY, "scenario": "C", "grids": {"features": [1]}},
    {**TINY, "metrics": []},
    {**TINY, "disparity_mode": "extreme"},
    {**TINY, "bootstrap_B": 0},
    {**TINY, "model": {"class": "dp_logistic_regression", "dp_epsilon": 1.0}},
    {**TINY, "model": {"class": "dp_logistic_regression"}},
    {**TINY, "dataset": {"kind": "csv", "path": "missing.csv", "schema": {"features": [{"name": "a", "kind": "numeric"}]}}},
]


@pytest.mark.parametrize("raw", CORPUS)
def test_validate_agrees_with_run(tmp_path, raw):
    cfg = write_cfg(tmp_path, raw)
    v = main(["validate", cfg])
    r = main(["run", cfg, "--out", str(tmp_path / "out")])
    assert (v == 0) == (r in (0, 4))
    if v != 0:
        assert v == r


def test_shipped_config_validates():
    assert main(["validate", os.path.join(ROOT, "configs", "benchmark.yaml")]) == 0
