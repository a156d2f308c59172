"""Reliability tables and long-format plot data from a run directory."""

import csv
import os
from collections import OrderedDict

from .errors import MissingResults
from .harness import read_results_csv, read_summary_csv

PLOT_COLUMNS = ("experiment", "disparity_mode", "condition", "metric", "value", "baseline_lower", "baseline_upper")


def load_run(in_dir):
    paths = [os.path.join(in_dir, name) for name in ("summary.csv", "results.csv")]
    for p in paths:
        if not os.path.isfile(p):
            raise MissingResults(f"{p} not found")
    summary = read_summary_csv(paths[0])
    if not summary:
        raise MissingResults(f"{paths[0]} has no rows")
    return summary, read_results_csv(paths[1])


def experiment_tables(summary):
    """``{experiment: (metrics, rows)}``; each row holds mode, condition and per-metric overlap/outcome."""
    tables = OrderedDict()
    for row in summary:
        metrics, rows = tables.setdefault(row["experiment"], ([], OrderedDict()))
        if row["metric"] not in metrics:
            metrics.append(row["metric"])
        key = (row["disparity_mode"], row["condition"])
        rows.setdefault(key, {})[row["metric"]] = (row["overlap_proportion"], row["outcome"])
    return tables


def _overlap(text):
    return f"{float(text):.2f}" if text else "n/a"


def render_markdown(tables):
    out = []
    for exp, (metrics, rows) in tables.items():
        out.append(f"### {exp}")
        out.append("")
        head = ["disparity_mode", "condition"] + metrics + [f"{m} outcome" for m in metrics]
        out.append("| " + " | ".join(head) + " |")
        out.append("|" + "|".join("---" for _ in head) + "|")
        for (mode, cond), cells in rows.items():
            vals = [_overlap(cells.get(m, ("", ""))[0]) for m in metrics]
            outs = [cells.get(m, ("", ""))[1] or "skipped" for m in metrics]
            out.append("| " + " | ".join([mode, cond] + vals + outs) + " |")
        out.append("")
    return "\n".join(out)


def write_table_csvs(tables, out_dir):
    written = []
    for exp, (metrics, rows) in tables.items():
        path = os.path.join(out_dir, f"table_{exp}.csv")
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["disparity_mode", "condition"] + [f"{m}_overlap" for m in metrics] + [f"{m}_outcome" for m in metrics])
            for (mode, cond), cells in rows.items():
                w.writerow(
                    [mode, cond]
                    + [cells.get(m, ("", ""))[0] for m in metrics]
                    + [cells.get(m, ("", ""))[1] for m in metrics]
                )
        written.append(path)
    return written


def plot_rows(summary, results):
    """Experimental values joined with their baseline interval, one row per value."""
    bounds = {
        (r["experiment"], r["condition"], r["metric"], r["disparity_mode"]): (r["baseline_lower"], r["baseline_upper"])
        for r in summary
    }
    has_boot = set()
    for r in results:
        if r["kind"] == "bootstrap":
            has_boot.add((r["experiment"], r["condition"], r["metric"], r["disparity_mode"]))
    for r in results:
        key = (r["experiment"], r["condition"], r["metric"], r["disparity_mode"])
        if key not in bounds or r["skipped"] == "true" or r["value"] == "":
            continue
        # point rows only stand in when a condition has no resampled values
        if (r["kind"] == "bootstrap") != (key in has_boot):
            continue
        lo, hi = bounds[key]
        yield (r["experiment"], r["disparity_mode"], r["condition"], r["metric"], r["value"], lo, hi)


def write_plot_data(summary, results, path):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(PLOT_COLUMNS)
        for row in plot_rows(summary, results):
            w.writerow(row)
    return path


def build_report(in_dir, fmt="md", out_dir=None):
    """Write tables and plot data under ``out_dir`` (default ``in_dir/report``); returns the rendered text."""
    if fmt not in ("md", "csv"):
        raise ValueError(f"unknown format {fmt!r}")
    summary, results = load_run(in_dir)
    out_dir = out_dir or os.path.join(in_dir, "report")
    os.makedirs(out_dir, exist_ok=True)
    tables = experiment_tables(summary)
    if fmt == "md":
        text = render_markdown(tables)
        with open(os.path.join(out_dir, "tables.md"), "w", encoding="utf-8") as fh:
            fh.write(text)
    else:
        text = "\n".join(write_table_csvs(tables, out_dir))
    write_plot_data(summary, results, os.path.join(out_dir, "plot_data.csv"))
    return text
