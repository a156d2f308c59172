"""End-to-end audit simulation: baseline audit, access-scenario pipelines and pooling.

One repetition = one 70/30 split of the source data, one trained model and
one baseline audit, followed by every grid condition. Repetitions are
independent work units; results are folded in repetition order so the output
does not depend on how many workers ran them.
"""

import csv
import datetime as _dt
import json
import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np

from . import __version__
from . import synth as synthesis
from .dataset import SplitSpec, generate_benchmark, load_csv, round_half_up, split
from .degrade import (
    DROP_FEATURES,
    MISSINGNESS,
    SUBSAMPLE,
    DegradationSpec,
    drop_weakest_features,
    inject_missingness,
    skew_disparity,
)
from .errors import AuditBenchError, MixedConfigs
from .metrics import bootstrap_metrics, percentile_interval, resample_stream, row_codes
from .models import feature_importance, predict, train
from .privacy import add_laplace_noise, noisy_metric_values
from .reliability import AuditOutcome, compare
from .seeding import derive_seed

log = logging.getLogger(__name__)

BASELINE = "baseline"
IDENTITY = "none"

RESULTS_COLUMNS = (
    "scenario", "experiment", "condition", "repetition", "metric", "disparity_mode",
    "value", "kind", "skipped", "skip_reason",
)
SUMMARY_COLUMNS = (
    "scenario", "experiment", "condition", "metric", "disparity_mode", "baseline_lower",
    "baseline_upper", "baseline_config", "experiment_config", "outcome", "overlap_proportion",
    "n_values", "n_skipped",
)


@dataclass(frozen=True)
class Condition:
    experiment: str
    label: str
    degradation: Optional[DegradationSpec] = None
    synthesizer: Optional[object] = None
    subsample: Optional[float] = None
    epsilon: Optional[float] = None


@dataclass
class Record:
    disparity_mode: str
    repetition: int
    experiment: str
    condition: str
    metric: str
    point: Optional[float] = None
    values: np.ndarray = field(default_factory=lambda: np.zeros(0))
    n_uncomputable: int = 0
    skip_reason: Optional[str] = None
    pool_points: bool = False

    @property
    def skipped(self):
        return self.skip_reason is not None

    def pooled(self):
        if self.skipped:
            return np.zeros(0)
        if self.pool_points:
            return np.array([] if self.point is None else [self.point])
        return self.values


@dataclass
class RepetitionOutput:
    repetition: int
    records: list
    events: list
    seeds: dict


@dataclass
class ExperimentResult:
    config: object
    records: list
    baseline: dict
    reports: dict
    provenance: dict

    @property
    def config_hash(self):
        return self.config.config_hash()

    def skipped_share(self):
        exp = [r for r in self.records if r.experiment != BASELINE or r.condition == IDENTITY]
        if not exp:
            return 0.0
        return sum(r.skipped for r in exp) / len(exp)


# ----------------------------------------------------------------- data


_DATA_CACHE = {}


def load_dataset(config):
    key = json.dumps(config.dataset.to_dict(), sort_keys=True)
    if key not in _DATA_CACHE:
        src = config.dataset
        if src.kind == "benchmark":
            table = generate_benchmark(src.benchmark)
        else:
            table = load_csv(src.path, src.schema)
        _DATA_CACHE.clear()
        _DATA_CACHE[key] = table.without_predictions()
    return _DATA_CACHE[key]


def conditions(config):
    g = config.grids
    out = []
    if config.scenario == "A":
        subs = list(g.subsample) or [None]
        for s in subs:
            for eps in g.epsilon:
                label = f"eps={eps:g}"
                if s is not None and s != 1.0:
                    label += f";n={int(s)}" if s > 1 else f";frac={s:g}"
                out.append(Condition("dp", label, subsample=s, epsilon=eps))
        return out
    for v in g.subsample:
        spec = DegradationSpec(SUBSAMPLE, v)
        out.append(Condition("subsample", spec.label, degradation=spec))
    for k in g.features:
        spec = DegradationSpec(DROP_FEATURES, k)
        out.append(Condition("features", spec.label, degradation=spec))
    for rate in g.missingness:
        spec = DegradationSpec(MISSINGNESS, rate, top_m=config.missing_top_m)
        out.append(Condition("missingness", spec.label, degradation=spec))
    for s in g.synthesizers:
        out.append(Condition("synthetic", s.label, synthesizer=s))
    if not out:
        out.append(Condition(BASELINE if config.scenario == "B" else "replica", IDENTITY))
    return out


# ----------------------------------------------------------------- baseline


def _seed(config, rep, *keys):
    return derive_seed(config.master_seed, rep, *keys)


def _organisation(config, rep, data):
    """Split, train and predict: the simulated organisation's side of one repetition."""
    train_part, audit_part = split(data, SplitSpec(config.split_fraction, _seed(config, rep, "split")))
    model = train(config.model, train_part, _seed(config, rep, "train"))
    return model, predict(model, audit_part)


def _apply_mode(config, rep, audit, mode):
    if mode == "skewed":
        return skew_disparity(audit, config.skew_share, _seed(config, rep, "skew"))
    return audit


def run_baseline(config, repetition_index, mode=None):
    """Baseline audit for one repetition: ``(model, audit table with predictions, {metric: BootstrapResult|error})``."""
    mode = mode or config.disparity_modes[0]
    model, audit = _organisation(config, repetition_index, load_dataset(config))
    audit = _apply_mode(config, repetition_index, audit, mode)
    boot = bootstrap_metrics(
        audit, config.metrics, config.bootstrap_B, seed=_seed(config, repetition_index, "baseline-bootstrap")
    )
    return model, audit, boot


# ----------------------------------------------------------------- repetitions


def _records_from_bootstrap(mode, rep, experiment, label, metrics, boot):
    out = []
    for m in metrics:
        r = boot[m]
        if isinstance(r, Exception):
            out.append(Record(mode, rep, experiment, label, m, skip_reason=type(r).__name__))
        else:
            out.append(Record(mode, rep, experiment, label, m, r.estimate.value, r.values, r.n_degenerate))
        log.debug("rep %d %s/%s %s recorded", rep, experiment, label, m)
    return out


def _skip_records(mode, rep, experiment, label, metrics, exc):
    return [Record(mode, rep, experiment, label, m, skip_reason=type(exc).__name__) for m in metrics]


def _degrade(config, rep, cond, table, ranking):
    """Apply one B/C condition to an audit table without predictions."""
    seed = _seed(config, rep, "degrade", cond.experiment, cond.label)
    if cond.synthesizer is not None:
        fitted = synthesis.fit(cond.synthesizer, table, seed)
        return synthesis.sample(fitted, len(table), _seed(config, rep, "synth-sample", cond.label))
    if cond.degradation is None:
        return table
    d = cond.degradation
    if d.kind == DROP_FEATURES:
        return drop_weakest_features(table, int(d.value), ranking)
    if d.kind == MISSINGNESS:
        m = min(d.top_m, len(table.feature_names))
        return inject_missingness(table, d.value, ranking, m, seed)
    return d.apply(table, seed=seed)


def _replica_predictions(config, rep, cond, degraded, events):
    """Auditor-side replication: only the model *spec* crosses the information barrier."""
    spec = config.replica_model or config.model
    fit_part, eval_part = split(degraded, SplitSpec(config.split_fraction, _seed(config, rep, "replica-split", cond.label)))
    replica = train(spec, fit_part, _seed(config, rep, "replica-train", cond.label))
    events.append(
        {
            "repetition": rep,
            "stage": "replica_train",
            "condition": f"{cond.experiment}/{cond.label}",
            "inputs": ["model_spec", "auditor_training_split"],
            "replica_class": spec.model_class,
            "n_train": len(fit_part),
            "n_eval": len(eval_part),
        }
    )
    return predict(replica, eval_part)


def _scenario_a(config, rep, mode, audit, conds):
    codes = row_codes(audit)
    N = codes.size
    D = config.bootstrap_B
    full = np.bincount(codes, minlength=8).astype(float)
    records = []
    cache = {}
    for cond in conds:
        s = cond.subsample
        n_sub = None if s is None else (round_half_up(s * N) if s <= 1 else int(s))
        if n_sub is not None and n_sub >= N:
            n_sub = None
        if n_sub not in cache:
            if n_sub is None:
                cells = np.tile(full, (D, 1))
            else:
                seed = _seed(config, rep, "dp-subsample", n_sub)
                cells = np.empty((D, 8))
                for d in range(D):
                    idx = resample_stream(seed, d).choice(N, size=n_sub, replace=False)
                    cells[d] = np.bincount(codes[idx], minlength=8)
            cache[n_sub] = cells
        cells = cache[n_sub]
        noisy = add_laplace_noise(cells, cond.epsilon, _seed(config, rep, "dp-noise", mode, cond.label))
        if config.postprocess == "clamp_zero":
            noisy = np.maximum(noisy, 0.0)
        for m in config.metrics:
            vals = noisy_metric_values(noisy, m)
            ok = ~np.isnan(vals)
            point = float(vals[0]) if ok[0] else None
            if not ok.any():
                records.append(Record(mode, rep, cond.experiment, cond.label, m, skip_reason="UndefinedRate"))
                continue
            records.append(Record(mode, rep, cond.experiment, cond.label, m, point, vals[ok], int((~ok).sum())))
    return records


def run_repetition(config, rep):
    data = load_dataset(config)
    events = []
    seeds = {
        stage: _seed(config, rep, stage)
        for stage in ("split", "train", "skew", "baseline-bootstrap", "importance")
    }
    model, audit = _organisation(config, rep, data)
    events.append({"repetition": rep, "stage": "organisation", "n_audit": len(audit)})
    conds = conditions(config)

    ranking = None
    if any(c.degradation is not None and c.degradation.kind in (DROP_FEATURES, MISSINGNESS) for c in conds):
        ranking = feature_importance(model, audit, seeds["importance"])
        events.append({"repetition": rep, "stage": "importance", "ranking": ranking.names})

    records = []
    for mode in config.disparity_modes:
        try:
            audit_m = _apply_mode(config, rep, audit, mode)
            boot = bootstrap_metrics(audit_m, config.metrics, config.bootstrap_B, seed=seeds["baseline-bootstrap"])
        except AuditBenchError as exc:
            records += _skip_records(mode, rep, BASELINE, "audit", config.metrics, exc)
            for cond in conds:
                records += _skip_records(mode, rep, cond.experiment, cond.label, config.metrics, exc)
            continue
        # baseline values are fixed before any degradation runs
        records += _records_from_bootstrap(mode, rep, BASELINE, "audit", config.metrics, boot)
        events.append({"repetition": rep, "stage": "baseline_recorded", "mode": mode})

        if config.scenario == "A":
            records += _scenario_a(config, rep, mode, audit_m, conds)
            continue

        base = audit_m.without_predictions()
        for cond in conds:
            if cond.experiment == BASELINE:
                for m in config.metrics:
                    r = boot[m]
                    if isinstance(r, Exception):
                        records.append(Record(mode, rep, BASELINE, IDENTITY, m, skip_reason=type(r).__name__))
                    else:
                        records.append(
                            Record(mode, rep, BASELINE, IDENTITY, m, r.estimate.value, r.values, 0, pool_points=True)
                        )
                continue
            try:
                degraded = _degrade(config, rep, cond, base, ranking)
                if config.scenario == "B":
                    scored = predict(model, degraded)
                else:
                    scored = _replica_predictions(config, rep, cond, degraded, events)
                bseed = _seed(config, rep, "condition-bootstrap", cond.experiment, cond.label)
                boot_c = bootstrap_metrics(scored, config.metrics, config.bootstrap_B, seed=bseed)
            except AuditBenchError as exc:
                records += _skip_records(mode, rep, cond.experiment, cond.label, config.metrics, exc)
                continue
            records += _records_from_bootstrap(mode, rep, cond.experiment, cond.label, config.metrics, boot_c)
    return RepetitionOutput(rep, records, events, seeds)


def _run_rep(args):
    config, rep = args
    return run_repetition(config, rep)


# ----------------------------------------------------------------- assembly


def _baseline_pool(config, records):
    pools = {}
    for mode in config.disparity_modes:
        for m in config.metrics:
            vals = [r.values for r in records if r.experiment == BASELINE and r.condition == "audit"
                    and r.disparity_mode == mode and r.metric == m and not r.skipped]
            if vals:
                values = np.concatenate(vals)
                pools[(mode, m)] = (percentile_interval(values), values)
    return pools


def _reports(config, records, baseline):
    reports = {}
    keys = []
    for r in records:
        if r.experiment == BASELINE and r.condition == "audit":
            continue
        k = (r.experiment, r.condition, r.metric, r.disparity_mode)
        if k not in reports:
            reports[k] = None
            keys.append(k)
    for k in keys:
        exp, cond, m, mode = k
        group = [r for r in records if (r.experiment, r.condition, r.metric, r.disparity_mode) == k]
        values = [r.pooled() for r in group]
        values = np.concatenate(values) if values else np.zeros(0)
        n_skipped = sum(r.skipped for r in group)
        if (mode, m) not in baseline or values.size == 0:
            reports[k] = (None, n_skipped)
            continue
        report = compare(baseline[(mode, m)][0], values)
        if all(r.pool_points for r in group):
            # unmodified audit: the experiment interval is the baseline interval itself
            report = replace(
                report,
                experiment_interval=report.baseline_interval,
                experiment_config=report.baseline_config,
                outcome=AuditOutcome.ACCURATE,
            )
        reports[k] = (report, n_skipped)
    return reports


def run(config, jobs=1):
    started = _dt.datetime.now(_dt.timezone.utc).isoformat()
    tasks = [(config, rep) for rep in range(config.repetitions)]
    if jobs > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            outputs = list(pool.map(_run_rep, tasks))
    else:
        outputs = [_run_rep(t) for t in tasks]
    outputs.sort(key=lambda o: o.repetition)
    records = [r for o in outputs for r in o.records]
    baseline = _baseline_pool(config, records)
    reports = _reports(config, records, baseline)
    provenance = {
        "package_version": __version__,
        "config_hash": config.config_hash(),
        "config": config.to_dict(),
        "master_seed": config.master_seed,
        "jobs": jobs,
        "started": started,
        "finished": _dt.datetime.now(_dt.timezone.utc).isoformat(),
        "seeds": {str(o.repetition): o.seeds for o in outputs},
        "events": [e for o in outputs for e in o.events],
    }
    return ExperimentResult(config, records, baseline, reports, provenance)


def run_scenario_a(config, jobs=1):
    if config.scenario != "A":
        raise ValueError("config is not a scenario A experiment")
    return run(config, jobs)


def run_scenario_b(config, jobs=1):
    if config.scenario != "B":
        raise ValueError("config is not a scenario B experiment")
    return run(config, jobs)


def run_scenario_c(config, jobs=1):
    if config.scenario != "C":
        raise ValueError("config is not a scenario C experiment")
    return run(config, jobs)


# ----------------------------------------------------------------- aggregation


def aggregate(results):
    """Summary rows pooled over one or more results of the same configuration."""
    if not results:
        return []
    hashes = {r.config_hash for r in results}
    if len(hashes) != 1:
        raise MixedConfigs(f"results come from {len(hashes)} different configurations")
    config = results[0].config
    if len(results) == 1:
        records = results[0].records
        baseline = results[0].baseline
        reports = results[0].reports
    else:
        records = [r for res in results for r in res.records]
        baseline = _baseline_pool(config, records)
        reports = _reports(config, records, baseline)

    rows = []
    for (exp, cond, m, mode), (report, n_skipped) in reports.items():
        outcomes = {o.value: 0 for o in AuditOutcome}
        for res in results:
            entry = res.reports.get((exp, cond, m, mode))
            if entry and entry[0] is not None:
                outcomes[entry[0].outcome.value] += 1
        row = {
            "scenario": config.scenario,
            "experiment": exp,
            "condition": cond,
            "metric": m,
            "disparity_mode": mode,
            "n_skipped": n_skipped,
            "outcome_counts": outcomes,
        }
        if report is None:
            row.update(
                baseline_lower=None, baseline_upper=None, baseline_config="", experiment_config="",
                outcome="", overlap_proportion=None, n_values=0, median=None, q1=None, q3=None,
            )
        else:
            vals = np.asarray(report.experimental_values)
            row.update(report.as_row())
            row["n_skipped"] = n_skipped
            q1, med, q3 = np.percentile(vals, [25, 50, 75])
            row.update(median=float(med), q1=float(q1), q3=float(q3))
        rows.append(row)
    return rows


# ----------------------------------------------------------------- files


def fmt(v):
    if v is None:
        return ""
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (float, np.floating)):
        if math.isnan(v):
            return ""
        return repr(float(v))
    return str(v)


def write_results_csv(result, path):
    scenario = result.config.scenario
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(RESULTS_COLUMNS)
        for r in result.records:
            head = (scenario, r.experiment, r.condition, r.repetition, r.metric, r.disparity_mode)
            if r.skipped:
                w.writerow(head + ("", "point", "true", r.skip_reason))
                continue
            w.writerow(head + (fmt(r.point), "point", "false", ""))
            if r.pool_points:
                continue
            for v in r.values:
                w.writerow(head + (fmt(v), "bootstrap", "false", ""))


def write_summary_csv(rows, path):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(SUMMARY_COLUMNS)
        for row in rows:
            w.writerow([fmt(row[c]) for c in SUMMARY_COLUMNS])


def write_provenance(result, path):
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(result.provenance, fh, indent=2, sort_keys=True)
        fh.write("\n")


def read_summary_csv(path):
    with open(path, newline="", encoding="utf-8") as fh:
        return list(csv.DictReader(fh))


def read_results_csv(path):
    with open(path, newline="", encoding="utf-8") as fh:
        return list(csv.DictReader(fh))
