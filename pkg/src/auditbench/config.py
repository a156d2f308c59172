"""Experiment configuration: parsing, normalisation and validation.

Configs are YAML mappings. Normative keys::

    dataset.kind            benchmark | csv
    dataset.benchmark       BenchmarkSpec fields      (kind: benchmark)
    dataset.path, .schema   CSV path and schema        (kind: csv)
    model.class             logistic_regression | boosted_stumps | dp_logistic_regression
    scenario                A | B | C
    metrics                 subset of SPD, AOD, EOD
    grids.subsample         fractions in (0, 1] or absolute row counts
    grids.features          numbers of weakest features to drop
    grids.missingness       missingness rates in [0, 0.6]
    grids.epsilon           Laplace budgets (scenario A only)
    grids.synthesizers      synthesizer specs
    disparity_mode          natural | skewed, or a list of both
    repetitions, bootstrap_B, master_seed
    replica_model           auditor's assumed model spec (scenario C, optional)
"""

import hashlib
import json
import os
from dataclasses import dataclass, field, replace

import yaml

from .dataset import BenchmarkSpec, Schema
from .degrade import MAX_MISSING_RATE
from .errors import ConfigError
from .metrics import METRICS
from .models import DP_LOGISTIC, MODEL_CLASSES, ModelSpec
from .synth import CHAIN_BAYES, SynthesizerSpec

SCENARIOS = ("A", "B", "C")
DISPARITY_MODES = ("natural", "skewed")

# which grids may be populated under each access scenario
COMPATIBILITY = {
    "A": ("subsample", "epsilon"),
    "B": ("subsample", "features", "missingness", "synthesizers"),
    "C": ("subsample", "features", "missingness", "synthesizers"),
}
GRID_KEYS = ("subsample", "features", "missingness", "epsilon", "synthesizers")

SEED_ENV = "AUDITBENCH_SEED"


@dataclass(frozen=True)
class DatasetSource:
    kind: str
    benchmark: BenchmarkSpec = None
    path: str = None
    schema: Schema = None

    def to_dict(self):
        if self.kind == "benchmark":
            b = self.benchmark
            d = {k: getattr(b, k) for k in b.__dataclass_fields__}
            d["weights"] = list(d["weights"]) if d["weights"] is not None else None
            return {"kind": "benchmark", "benchmark": d}
        return {"kind": "csv", "path": self.path, "schema": self.schema.to_dict()}


@dataclass(frozen=True)
class Grids:
    subsample: tuple = ()
    features: tuple = ()
    missingness: tuple = ()
    epsilon: tuple = ()
    synthesizers: tuple = ()

    def is_empty(self):
        return not any(getattr(self, k) for k in GRID_KEYS)


def _model_dict(spec):
    return {"class": spec.model_class, **{k: v for k, v in spec.to_dict().items() if k != "model_class"}}


@dataclass(frozen=True)
class ExperimentConfig:
    dataset: DatasetSource
    model: ModelSpec
    scenario: str
    metrics: tuple = METRICS
    grids: Grids = field(default_factory=Grids)
    disparity_modes: tuple = ("natural",)
    repetitions: int = 100
    bootstrap_B: int = 500
    master_seed: int = 0
    split_fraction: float = 0.7
    skew_share: float = 0.95
    missing_top_m: int = 5
    postprocess: str = "clamp_zero"
    # auditor's assumed model spec for replication; defaults to ``model``
    replica_model: ModelSpec = None

    def to_dict(self):
        return {
            "dataset": self.dataset.to_dict(),
            "model": _model_dict(self.model),
            "scenario": self.scenario,
            "metrics": list(self.metrics),
            "grids": {
                "subsample": list(self.grids.subsample),
                "features": list(self.grids.features),
                "missingness": list(self.grids.missingness),
                "epsilon": list(self.grids.epsilon),
                "synthesizers": [
                    {k: v for k, v in (("kind", s.kind), ("epsilon", s.epsilon), ("bins", s.bins)) if v is not None}
                    for s in self.grids.synthesizers
                ],
            },
            "disparity_mode": list(self.disparity_modes),
            "repetitions": self.repetitions,
            "bootstrap_B": self.bootstrap_B,
            "master_seed": self.master_seed,
            "split_fraction": self.split_fraction,
            "skew_share": self.skew_share,
            "missing_top_m": self.missing_top_m,
            "postprocess": self.postprocess,
            **({"replica_model": _model_dict(self.replica_model)} if self.replica_model else {}),
        }

    def config_hash(self):
        blob = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()[:16]

    def with_seed(self, seed):
        return replace(self, master_seed=int(seed))


def _as_list(v):
    if v is None:
        return []
    if isinstance(v, (list, tuple)):
        return list(v)
    return [v]


def _number(v):
    return isinstance(v, (int, float)) and not isinstance(v, bool)


def _parse_model(m, key, diags):
    if not isinstance(m, dict):
        diags.append(f"{key}: must be a mapping")
        return None
    m = dict(m)
    cls = m.pop("class", "logistic_regression")
    if cls not in MODEL_CLASSES:
        diags.append(f"{key}.class: unknown model class {cls!r}")
        return None
    if cls == DP_LOGISTIC and "l2" not in m:
        m["l2"] = 1e-3
    try:
        return ModelSpec(model_class=cls, **m)
    except (TypeError, ValueError) as exc:
        diags.append(f"{key}: {exc}")
        return None


def parse_config(raw, base_dir="."):
    """Validate a raw mapping and build an :class:`ExperimentConfig`.

    Every violation is collected; a :class:`ConfigError` carries them all.
    """
    diags = []
    if not isinstance(raw, dict):
        raise ConfigError("config must be a mapping")
    known = {
        "dataset", "model", "scenario", "metrics", "grids", "disparity_mode", "repetitions",
        "bootstrap_B", "master_seed", "split_fraction", "skew_share", "missing_top_m", "postprocess",
        "replica_model",
    }
    for key in raw:
        if key not in known:
            diags.append(f"{key}: unknown key")

    dataset = None
    ds = raw.get("dataset")
    if not isinstance(ds, dict):
        diags.append("dataset: required mapping")
    else:
        kind = ds.get("kind")
        if kind == "benchmark":
            try:
                dataset = DatasetSource("benchmark", benchmark=BenchmarkSpec(**(ds.get("benchmark") or {})))
            except (TypeError, ValueError) as exc:
                diags.append(f"dataset.benchmark: {exc}")
        elif kind == "csv":
            path = ds.get("path")
            if not path:
                diags.append("dataset.path: required for csv datasets")
            try:
                schema = Schema.from_dict(ds.get("schema") or {})
            except Exception as exc:  # noqa: BLE001 - schema errors come in several types
                diags.append(f"dataset.schema: {exc}")
                schema = None
            if path and schema is not None:
                if not os.path.isabs(path):
                    path = os.path.normpath(os.path.join(base_dir, path))
                dataset = DatasetSource("csv", path=path, schema=schema)
        else:
            diags.append(f"dataset.kind: expected 'benchmark' or 'csv', got {kind!r}")

    model = _parse_model(raw.get("model") or {}, "model", diags)
    replica = None
    if raw.get("replica_model") is not None:
        replica = _parse_model(raw["replica_model"], "replica_model", diags)

    scenario = raw.get("scenario")
    if scenario not in SCENARIOS:
        diags.append(f"scenario: expected one of A, B, C, got {scenario!r}")

    metrics = tuple(_as_list(raw.get("metrics", list(METRICS))))
    bad = [x for x in metrics if x not in METRICS]
    if bad or not metrics:
        diags.append(f"metrics: must be a non-empty subset of {list(METRICS)}")

    g = raw.get("grids") or {}
    grids = Grids()
    if not isinstance(g, dict):
        diags.append("grids: must be a mapping")
    else:
        for key in g:
            if key not in GRID_KEYS:
                diags.append(f"grids.{key}: unknown grid")
        vals = {k: _as_list(g.get(k)) for k in GRID_KEYS}
        sub = []
        for v in vals["subsample"]:
            if v == "full":
                v = 1.0
            if not _number(v) or v <= 0 or (v > 1 and float(v) != int(v)):
                diags.append(f"grids.subsample: {v!r} is neither a fraction in (0, 1] nor a row count")
            else:
                sub.append(float(v) if v <= 1 else int(v))
        feats = []
        for v in vals["features"]:
            if not _number(v) or v < 0 or float(v) != int(v):
                diags.append(f"grids.features: {v!r} is not a non-negative integer")
            else:
                feats.append(int(v))
        miss = []
        for v in vals["missingness"]:
            if not _number(v) or not 0 <= v <= MAX_MISSING_RATE:
                diags.append(f"grids.missingness: {v!r} outside [0, {MAX_MISSING_RATE}]")
            else:
                miss.append(float(v))
        eps = []
        for v in vals["epsilon"]:
            if not _number(v) or not v > 0:
                diags.append(f"grids.epsilon: {v!r} is not a positive budget")
            else:
                eps.append(float(v))
        synths = []
        for v in vals["synthesizers"]:
            if isinstance(v, str):
                v = {"kind": v}
            if not isinstance(v, dict):
                diags.append(f"grids.synthesizers: {v!r} is not a synthesizer spec")
                continue
            v = dict(v)
            if v.get("kind") == CHAIN_BAYES:
                v.setdefault("bins", 8)
            try:
                synths.append(SynthesizerSpec(**v))
            except (TypeError, ValueError) as exc:
                diags.append(f"grids.synthesizers: {exc}")
        grids = Grids(tuple(sub), tuple(feats), tuple(miss), tuple(eps), tuple(synths))

        if scenario in SCENARIOS:
            allowed = COMPATIBILITY[scenario]
            for key in GRID_KEYS:
                if vals[key] and key not in allowed:
                    diags.append(
                        f"grids.{key}: not applicable under access scenario {scenario} "
                        f"(scenario/experiment compatibility matrix allows only {', '.join(allowed)})"
                    )
            if scenario == "A" and not vals["epsilon"]:
                diags.append("grids.epsilon: scenario A needs at least one privacy budget")

    modes = tuple(_as_list(raw.get("disparity_mode", "natural")))
    if not modes or any(x not in DISPARITY_MODES for x in modes) or len(set(modes)) != len(modes):
        diags.append(f"disparity_mode: expected values from {list(DISPARITY_MODES)}")

    ints = {}
    for key, default, lo in (("repetitions", 100, 1), ("bootstrap_B", 500, 1), ("missing_top_m", 5, 1)):
        v = raw.get(key, default)
        if not isinstance(v, int) or isinstance(v, bool) or v < lo:
            diags.append(f"{key}: must be an integer >= {lo}")
        ints[key] = v
    seed = raw.get("master_seed", 0)
    if not isinstance(seed, int) or isinstance(seed, bool) or not 0 <= seed < 2**64:
        diags.append("master_seed: must be an unsigned 64-bit integer")
    frac = raw.get("split_fraction", 0.7)
    if not _number(frac) or not 0 < frac < 1:
        diags.append("split_fraction: must lie strictly between 0 and 1")
    share = raw.get("skew_share", 0.95)
    if not _number(share) or not 0 <= share <= 1:
        diags.append("skew_share: must lie in [0, 1]")
    if replica is not None and scenario != "C":
        diags.append("replica_model: only used by access scenario C")
    post = raw.get("postprocess", "clamp_zero")
    if post not in ("clamp_zero", "none"):
        diags.append("postprocess: expected 'clamp_zero' or 'none'")

    if (
        dataset is not None
        and dataset.kind == "benchmark"
        and isinstance(ints["missing_top_m"], int)
        and grids.missingness
        and ints["missing_top_m"] > dataset.benchmark.n_features
    ):
        diags.append("missing_top_m: exceeds the number of benchmark features")
    if dataset is not None and dataset.kind == "benchmark" and grids.features:
        too_many = [k for k in grids.features if k > dataset.benchmark.n_features]
        if too_many:
            diags.append(f"grids.features: cannot drop {max(too_many)} of {dataset.benchmark.n_features} features")

    if diags:
        raise ConfigError(diags)
    return ExperimentConfig(
        dataset=dataset,
        model=model,
        scenario=scenario,
        metrics=metrics,
        grids=grids,
        disparity_modes=modes,
        repetitions=ints["repetitions"],
        bootstrap_B=ints["bootstrap_B"],
        master_seed=seed,
        split_fraction=float(frac),
        skew_share=float(share),
        missing_top_m=ints["missing_top_m"],
        postprocess=post,
        replica_model=replica,
    )


def read_raw(path):
    """Parse the YAML file; raises ``OSError`` for IO problems and ConfigError for syntax."""
    with open(path, encoding="utf-8") as fh:
        text = fh.read()
    try:
        return yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigError(f"parse error: {exc}") from None


def load_config(path):
    return parse_config(read_raw(path), base_dir=os.path.dirname(os.path.abspath(path)))
