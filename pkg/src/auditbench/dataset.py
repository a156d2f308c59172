"""Tabular data model, CSV ingestion, seeded splitting and the benchmark generator.

Numeric MISSING cells are stored as NaN; categorical MISSING cells as ``None``.
Group membership is held as an ``int8`` array with 1 for the underprivileged
group and 0 for the privileged group.
"""

import csv
import math
from dataclasses import dataclass, replace
from typing import Optional

import numpy as np
from scipy.optimize import brentq
from scipy.special import expit

from .errors import (
    BadLabel,
    DegenerateSplit,
    EmptyFile,
    MissingColumn,
    SchemaError,
)

NUMERIC = "numeric"
CATEGORICAL = "categorical"

PRIVILEGED = 0
UNDERPRIVILEGED = 1


@dataclass(frozen=True)
class Feature:
    name: str
    kind: str
    categories: Optional[tuple] = None

    def __post_init__(self):
        if self.kind not in (NUMERIC, CATEGORICAL):
            raise SchemaError(f"feature {self.name!r}: unknown kind {self.kind!r}")
        if self.categories is not None:
            object.__setattr__(self, "categories", tuple(str(c) for c in self.categories))


@dataclass(frozen=True)
class Schema:
    features: tuple
    group_column: str = "group"
    privileged_value: str = "privileged"
    underprivileged_value: str = "underprivileged"
    target_column: str = "y"
    prediction_column: Optional[str] = None
    missing_token: str = ""

    def __post_init__(self):
        feats = []
        for f in self.features:
            if isinstance(f, Feature):
                feats.append(f)
            elif isinstance(f, dict):
                feats.append(Feature(f["name"], f["kind"], f.get("categories")))
            else:
                feats.append(Feature(*f))
        object.__setattr__(self, "features", tuple(feats))

        names = [f.name for f in feats]
        if len(set(names)) != len(names):
            raise SchemaError("duplicate feature column names")
        roles = [self.group_column, self.target_column]
        if self.prediction_column is not None:
            roles.append(self.prediction_column)
        if len(set(roles)) != len(roles):
            raise SchemaError("group, target and prediction columns must be distinct")
        overlap = set(roles) & set(names)
        if overlap:
            raise SchemaError(f"role columns also listed as features: {sorted(overlap)}")
        if str(self.privileged_value) == str(self.underprivileged_value):
            raise SchemaError("privileged_value must differ from underprivileged_value")
        object.__setattr__(self, "privileged_value", str(self.privileged_value))
        object.__setattr__(self, "underprivileged_value", str(self.underprivileged_value))

    @property
    def feature_names(self):
        return [f.name for f in self.features]

    def feature(self, name):
        for f in self.features:
            if f.name == name:
                return f
        raise KeyError(name)

    def without(self, names):
        names = set(names)
        return replace(self, features=tuple(f for f in self.features if f.name not in names))

    def group_label(self, code):
        return self.underprivileged_value if code == UNDERPRIVILEGED else self.privileged_value

    def to_dict(self):
        return {
            "features": [
                {"name": f.name, "kind": f.kind, **({"categories": list(f.categories)} if f.categories else {})}
                for f in self.features
            ],
            "group_column": self.group_column,
            "privileged_value": self.privileged_value,
            "underprivileged_value": self.underprivileged_value,
            "target_column": self.target_column,
            "prediction_column": self.prediction_column,
            "missing_token": self.missing_token,
        }

    @classmethod
    def from_dict(cls, d):
        d = dict(d)
        feats = d.pop("features", None)
        if feats is None:
            feats = d.pop("feature_columns")
        return cls(features=tuple(feats), **d)


def _frozen(a):
    a = np.asarray(a)
    a.setflags(write=False)
    return a


class DataTable:
    """Immutable column store: features, group codes, ground truth and optional predictions."""

    def __init__(self, schema, features, group, y, yhat=None):
        self.schema = schema
        n = len(y)
        cols = {}
        for f in schema.features:
            if f.name not in features:
                raise SchemaError(f"missing feature column {f.name!r}")
            col = features[f.name]
            if f.kind == NUMERIC:
                col = np.asarray(col, dtype=float)
            else:
                col = np.asarray(col, dtype=object)
                if f.categories is not None:
                    bad = set(col.tolist()) - set(f.categories) - {None}
                    if bad:
                        raise SchemaError(f"{f.name!r}: value {sorted(map(str, bad))[0]!r} outside declared categories")
            if col.shape != (n,):
                raise SchemaError(f"column {f.name!r} has {col.shape[0]} rows, expected {n}")
            cols[f.name] = _frozen(col)
        self.features = cols
        self.group = _frozen(np.asarray(group, dtype=np.int8))
        self.y = _frozen(np.asarray(y, dtype=np.int8))
        if self.group.shape != (n,):
            raise SchemaError("group column length mismatch")
        if not np.isin(self.group, (0, 1)).all():
            raise BadLabel("group codes must be 0 or 1")
        if not np.isin(self.y, (0, 1)).all():
            raise BadLabel("target must be 0 or 1")
        if yhat is not None:
            yhat = _frozen(np.asarray(yhat, dtype=np.int8))
            if yhat.shape != (n,):
                raise SchemaError("prediction column length mismatch")
            if not np.isin(yhat, (0, 1)).all():
                raise BadLabel("predictions must be 0 or 1")
        self.yhat = yhat

    def __len__(self):
        return int(self.y.shape[0])

    def __repr__(self):
        return (
            f"DataTable(n={len(self)}, features={self.feature_names}, "
            f"predictions={'yes' if self.has_predictions else 'no'})"
        )

    @property
    def n_rows(self):
        return len(self)

    @property
    def feature_names(self):
        return self.schema.feature_names

    @property
    def has_predictions(self):
        return self.yhat is not None

    def take(self, idx):
        idx = np.asarray(idx)
        return DataTable(
            self.schema,
            {k: v[idx] for k, v in self.features.items()},
            self.group[idx],
            self.y[idx],
            None if self.yhat is None else self.yhat[idx],
        )

    def with_predictions(self, yhat):
        return DataTable(self.schema, self.features, self.group, self.y, yhat)

    def without_predictions(self):
        return DataTable(self.schema, self.features, self.group, self.y, None)

    def with_group(self, group):
        return DataTable(self.schema, self.features, group, self.y, self.yhat)

    def with_features(self, updates):
        cols = dict(self.features)
        cols.update(updates)
        return DataTable(self.schema, cols, self.group, self.y, self.yhat)

    def drop_features(self, names):
        names = set(names)
        schema = self.schema.without(names)
        cols = {k: v for k, v in self.features.items() if k not in names}
        return DataTable(schema, cols, self.group, self.y, self.yhat)

    def missing_mask(self, name):
        col = self.features[name]
        if self.schema.feature(name).kind == NUMERIC:
            return np.isnan(col)
        return np.array([v is None for v in col], dtype=bool)

    def group_counts(self):
        n_u = int(self.group.sum())
        return {"underprivileged": n_u, "privileged": len(self) - n_u}

    def base_rates(self):
        out = {}
        for label, code in (("underprivileged", UNDERPRIVILEGED), ("privileged", PRIVILEGED)):
            mask = self.group == code
            out[label] = float(self.y[mask].mean()) if mask.any() else float("nan")
        return out

    def equals(self, other):
        if self.schema != other.schema or len(self) != len(other):
            return False
        if not (np.array_equal(self.group, other.group) and np.array_equal(self.y, other.y)):
            return False
        if (self.yhat is None) != (other.yhat is None):
            return False
        if self.yhat is not None and not np.array_equal(self.yhat, other.yhat):
            return False
        for f in self.schema.features:
            a, b = self.features[f.name], other.features[f.name]
            if f.kind == NUMERIC:
                if not np.array_equal(a, b, equal_nan=True):
                    return False
            elif list(a) != list(b):
                return False
        return True


@dataclass(frozen=True)
class SplitSpec:
    fraction: float = 0.7
    seed: int = 0

    def __post_init__(self):
        if not 0.0 < self.fraction < 1.0:
            raise ValueError("split fraction must lie strictly between 0 and 1")


def round_half_up(x):
    return int(math.floor(x + 0.5))


def split_sizes(n, fraction):
    """Size of the first part, clamped so both parts keep at least one row."""
    if n < 2:
        raise DegenerateSplit(f"cannot split a table of {n} rows")
    return min(max(round_half_up(fraction * n), 1), n - 1)


def split(table, spec):
    n = len(table)
    k = split_sizes(n, spec.fraction)
    rng = np.random.default_rng(spec.seed)
    first = np.zeros(n, dtype=bool)
    first[rng.choice(n, size=k, replace=False)] = True
    return table.take(np.flatnonzero(first)), table.take(np.flatnonzero(~first))


# --------------------------------------------------------------------------- CSV


def _parse_binary(cell, what, row):
    s = cell.strip()
    if s in ("0", "1"):
        return int(s)
    try:
        v = float(s)
    except ValueError:
        raise BadLabel(f"row {row}: {what} value {cell!r} is not 0/1") from None
    if v in (0.0, 1.0):
        return int(v)
    raise BadLabel(f"row {row}: {what} value {cell!r} is not 0/1")


def load_csv(path, schema):
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise EmptyFile(f"{path}: no header row") from None
        rows = list(reader)
    rows = [r for r in rows if r]
    if not rows:
        raise EmptyFile(f"{path}: no data rows")

    index = {name: i for i, name in enumerate(header)}
    required = schema.feature_names + [schema.group_column, schema.target_column]
    if schema.prediction_column is not None:
        required.append(schema.prediction_column)
    for name in required:
        if name not in index:
            raise MissingColumn(f"{path}: column {name!r} absent from header")

    token = schema.missing_token
    n = len(rows)
    group = np.empty(n, dtype=np.int8)
    y = np.empty(n, dtype=np.int8)
    for i, r in enumerate(rows):
        g = r[index[schema.group_column]]
        if g == schema.underprivileged_value:
            group[i] = UNDERPRIVILEGED
        elif g == schema.privileged_value:
            group[i] = PRIVILEGED
        else:
            raise BadLabel(f"row {i}: group value {g!r} is not a declared group")
        y[i] = _parse_binary(r[index[schema.target_column]], "target", i)

    yhat = None
    if schema.prediction_column is not None:
        cells = [r[index[schema.prediction_column]] for r in rows]
        absent = [c == token for c in cells]
        if all(absent):
            yhat = None
        elif any(absent):
            raise BadLabel(f"row {absent.index(True)}: predictions must be present for all rows or none")
        else:
            yhat = np.array([_parse_binary(c, "prediction", i) for i, c in enumerate(cells)], dtype=np.int8)

    features = {}
    for f in schema.features:
        j = index[f.name]
        if f.kind == NUMERIC:
            col = np.empty(n)
            for i, r in enumerate(rows):
                cell = r[j]
                if cell == token:
                    col[i] = np.nan
                    continue
                try:
                    col[i] = float(cell)
                except ValueError:
                    col[i] = np.nan
        else:
            col = np.array([None if r[j] == token else r[j] for r in rows], dtype=object)
        features[f.name] = col
    return DataTable(schema, features, group, y, yhat)


def _format_number(v):
    return repr(float(v))


def write_csv(table, path):
    """Write ``table`` so that ``load_csv(path, table.schema)`` reproduces it."""
    schema = table.schema
    token = schema.missing_token
    header = schema.feature_names + [schema.group_column, schema.target_column]
    pred_col = schema.prediction_column
    if table.has_predictions and pred_col is None:
        pred_col = "prediction"
    if pred_col is not None:
        header.append(pred_col)
    cols = []
    for f in schema.features:
        col = table.features[f.name]
        if f.kind == NUMERIC:
            cols.append([token if np.isnan(v) else _format_number(v) for v in col])
        else:
            cols.append([token if v is None else str(v) for v in col])
    cols.append([schema.group_label(g) for g in table.group])
    cols.append([str(int(v)) for v in table.y])
    if pred_col is not None:
        if table.has_predictions:
            cols.append([str(int(v)) for v in table.yhat])
        else:
            cols.append([token] * len(table))
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(zip(*cols))


# --------------------------------------------------------------------- benchmark


@dataclass(frozen=True)
class BenchmarkSpec:
    """Parameters of the synthetic benchmark population.

    ``group_balance`` is the probability that a row belongs to the underprivileged
    group. ``weights`` (one per feature, numeric first) default to a geometric
    decay so the first feature dominates. ``group_feature_shift`` moves the mean
    of every numeric feature for underprivileged rows.
    """

    n_rows: int = 25_000
    n_numeric_features: int = 6
    n_categorical_features: int = 2
    group_balance: float = 0.5
    base_rate_privileged: float = 0.5
    base_rate_underprivileged: float = 0.5
    signal_strength: float = 1.0
    seed: int = 0
    weights: Optional[tuple] = None
    group_feature_shift: float = 0.0
    n_categories: int = 3

    def __post_init__(self):
        if not isinstance(self.n_rows, (int, np.integer)) or self.n_rows <= 0:
            raise ValueError("n_rows must be a positive integer")
        if self.n_numeric_features < 0 or self.n_categorical_features < 0:
            raise ValueError("feature counts must be non-negative")
        for name in ("group_balance", "base_rate_privileged", "base_rate_underprivileged"):
            v = getattr(self, name)
            if not 0.0 < v < 1.0:
                raise ValueError(f"{name} must lie in the open unit interval")
        if self.signal_strength < 0:
            raise ValueError("signal_strength must be non-negative")
        if self.n_categories < 1:
            raise ValueError("n_categories must be positive")
        if self.weights is not None:
            object.__setattr__(self, "weights", tuple(float(w) for w in self.weights))
            if len(self.weights) != self.n_features:
                raise ValueError("weights must have one entry per feature")

    @property
    def n_features(self):
        return self.n_numeric_features + self.n_categorical_features

    def feature_weights(self):
        if self.weights is not None:
            return np.array(self.weights)
        return 0.5 ** np.arange(self.n_features)

    def schema(self):
        feats = [Feature(f"x{j}", NUMERIC) for j in range(self.n_numeric_features)]
        cats = tuple(f"L{k}" for k in range(self.n_categories))
        feats += [Feature(f"c{j}", CATEGORICAL, cats) for j in range(self.n_categorical_features)]
        return Schema(features=tuple(feats))


def _solve_offset(linear, rate):
    if linear.size == 0:
        return math.log(rate / (1 - rate))
    f = lambda b: expit(linear + b).mean() - rate  # noqa: E731
    lo, hi = -60.0, 60.0
    return brentq(f, lo, hi, xtol=1e-12)


def generate_benchmark(spec):
    rng = np.random.default_rng(spec.seed)
    n = spec.n_rows
    group = (rng.random(n) < spec.group_balance).astype(np.int8)
    numeric = rng.standard_normal((n, spec.n_numeric_features))
    numeric += spec.group_feature_shift * group[:, None]
    codes = rng.integers(0, spec.n_categories, size=(n, spec.n_categorical_features))

    w = spec.feature_weights()
    centred = codes - (spec.n_categories - 1) / 2.0
    design = np.hstack([numeric, centred]) if spec.n_features else np.zeros((n, 0))
    linear = spec.signal_strength * (design @ w) if spec.n_features else np.zeros(n)

    offsets = np.empty(2)
    offsets[PRIVILEGED] = _solve_offset(linear[group == PRIVILEGED], spec.base_rate_privileged)
    offsets[UNDERPRIVILEGED] = _solve_offset(linear[group == UNDERPRIVILEGED], spec.base_rate_underprivileged)
    y = (rng.random(n) < expit(linear + offsets[group])).astype(np.int8)

    schema = spec.schema()
    features = {f"x{j}": numeric[:, j] for j in range(spec.n_numeric_features)}
    levels = np.array([f"L{k}" for k in range(spec.n_categories)], dtype=object)
    for j in range(spec.n_categorical_features):
        features[f"c{j}"] = levels[codes[:, j]]
    return DataTable(schema, features, group, y)
