"""Tabular synthesizers: independent marginals, Gaussian copula and a DP chain-Bayes model.

Every synthesizer treats the group and ground-truth columns as ordinary
categorical columns. Predictions are never modelled.
"""

import json
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np
from scipy.special import ndtr, ndtri
from scipy.stats import rankdata

from .dataset import CATEGORICAL, NUMERIC, DataTable
from .errors import TooFewRows

INDEPENDENT = "independent_marginals"
COPULA = "gaussian_copula"
CHAIN_BAYES = "chain_bayes_dp"
SYNTHESIZERS = (INDEPENDENT, COPULA, CHAIN_BAYES)

FORMAT_NAME = "auditbench-synthesizer"
FORMAT_VERSION = 1

MIN_ROWS = 50
_QUANTILE_POINTS = 1025
_GROUP = "__group__"
_TARGET = "__y__"


@dataclass(frozen=True)
class SynthesizerSpec:
    kind: str
    epsilon: Optional[float] = None
    bins: Optional[int] = None
    seed: int = 0

    def __post_init__(self):
        if self.kind not in SYNTHESIZERS:
            raise ValueError(f"unknown synthesizer {self.kind!r}")
        dp = self.kind == CHAIN_BAYES
        if dp != (self.epsilon is not None) or dp != (self.bins is not None):
            raise ValueError("epsilon and bins are required for, and only for, chain_bayes_dp")
        if dp and not (self.epsilon > 0 and self.bins >= 1):
            raise ValueError("chain_bayes_dp needs epsilon > 0 and bins >= 1")

    @property
    def label(self):
        if self.kind == CHAIN_BAYES:
            return f"{self.kind}(eps={self.epsilon:g},bins={self.bins})"
        return self.kind


@dataclass
class Marginal:
    """Empirical marginal of one column: a quantile grid or category frequencies."""

    name: str
    kind: str
    quantiles: Optional[np.ndarray] = None
    categories: tuple = ()
    probs: Optional[np.ndarray] = None

    def inverse_cdf(self, u):
        if self.kind == NUMERIC:
            grid = np.linspace(0.0, 1.0, self.quantiles.size)
            return np.interp(u, grid, self.quantiles)
        edges = np.cumsum(self.probs)
        idx = np.minimum(np.searchsorted(edges, u, side="right"), len(self.categories) - 1)
        return idx

    def normal_scores(self, values):
        """Gaussian scores of observed values (average ranks for ties; categories map to interval midpoints)."""
        if self.kind == NUMERIC:
            u = (rankdata(values) - 0.5) / values.size
        else:
            upper = np.cumsum(self.probs)
            mid = upper - self.probs / 2.0
            u = mid[values]
        return ndtri(np.clip(u, 1e-9, 1 - 1e-9))


@dataclass
class FittedSynthesizer:
    spec: SynthesizerSpec
    schema: object
    marginals: list
    correlation: Optional[np.ndarray] = None
    order: list = field(default_factory=list)
    parents: dict = field(default_factory=dict)
    root_probs: Optional[np.ndarray] = None
    conditionals: dict = field(default_factory=dict)
    budget: list = field(default_factory=list)
    bin_edges: dict = field(default_factory=dict)

    def to_dict(self):
        def arr(a):
            return None if a is None else np.asarray(a).tolist()

        return {
            "format": FORMAT_NAME,
            "version": FORMAT_VERSION,
            "spec": {"kind": self.spec.kind, "epsilon": self.spec.epsilon, "bins": self.spec.bins, "seed": self.spec.seed},
            "schema": self.schema.to_dict(),
            "marginals": [
                {
                    "name": m.name,
                    "kind": m.kind,
                    "quantiles": arr(m.quantiles),
                    "categories": list(m.categories),
                    "probs": arr(m.probs),
                }
                for m in self.marginals
            ],
            "correlation": arr(self.correlation),
            "order": list(self.order),
            "parents": dict(self.parents),
            "root_probs": arr(self.root_probs),
            "conditionals": {k: arr(v) for k, v in self.conditionals.items()},
            "budget": [list(b) for b in self.budget],
            "bin_edges": {k: arr(v) for k, v in self.bin_edges.items()},
        }

    @classmethod
    def from_dict(cls, d):
        from .dataset import Schema

        if d.get("format") != FORMAT_NAME or d.get("version") != FORMAT_VERSION:
            raise ValueError("not a supported serialized synthesizer")

        def arr(a):
            return None if a is None else np.asarray(a, dtype=float)

        marginals = [
            Marginal(
                m["name"],
                m["kind"],
                arr(m["quantiles"]),
                tuple(m["categories"]),
                arr(m["probs"]),
            )
            for m in d["marginals"]
        ]
        return cls(
            SynthesizerSpec(**d["spec"]),
            Schema.from_dict(d["schema"]),
            marginals,
            arr(d["correlation"]),
            list(d["order"]),
            {k: v for k, v in d["parents"].items()},
            arr(d["root_probs"]),
            {k: arr(v) for k, v in d["conditionals"].items()},
            [tuple(b) for b in d["budget"]],
            {k: arr(v) for k, v in d["bin_edges"].items()},
        )

    @property
    def total_epsilon(self):
        return float(sum(eps for _, eps in self.budget))


def save_synthesizer(fitted, path):
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(fitted.to_dict(), fh, indent=2, sort_keys=True)
        fh.write("\n")


def load_synthesizer(path):
    with open(path, encoding="utf-8") as fh:
        return FittedSynthesizer.from_dict(json.load(fh))


# ----------------------------------------------------------------- columns


def _columns(table):
    """(name, kind, values) for every modelled column; categorical values as integer codes."""
    cols = []
    for f in table.schema.features:
        raw = table.features[f.name]
        if f.kind == NUMERIC:
            cols.append((f.name, NUMERIC, np.asarray(raw, dtype=float)))
        else:
            cols.append((f.name, CATEGORICAL, np.asarray(raw, dtype=object)))
    cols.append((_GROUP, CATEGORICAL, np.asarray(table.group).astype(object)))
    cols.append((_TARGET, CATEGORICAL, np.asarray(table.y).astype(object)))
    return cols


def _fit_marginal(name, kind, values):
    if kind == NUMERIC:
        obs = values[~np.isnan(values)]
        if obs.size == 0:
            obs = np.zeros(1)
        q = np.quantile(obs, np.linspace(0.0, 1.0, _QUANTILE_POINTS))
        return Marginal(name, NUMERIC, quantiles=q)
    seen = {}
    for v in values.tolist():
        if v is not None:
            seen[v] = seen.get(v, 0) + 1
    if not seen:
        raise TooFewRows(f"column {name!r} has no observed values")
    cats = tuple(seen)
    counts = np.array([seen[c] for c in cats], dtype=float)
    return Marginal(name, CATEGORICAL, categories=cats, probs=counts / counts.sum())


def _codes(marginal, values):
    """Integer codes of categorical values; MISSING becomes the modal category."""
    lookup = {c: i for i, c in enumerate(marginal.categories)}
    mode = int(np.argmax(marginal.probs))
    return np.array([lookup.get(v, mode) if v is not None else mode for v in values.tolist()], dtype=np.int64)


def _numeric_filled(marginal, values):
    out = np.array(values, dtype=float)
    out[np.isnan(out)] = float(np.median(marginal.quantiles))
    return out


def _nearest_psd_correlation(C):
    C = (C + C.T) / 2.0
    vals, vecs = np.linalg.eigh(C)
    vals = np.clip(vals, 1e-10, None)
    C = (vecs * vals) @ vecs.T
    d = np.sqrt(np.diag(C))
    C = C / np.outer(d, d)
    np.fill_diagonal(C, 1.0)
    return (C + C.T) / 2.0


def _mutual_information(a, b, ka, kb):
    joint = np.bincount(a * kb + b, minlength=ka * kb).reshape(ka, kb).astype(float)
    joint /= joint.sum()
    pa = joint.sum(axis=1, keepdims=True)
    pb = joint.sum(axis=0, keepdims=True)
    nz = joint > 0
    return float((joint[nz] * np.log(joint[nz] / (pa @ pb)[nz])).sum())


# ----------------------------------------------------------------- fit / sample


def fit(spec, table, seed=None):
    if len(table) < MIN_ROWS:
        raise TooFewRows(f"synthesizers need at least {MIN_ROWS} rows, got {len(table)}")
    seed = spec.seed if seed is None else seed
    schema = replace(table.schema, prediction_column=None)
    cols = _columns(table)
    marginals = [_fit_marginal(name, kind, values) for name, kind, values in cols]
    fitted = FittedSynthesizer(spec, schema, marginals)
    if spec.kind == COPULA:
        Z = np.column_stack(
            [
                m.normal_scores(_numeric_filled(m, v) if m.kind == NUMERIC else _codes(m, v))
                for m, (_, _, v) in zip(marginals, cols)
            ]
        )
        C = np.corrcoef(Z, rowvar=False)
        C = np.nan_to_num(np.atleast_2d(C), nan=0.0)
        np.fill_diagonal(C, 1.0)
        fitted.correlation = _nearest_psd_correlation(C)
    elif spec.kind == CHAIN_BAYES:
        _fit_chain(fitted, cols, np.random.default_rng(seed))
    return fitted


def _fit_chain(fitted, cols, rng):
    spec = fitted.spec
    names, codes, sizes = [], [], []
    for m, (name, kind, values) in zip(fitted.marginals, cols):
        if kind == NUMERIC:
            filled = _numeric_filled(m, values)
            edges = np.unique(np.quantile(filled, np.linspace(0, 1, spec.bins + 1)[1:-1]))
            fitted.bin_edges[name] = edges
            c = np.searchsorted(edges, filled, side="right")
            k = edges.size + 1
        else:
            c = _codes(m, values)
            k = len(m.categories)
        names.append(name)
        codes.append(c)
        sizes.append(k)

    d = len(names)
    mi = np.zeros((d, d))
    for i in range(d):
        for j in range(i + 1, d):
            mi[i, j] = mi[j, i] = _mutual_information(codes[i], codes[j], sizes[i], sizes[j])
    root = int(np.argmax(mi.sum(axis=1)))
    order, parents = [root], {}
    remaining = [i for i in range(d) if i != root]
    while remaining:
        best = max(((mi[p, c], -c, -p, c, p) for c in remaining for p in order))
        child, parent = best[3], best[4]
        order.append(child)
        parents[names[child]] = names[parent]
        remaining.remove(child)

    n_tables = d - 1
    table_eps = spec.epsilon / n_tables
    scale = 2.0 / table_eps
    for pos, child in enumerate(order[1:]):
        parent = names.index(parents[names[child]])
        kp, kc = sizes[parent], sizes[child]
        counts = np.bincount(codes[parent] * kc + codes[child], minlength=kp * kc).reshape(kp, kc).astype(float)
        noisy = np.maximum(counts + rng.laplace(0.0, scale, size=counts.shape), 0.0)
        fitted.budget.append((f"{names[parent]}->{names[child]}", table_eps))
        if pos == 0:
            root_counts = noisy.sum(axis=1)
            fitted.root_probs = _normalise(root_counts)
        fitted.conditionals[names[child]] = np.vstack([_normalise(row) for row in noisy])
    fitted.order = [names[i] for i in order]
    fitted.parents = parents


def _normalise(row):
    row = np.asarray(row, dtype=float)
    s = row.sum()
    if s <= 0:
        return np.full(row.shape, 1.0 / row.size)
    return row / s


def sample(fitted, n, seed=0):
    if not isinstance(n, (int, np.integer)) or n < 1:
        raise ValueError("n must be a positive integer")
    rng = np.random.default_rng(seed)
    kind = fitted.spec.kind
    by_name = {m.name: m for m in fitted.marginals}
    values = {}
    if kind == INDEPENDENT:
        for m in fitted.marginals:
            values[m.name] = m.inverse_cdf(rng.random(n))
    elif kind == COPULA:
        L = _sqrt_factor(fitted.correlation)
        U = ndtr(rng.standard_normal((n, L.shape[0])) @ L.T)
        for j, m in enumerate(fitted.marginals):
            values[m.name] = m.inverse_cdf(U[:, j])
    else:
        codes = {}
        root = fitted.order[0]
        codes[root] = _draw_categorical(rng, np.tile(fitted.root_probs, (n, 1)))
        for child in fitted.order[1:]:
            cond = fitted.conditionals[child]
            codes[child] = _draw_categorical(rng, cond[codes[fitted.parents[child]]])
        for name in fitted.order:
            m = by_name[name]
            if m.kind == NUMERIC:
                edges = fitted.bin_edges[name]
                grid_u = _bin_probability_bounds(m, edges)
                lo, hi = grid_u[codes[name]], grid_u[codes[name] + 1]
                values[name] = m.inverse_cdf(lo + (hi - lo) * rng.random(n))
            else:
                values[name] = codes[name]
    return _assemble(fitted, by_name, values, n)


def _bin_probability_bounds(marginal, edges):
    """Quantile-level bounds [u_k, u_{k+1}] for each bin of a discretised numeric column."""
    grid = np.linspace(0.0, 1.0, marginal.quantiles.size)
    inner = np.interp(edges, marginal.quantiles, grid) if edges.size else np.zeros(0)
    return np.concatenate([[0.0], inner, [1.0]])


def _draw_categorical(rng, probs):
    cum = np.cumsum(probs, axis=1)
    u = rng.random(probs.shape[0])[:, None]
    return np.minimum((u >= cum).sum(axis=1), probs.shape[1] - 1)


def _sqrt_factor(C):
    vals, vecs = np.linalg.eigh(C)
    return vecs * np.sqrt(np.clip(vals, 0.0, None))


def _assemble(fitted, by_name, values, n):
    features = {}
    for f in fitted.schema.features:
        m = by_name[f.name]
        if f.kind == NUMERIC:
            features[f.name] = np.asarray(values[f.name], dtype=float)
        else:
            cats = np.array(m.categories, dtype=object)
            features[f.name] = cats[np.asarray(values[f.name], dtype=np.int64)]
    group_m, y_m = by_name[_GROUP], by_name[_TARGET]
    group = np.array(group_m.categories, dtype=np.int8)[np.asarray(values[_GROUP], dtype=np.int64)]
    y = np.array(y_m.categories, dtype=np.int8)[np.asarray(values[_TARGET], dtype=np.int64)]
    return DataTable(fitted.schema, features, group, y)
