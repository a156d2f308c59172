"""Dependency-free binary classifiers used by the simulated organisation and auditors.

Three model classes are provided: full-batch logistic regression, boosted
decision stumps on the log-loss gradient, and an output-perturbed
(differentially private) logistic regression.
"""

import json
from dataclasses import asdict, dataclass, field
from typing import Optional

import numpy as np
from scipy.special import expit

from .dataset import NUMERIC
from .errors import EmptyTable, NonPositiveL2, TooFewRows

LOGISTIC = "logistic_regression"
STUMPS = "boosted_stumps"
DP_LOGISTIC = "dp_logistic_regression"
MODEL_CLASSES = (LOGISTIC, STUMPS, DP_LOGISTIC)

MEAN_MODE = "mean_mode"
ZERO = "zero"

FORMAT_NAME = "auditbench-model"
FORMAT_VERSION = 1

_MAX_BACKTRACK = 60
_N_THRESHOLDS = 32
_N_SHUFFLES = 5


@dataclass(frozen=True)
class ModelSpec:
    model_class: str = LOGISTIC
    learning_rate: float = 0.5
    epochs: int = 300
    n_stumps: int = 100
    l2: float = 0.0
    dp_epsilon: Optional[float] = None
    imputation_policy: str = MEAN_MODE

    def __post_init__(self):
        if self.model_class not in MODEL_CLASSES:
            raise ValueError(f"unknown model class {self.model_class!r}")
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be positive")
        if self.epochs < 1 or self.n_stumps < 1:
            raise ValueError("epochs and n_stumps must be positive")
        if self.l2 < 0:
            raise ValueError("l2 must be non-negative")
        if (self.dp_epsilon is not None) != (self.model_class == DP_LOGISTIC):
            raise ValueError("dp_epsilon is required for, and only for, dp_logistic_regression")
        if self.dp_epsilon is not None and not self.dp_epsilon > 0:
            raise ValueError("dp_epsilon must be positive")
        if self.imputation_policy not in (MEAN_MODE, ZERO):
            raise ValueError(f"unknown imputation policy {self.imputation_policy!r}")

    def to_dict(self):
        return asdict(self)


# ------------------------------------------------------------------- encoding


@dataclass(frozen=True)
class FeatureEncoding:
    """How one raw feature becomes design-matrix columns, plus its imputation value."""

    name: str
    kind: str
    fill: object
    categories: tuple = ()

    @property
    def width(self):
        return 1 if self.kind == NUMERIC else len(self.categories)


def _first_appearance(values):
    seen = {}
    for v in values:
        if v is not None and v not in seen:
            seen[v] = len(seen)
    return tuple(seen)


def fit_encoding(table, policy):
    out = []
    for f in table.schema.features:
        col = table.features[f.name]
        if f.kind == NUMERIC:
            fill = 0.0
            if policy == MEAN_MODE and not np.isnan(col).all():
                fill = float(np.nanmean(col))
            out.append(FeatureEncoding(f.name, NUMERIC, fill))
        else:
            cats = _first_appearance(col.tolist())
            fill = None
            if policy == MEAN_MODE and cats:
                vals = [v for v in col.tolist() if v is not None]
                counts = {c: 0 for c in cats}
                for v in vals:
                    counts[v] += 1
                fill = max(cats, key=lambda c: counts[c])  # first-appearance order breaks ties
            out.append(FeatureEncoding(f.name, f.kind, fill, cats))
    return tuple(out)


def encode(encodings, table):
    """Design matrix for ``table``; absent features and MISSING cells take the fill value."""
    n = len(table)
    blocks = []
    for enc in encodings:
        present = enc.name in table.features
        if enc.kind == NUMERIC:
            if present:
                col = np.array(table.features[enc.name], dtype=float)
                col[np.isnan(col)] = enc.fill
            else:
                col = np.full(n, enc.fill, dtype=float)
            blocks.append(col[:, None])
        else:
            block = np.zeros((n, len(enc.categories)))
            if present:
                raw = table.features[enc.name]
                values = np.array([enc.fill if v is None else v for v in raw.tolist()], dtype=object)
            else:
                values = np.full(n, enc.fill, dtype=object)
            for j, cat in enumerate(enc.categories):
                block[:, j] = values == cat
            blocks.append(block)
    if not blocks:
        return np.zeros((n, 0))
    return np.hstack(blocks)


# ------------------------------------------------------------------- model


@dataclass
class TrainedModel:
    spec: ModelSpec
    feature_names: list
    encodings: tuple
    params: dict
    degenerate: bool = False
    loss_history: list = field(default_factory=list)

    def decision_function(self, table):
        X = encode(self.encodings, table)
        p = self.params
        if self.degenerate:
            return np.full(len(table), p["constant_logit"])
        if self.spec.model_class == STUMPS:
            F = np.full(len(table), p["init"])
            for j, t, left, right in p["stumps"]:
                F += np.where(X[:, j] <= t, left, right)
            return F
        Z = _transform(X, p["scaling"])
        return Z @ np.asarray(p["weights"]) + p["intercept"]

    def predict_proba(self, table):
        return expit(self.decision_function(table))

    def to_dict(self):
        p = dict(self.params)
        if "weights" in p:
            p["weights"] = [float(w) for w in p["weights"]]
        if "scaling" in p:
            p["scaling"] = {k: (v if isinstance(v, str) else [float(x) for x in v]) for k, v in p["scaling"].items()}
        return {
            "format": FORMAT_NAME,
            "version": FORMAT_VERSION,
            "model_class": self.spec.model_class,
            "hyperparameters": self.spec.to_dict(),
            "feature_names": list(self.feature_names),
            "imputation": [
                {"name": e.name, "kind": e.kind, "fill": e.fill, "categories": list(e.categories)}
                for e in self.encodings
            ],
            "degenerate": self.degenerate,
            "parameters": p,
        }

    @classmethod
    def from_dict(cls, d):
        if d.get("format") != FORMAT_NAME:
            raise ValueError("not a serialized auditbench model")
        if d.get("version") != FORMAT_VERSION:
            raise ValueError(f"unsupported model format version {d.get('version')}")
        spec = ModelSpec(**d["hyperparameters"])
        encodings = tuple(
            FeatureEncoding(e["name"], e["kind"], e["fill"], tuple(e["categories"])) for e in d["imputation"]
        )
        params = dict(d["parameters"])
        if "stumps" in params:
            params["stumps"] = [tuple(s) for s in params["stumps"]]
        return cls(spec, list(d["feature_names"]), encodings, params, d["degenerate"])


def save_model(model, path):
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(model.to_dict(), fh, indent=2, sort_keys=True)
        fh.write("\n")


def load_model(path):
    with open(path, encoding="utf-8") as fh:
        return TrainedModel.from_dict(json.load(fh))


# ------------------------------------------------------------------- fitting


def _transform(X, scaling):
    if scaling["kind"] == "standard":
        return (X - np.asarray(scaling["shift"])) / np.asarray(scaling["scale"])
    # unit: min-max into [-1, 1], then shrink rows (with the intercept column) into the unit ball
    lo, span = np.asarray(scaling["shift"]), np.asarray(scaling["scale"])
    Z = 2.0 * np.clip((X - lo) / span, 0.0, 1.0) - 1.0
    return Z / np.sqrt(X.shape[1] + 1)


def _standard_scaling(X):
    mu = X.mean(axis=0)
    sd = X.std(axis=0)
    sd[sd == 0] = 1.0
    return {"kind": "standard", "shift": mu.tolist(), "scale": sd.tolist()}


def _unit_scaling(X):
    lo = X.min(axis=0) if len(X) else np.zeros(X.shape[1])
    span = (X.max(axis=0) - lo) if len(X) else np.ones(X.shape[1])
    span[span == 0] = 1.0
    return {"kind": "unit", "shift": lo.tolist(), "scale": span.tolist()}


def _objective(w, b, Z, y, l2):
    margin = Z @ w + b
    return np.logaddexp(0.0, -(2 * y - 1) * margin).mean() + 0.5 * l2 * (w @ w)


def fit_logistic(Z, y, spec, fit_intercept=True):
    """Full-batch gradient descent on the mean log-loss plus ``l2/2 * |w|^2``.

    A step that would raise the objective is halved until it does not, so the
    recorded loss history is non-increasing. The intercept is unpenalised.
    """
    n, d = Z.shape
    y = y.astype(float)
    w = np.zeros(d)
    b = 0.0
    step = spec.learning_rate
    loss = _objective(w, b, Z, y, spec.l2)
    history = [loss]
    for _ in range(spec.epochs):
        r = expit(Z @ w + b) - y
        gw = Z.T @ r / n + spec.l2 * w
        gb = r.mean() if fit_intercept else 0.0
        for _ in range(_MAX_BACKTRACK):
            w_new, b_new = w - step * gw, b - step * gb
            new_loss = _objective(w_new, b_new, Z, y, spec.l2)
            if new_loss <= loss:
                w, b, loss = w_new, b_new, new_loss
                break
            step *= 0.5
        history.append(loss)
    return w, b, history


def fit_logistic_newton(Z, y, l2, max_iter=100, tol=1e-10):
    """Damped Newton iterations for the strongly convex penalised log-loss (no intercept)."""
    n, d = Z.shape
    y = y.astype(float)
    w = np.zeros(d)
    loss = _objective(w, 0.0, Z, y, l2)
    history = [loss]
    for _ in range(max_iter):
        p = expit(Z @ w)
        grad = Z.T @ (p - y) / n + l2 * w
        hess = (Z * (p * (1 - p))[:, None]).T @ Z / n + l2 * np.eye(d)
        direction = np.linalg.solve(hess, grad)
        step = 1.0
        for _ in range(_MAX_BACKTRACK):
            w_new = w - step * direction
            new_loss = _objective(w_new, 0.0, Z, y, l2)
            if new_loss <= loss:
                break
            step *= 0.5
        else:
            break
        done = loss - new_loss < tol
        w, loss = w_new, new_loss
        history.append(loss)
        if done:
            break
    return w, history


def _bin_thresholds(col):
    qs = np.quantile(col, np.linspace(0, 1, _N_THRESHOLDS + 2)[1:-1])
    t = np.unique(qs)
    return t[t < col.max()] if col.size else t


def fit_stumps(X, y, spec):
    n, d = X.shape
    y = y.astype(float)
    rate = np.clip(y.mean(), 1e-6, 1 - 1e-6)
    init = float(np.log(rate / (1 - rate)))
    F = np.full(n, init)
    thresholds = [_bin_thresholds(X[:, j]) for j in range(d)]
    bins = [np.searchsorted(thresholds[j], X[:, j], side="left") for j in range(d)]
    stumps = []
    for _ in range(spec.n_stumps):
        p = expit(F)
        g = y - p
        h = p * (1 - p)
        best = None
        G, N = g.sum(), float(n)
        for j in range(d):
            t = thresholds[j]
            if t.size == 0:
                continue
            k = t.size + 1
            gl = np.cumsum(np.bincount(bins[j], weights=g, minlength=k))[:-1]
            nl = np.cumsum(np.bincount(bins[j], minlength=k))[:-1].astype(float)
            nr = N - nl
            ok = (nl > 0) & (nr > 0)
            if not ok.any():
                continue
            gain = np.where(ok, gl**2 / np.where(ok, nl, 1) + (G - gl) ** 2 / np.where(ok, nr, 1), -np.inf)
            i = int(np.argmax(gain))
            if best is None or gain[i] > best[0] + 1e-12:
                best = (gain[i], j, float(t[i]))
        if best is None:
            break
        _, j, thr = best
        left = X[:, j] <= thr
        hl, hr = h[left].sum(), h[~left].sum()
        lv = spec.learning_rate * (g[left].sum() / hl if hl > 0 else 0.0)
        rv = spec.learning_rate * (g[~left].sum() / hr if hr > 0 else 0.0)
        F += np.where(left, lv, rv)
        stumps.append((j, thr, float(lv), float(rv)))
    return init, stumps


def _constant_model(spec, table, encodings, label):
    logit = 30.0 if label == 1 else -30.0
    return TrainedModel(spec, table.feature_names, encodings, {"constant_logit": logit}, degenerate=True)


def _prepare(spec, table):
    if len(table) == 0:
        raise EmptyTable("cannot train on an empty table")
    encodings = fit_encoding(table, spec.imputation_policy)
    X = encode(encodings, table)
    return encodings, X


def train(spec, table, seed=0):
    if spec.model_class == DP_LOGISTIC:
        return train_dp(spec, table, seed)
    encodings, X = _prepare(spec, table)
    y = np.asarray(table.y)
    if np.unique(y).size < 2:
        return _constant_model(spec, table, encodings, int(y[0]))
    if spec.model_class == STUMPS:
        init, stumps = fit_stumps(X, y, spec)
        return TrainedModel(spec, table.feature_names, encodings, {"init": init, "stumps": stumps})
    scaling = _standard_scaling(X)
    w, b, history = fit_logistic(_transform(X, scaling), y, spec)
    params = {"weights": w, "intercept": float(b), "scaling": scaling}
    return TrainedModel(spec, table.feature_names, encodings, params, loss_history=history)


def dp_noise_scale(n, l2, epsilon):
    return 2.0 / (n * l2 * epsilon)


def _fit_dp_clean(spec, table):
    if not spec.l2 > 0:
        raise NonPositiveL2("output perturbation needs a strictly positive l2 penalty")
    encodings, X = _prepare(spec, table)
    scaling = _unit_scaling(X)
    Z = _transform(X, scaling)
    bias = 1.0 / np.sqrt(X.shape[1] + 1)
    # the bias is an ordinary (penalised) column so every row lies in the unit ball
    Zb = np.hstack([Z, np.full((len(Z), 1), bias)])
    coef, history = fit_logistic_newton(Zb, np.asarray(table.y), spec.l2, max_iter=spec.epochs)
    return encodings, scaling, coef, bias, history


def train_dp(spec, table, seed=0):
    """Output-perturbed L2-regularised logistic regression.

    The penalised minimiser is computed on rows scaled into the unit ball, then
    every coefficient (bias included) receives Laplace noise of scale
    ``2 / (n * l2 * epsilon)``.
    """
    if spec.model_class != DP_LOGISTIC:
        raise ValueError("train_dp needs a dp_logistic_regression spec")
    encodings, scaling, coef, bias, history = _fit_dp_clean(spec, table)
    scale = dp_noise_scale(len(table), spec.l2, spec.dp_epsilon)
    coef = coef + np.random.default_rng(seed).laplace(0.0, scale, size=coef.size)
    params = {"weights": coef[:-1], "intercept": float(coef[-1] * bias), "scaling": scaling}
    return TrainedModel(spec, table.feature_names, encodings, params, loss_history=history)


def clean_dp_coefficients(spec, table):
    """Noise-free coefficients (bias last) that ``train_dp`` perturbs."""
    return _fit_dp_clean(spec, table)[2]


def predict(model, table):
    yhat = (model.predict_proba(table) >= 0.5).astype(np.int8)
    return table.with_predictions(yhat)


def accuracy(model, table):
    return float(np.mean(predict(model, table).yhat == table.y))


# ------------------------------------------------------------------- importance


@dataclass(frozen=True)
class ImportanceRanking:
    """Features ordered from weakest to strongest."""

    entries: tuple

    @property
    def names(self):
        return [name for name, _ in self.entries]

    def score(self, name):
        return dict(self.entries)[name]

    def weakest(self, k):
        return self.names[:k]

    def strongest(self, m):
        return self.names[::-1][:m]


def feature_importance(model, table, seed=0):
    """Permutation importance: mean accuracy drop over shuffles of each column, floored at 0."""
    if len(table) < 20:
        raise TooFewRows("permutation importance needs at least 20 rows")
    rng = np.random.default_rng(seed)
    y = np.asarray(table.y)
    base = float(np.mean((model.predict_proba(table) >= 0.5) == y))
    scores = []
    for name in model.feature_names:
        drops = []
        for _ in range(_N_SHUFFLES):
            perm = rng.permutation(len(table))
            if name in table.features:
                shuffled = table.with_features({name: table.features[name][perm]})
            else:
                shuffled = table
            acc = float(np.mean((model.predict_proba(shuffled) >= 0.5) == y))
            drops.append(base - acc)
        scores.append(max(0.0, float(np.mean(drops))))
    order = sorted(range(len(scores)), key=lambda i: scores[i])
    return ImportanceRanking(tuple((model.feature_names[i], scores[i]) for i in order))
