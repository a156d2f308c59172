"""Record-level data-quality loss operators and the high-disparity skew."""

from dataclasses import dataclass

import numpy as np

from .dataset import NUMERIC, PRIVILEGED, UNDERPRIVILEGED, round_half_up
from .errors import EmptyResult, NoPositivePredictions, UnknownFeature

SUBSAMPLE = "subsample"
DROP_FEATURES = "drop_weakest_features"
MISSINGNESS = "disparate_missingness"
SKEW = "skew_disparity"

MAX_MISSING_RATE = 0.6


@dataclass(frozen=True)
class DegradationSpec:
    """One data-quality loss: ``kind`` plus its single parameter.

    ``value`` is the subsample fraction (or an absolute row count above 1),
    the number of weakest features to drop, the missingness rate, or the skew
    share, depending on ``kind``.
    """

    kind: str
    value: float
    seed: int = 0
    top_m: int = 5

    def __post_init__(self):
        v = self.value
        if self.kind == SUBSAMPLE:
            if not v > 0:
                raise ValueError("subsample size must be positive")
            if v > 1 and float(v) != int(v):
                raise ValueError("absolute subsample sizes must be integers")
        elif self.kind == DROP_FEATURES:
            if v < 0 or float(v) != int(v):
                raise ValueError("feature drop count must be a non-negative integer")
        elif self.kind == MISSINGNESS:
            if not 0 <= v <= MAX_MISSING_RATE:
                raise ValueError(f"missingness rate must lie in [0, {MAX_MISSING_RATE}]")
        elif self.kind == SKEW:
            if not 0 <= v <= 1:
                raise ValueError("skew share must lie in [0, 1]")
        else:
            raise ValueError(f"unknown degradation kind {self.kind!r}")

    @property
    def label(self):
        if self.kind == SUBSAMPLE:
            return f"n={int(self.value)}" if self.value > 1 else f"frac={self.value:g}"
        if self.kind == DROP_FEATURES:
            return f"k={int(self.value)}"
        if self.kind == MISSINGNESS:
            return f"rate={self.value:g}"
        return f"share={self.value:g}"

    def apply(self, table, ranking=None, seed=None):
        seed = self.seed if seed is None else seed
        if self.kind == SUBSAMPLE:
            if self.value > 1:
                return subsample_rows(table, int(self.value), seed)
            return subsample(table, self.value, seed)
        if self.kind == DROP_FEATURES:
            return drop_weakest_features(table, int(self.value), ranking)
        if self.kind == MISSINGNESS:
            return inject_missingness(table, self.value, ranking, self.top_m, seed)
        return skew_disparity(table, self.value, seed)


def _keep_in_order(table, n_keep, seed):
    n = len(table)
    chosen = np.zeros(n, dtype=bool)
    chosen[np.random.default_rng(seed).choice(n, size=n_keep, replace=False)] = True
    return table.take(np.flatnonzero(chosen))


def subsample(table, fraction, seed=0):
    if not 0.0 < fraction <= 1.0:
        raise ValueError("fraction must lie in (0, 1]")
    if fraction == 1.0:
        return table
    k = round_half_up(fraction * len(table))
    if k == 0:
        raise EmptyResult(f"fraction {fraction} of {len(table)} rows rounds to zero")
    return _keep_in_order(table, k, seed)


def subsample_rows(table, n_rows, seed=0):
    """Keep ``n_rows`` rows (all of them when the table is not larger)."""
    if n_rows < 1:
        raise EmptyResult("subsample size must be at least one row")
    if n_rows >= len(table):
        return table
    return _keep_in_order(table, n_rows, seed)


def _check_ranking(table, ranking):
    if ranking is None:
        raise UnknownFeature("a feature ranking is required")
    missing = set(table.feature_names) - set(ranking.names)
    if missing:
        raise UnknownFeature(f"ranking does not cover {sorted(missing)}")


def drop_weakest_features(table, k, ranking):
    """Remove the ``k`` lowest-importance features (cumulative)."""
    _check_ranking(table, ranking)
    present = [name for name in ranking.names if name in table.features]
    if k > len(present):
        raise ValueError(f"cannot drop {k} of {len(present)} features")
    if k == 0:
        return table
    return table.drop_features(present[:k])


def inject_missingness(table, rate, ranking, m=5, seed=0):
    """Blank ``floor(rate * n_underprivileged)`` cells in each of the top-``m`` features.

    Cells are chosen uniformly among underprivileged rows, independently per
    feature; privileged rows are never touched.
    """
    if not 0.0 <= rate <= MAX_MISSING_RATE:
        raise ValueError(f"rate must lie in [0, {MAX_MISSING_RATE}]")
    _check_ranking(table, ranking)
    if m > len(table.feature_names):
        raise ValueError(f"m={m} exceeds the {len(table.feature_names)} available features")
    targets = [name for name in ranking.names[::-1] if name in table.features][:m]
    under = np.flatnonzero(table.group == UNDERPRIVILEGED)
    count = int(np.floor(rate * under.size))
    if count == 0:
        return table
    rng = np.random.default_rng(seed)
    updates = {}
    for name in targets:
        rows = rng.choice(under, size=count, replace=False)
        if table.schema.feature(name).kind == NUMERIC:
            col = np.array(table.features[name], dtype=float)
            col[rows] = np.nan
        else:
            col = np.array(table.features[name], dtype=object)
            col[rows] = None
        updates[name] = col
    return table.with_features(updates)


def skew_disparity(table, share=0.95, seed=0):
    """Relabel positive-prediction rows: ``round(share * P)`` become underprivileged, the rest privileged."""
    if not table.has_predictions:
        raise NoPositivePredictions("table carries no predictions")
    positives = np.flatnonzero(table.yhat == 1)
    P = positives.size
    if P == 0:
        raise NoPositivePredictions("no positive predictions to reassign")
    k = round_half_up(share * P)
    chosen = np.random.default_rng(seed).choice(positives, size=k, replace=False)
    group = np.array(table.group)
    group[positives] = PRIVILEGED
    group[chosen] = UNDERPRIVILEGED
    return table.with_group(group)


def compose(table, specs, ranking=None):
    for spec in specs:
        table = spec.apply(table, ranking)
    return table
