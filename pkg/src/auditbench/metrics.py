"""Per-group confusion counts, parity metrics and percentile bootstrap intervals.

All differences are underprivileged minus privileged; 0 means parity.

Cells are laid out as an 8-vector ``[tp, fp, fn, tn]`` for the underprivileged
group followed by the same four for the privileged group. The vectorised
helpers accept any array whose last axis has length 8.
"""

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .dataset import UNDERPRIVILEGED
from .errors import EmptyGroup, PredictionsAbsent, TooManyDegenerate, UndefinedRate

SPD = "SPD"
AOD = "AOD"
EOD = "EOD"
METRICS = (SPD, AOD, EOD)

MAX_DEGENERATE_SHARE = 0.2


@dataclass(frozen=True)
class ConfusionMatrix:
    tp: float
    fp: float
    fn: float
    tn: float

    @property
    def total(self):
        return self.tp + self.fp + self.fn + self.tn

    def as_tuple(self):
        return (self.tp, self.fp, self.fn, self.tn)


@dataclass(frozen=True)
class GroupedConfusion:
    underprivileged: ConfusionMatrix
    privileged: ConfusionMatrix

    def cells(self):
        return np.array(self.underprivileged.as_tuple() + self.privileged.as_tuple(), dtype=float)

    @classmethod
    def from_cells(cls, cells):
        c = [v.item() if hasattr(v, "item") else v for v in cells]
        return cls(ConfusionMatrix(*c[:4]), ConfusionMatrix(*c[4:]))

    def swapped(self):
        return GroupedConfusion(self.privileged, self.underprivileged)


@dataclass(frozen=True)
class Interval:
    lower: float
    upper: float
    level: float = 0.95

    def __post_init__(self):
        if self.lower > self.upper:
            raise ValueError(f"interval lower {self.lower} exceeds upper {self.upper}")

    @property
    def width(self):
        return self.upper - self.lower

    def contains(self, v):
        return self.lower <= v <= self.upper


@dataclass(frozen=True)
class MetricEstimate:
    metric: str
    value: float
    interval: Optional[Interval] = None


@dataclass(frozen=True)
class BootstrapResult:
    estimate: MetricEstimate
    values: np.ndarray
    n_degenerate: int

    @property
    def interval(self):
        return self.estimate.interval


def row_codes(table):
    """Map each row to its cell index in the 8-vector layout."""
    if not table.has_predictions:
        raise PredictionsAbsent("table carries no predictions")
    y = table.y.astype(np.int64)
    yhat = table.yhat.astype(np.int64)
    offset = np.where(table.group == UNDERPRIVILEGED, 0, 4)
    return offset + 2 * (1 - yhat) + (1 - y)


def cell_counts(table):
    return np.bincount(row_codes(table), minlength=8).astype(np.int64)


def confusion_by_group(table):
    counts = cell_counts(table)
    if counts[:4].sum() == 0:
        raise EmptyGroup("no underprivileged rows")
    if counts[4:].sum() == 0:
        raise EmptyGroup("no privileged rows")
    return GroupedConfusion.from_cells(counts.tolist())


def _ratio(num, den, floor):
    ok = den >= floor if floor > 0 else den > 0
    with np.errstate(divide="ignore", invalid="ignore"):
        return np.where(ok, num / np.where(ok, den, 1.0), np.nan)


def metric_values(cells, metric, floor=0.0):
    """Vectorised metric over ``cells[..., 8]``; NaN where a needed denominator is too small.

    With ``floor == 0`` a denominator must be strictly positive, otherwise it
    must be at least ``floor``.
    """
    c = np.asarray(cells, dtype=float)
    u_tp, u_fp, u_fn, u_tn = (c[..., i] for i in range(4))
    p_tp, p_fp, p_fn, p_tn = (c[..., i] for i in range(4, 8))
    if metric == SPD:
        return _ratio(u_tp + u_fp, u_tp + u_fp + u_fn + u_tn, floor) - _ratio(
            p_tp + p_fp, p_tp + p_fp + p_fn + p_tn, floor
        )
    tpr_gap = _ratio(u_tp, u_tp + u_fn, floor) - _ratio(p_tp, p_tp + p_fn, floor)
    if metric == EOD:
        return tpr_gap
    if metric == AOD:
        fpr_gap = _ratio(u_fp, u_fp + u_tn, floor) - _ratio(p_fp, p_fp + p_tn, floor)
        return 0.5 * (fpr_gap + tpr_gap)
    raise ValueError(f"unknown metric {metric!r}")


def parity_metric(grouped, metric):
    value = float(metric_values(grouped.cells(), metric))
    if np.isnan(value):
        raise UndefinedRate(f"{metric}: zero denominator")
    return MetricEstimate(metric, value)


def percentile_interval(values, level=0.95):
    values = np.asarray(values, dtype=float)
    alpha = 100.0 * (1.0 - level) / 2.0
    lo, hi = np.percentile(values, [alpha, 100.0 - alpha])
    return Interval(float(lo), float(hi), level)


def resample_stream(seed, index):
    """Generator for resample ``index``; independent of how resamples are scheduled."""
    return np.random.default_rng(np.random.SeedSequence(int(seed), spawn_key=(int(index),)))


def bootstrap_cells(table, B, seed):
    """Cell counts of ``B`` row-level resamples with replacement, shape ``(B, 8)``."""
    codes = row_codes(table)
    n = codes.shape[0]
    out = np.empty((B, 8), dtype=np.int64)
    for b in range(B):
        idx = resample_stream(seed, b).integers(0, n, size=n)
        out[b] = np.bincount(codes[idx], minlength=8)
    return out


def summarise_bootstrap(point, resampled, metric, level=0.95):
    """Drop uncomputable resamples and build the percentile interval."""
    resampled = np.asarray(resampled, dtype=float)
    keep = ~np.isnan(resampled)
    n_bad = int((~keep).sum())
    if n_bad > MAX_DEGENERATE_SHARE * resampled.size:
        raise TooManyDegenerate(f"{metric}: {n_bad} of {resampled.size} resamples uncomputable")
    values = resampled[keep]
    interval = percentile_interval(values, level)
    return BootstrapResult(MetricEstimate(metric, point, interval), values, n_bad)


def bootstrap_metrics(table, metrics=METRICS, B=500, level=0.95, seed=0):
    """Bootstrap several metrics off one shared set of resamples.

    Returns a dict ``metric -> BootstrapResult | Exception`` so one
    uncomputable metric does not discard the others.
    """
    grouped = confusion_by_group(table)
    cells = bootstrap_cells(table, B, seed)
    out = {}
    for m in metrics:
        try:
            point = parity_metric(grouped, m).value
            out[m] = summarise_bootstrap(point, metric_values(cells, m), m, level)
        except (UndefinedRate, TooManyDegenerate) as exc:
            out[m] = exc
    return out


def bootstrap_ci(table, metric, B=500, level=0.95, seed=0):
    if B < 1:
        raise ValueError("B must be positive")
    result = bootstrap_metrics(table, (metric,), B, level, seed)[metric]
    if isinstance(result, Exception):
        raise result
    return result
