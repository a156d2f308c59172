"""Comparison of an experimental audit against the baseline interval."""

from dataclasses import dataclass
from enum import Enum

import numpy as np

from .errors import EmptyValues, InvalidInterval
from .metrics import Interval, percentile_interval


class IntervalConfiguration(str, Enum):
    NEGATIVE = "NegativeDisparity"
    PARITY = "Parity"
    POSITIVE = "PositiveDisparity"


class AuditOutcome(str, Enum):
    ACCURATE = "Accurate"
    TYPE1 = "Type1"
    TYPE2 = "Type2"
    REVERSE = "Reverse"


def classify_configuration(interval):
    """Closed-interval rule: an endpoint at exactly 0 still counts as parity."""
    lower, upper = (interval.lower, interval.upper) if isinstance(interval, Interval) else interval
    if not lower <= upper:
        raise InvalidInterval(f"lower {lower} exceeds upper {upper}")
    if upper < 0:
        return IntervalConfiguration.NEGATIVE
    if lower > 0:
        return IntervalConfiguration.POSITIVE
    return IntervalConfiguration.PARITY


def classify_outcome(baseline, experiment):
    if baseline == experiment:
        return AuditOutcome.ACCURATE
    if baseline == IntervalConfiguration.PARITY:
        return AuditOutcome.TYPE1
    if experiment == IntervalConfiguration.PARITY:
        return AuditOutcome.TYPE2
    return AuditOutcome.REVERSE


def overlap_proportion(baseline_interval, values):
    values = np.asarray(values, dtype=float)
    if values.size == 0:
        raise EmptyValues("no experimental values to compare")
    lower, upper = (
        (baseline_interval.lower, baseline_interval.upper)
        if isinstance(baseline_interval, Interval)
        else baseline_interval
    )
    return float(np.mean((values >= lower) & (values <= upper)))


@dataclass(frozen=True)
class ReliabilityReport:
    baseline_interval: Interval
    experiment_interval: Interval
    baseline_config: IntervalConfiguration
    experiment_config: IntervalConfiguration
    outcome: AuditOutcome
    overlap_proportion: float
    n_values: int
    n_uncomputable: int = 0
    experimental_values: tuple = ()

    def as_row(self):
        return {
            "baseline_lower": self.baseline_interval.lower,
            "baseline_upper": self.baseline_interval.upper,
            "baseline_config": self.baseline_config.value,
            "experiment_config": self.experiment_config.value,
            "outcome": self.outcome.value,
            "overlap_proportion": self.overlap_proportion,
            "n_values": self.n_values,
            "n_skipped": self.n_uncomputable,
        }


def compare(baseline_interval, values, n_uncomputable=0, level=0.95):
    """Build a report from pooled experimental values; their percentile interval sets the experiment configuration."""
    values = np.asarray(values, dtype=float)
    if values.size == 0:
        raise EmptyValues("no experimental values to compare")
    experiment_interval = percentile_interval(values, level)
    base_cfg = classify_configuration(baseline_interval)
    exp_cfg = classify_configuration(experiment_interval)
    return ReliabilityReport(
        baseline_interval,
        experiment_interval,
        base_cfg,
        exp_cfg,
        classify_outcome(base_cfg, exp_cfg),
        overlap_proportion(baseline_interval, values),
        int(values.size),
        int(n_uncomputable),
        tuple(values.tolist()),
    )
