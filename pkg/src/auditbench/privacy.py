"""Laplace-mechanism release of grouped confusion matrices.

Every individual falls in exactly one of the eight group x outcome cells, so
each cell is released with the full budget (parallel composition) and
sensitivity 1.
"""

import csv
from dataclasses import dataclass

import numpy as np

from .errors import NonPositiveEpsilon, UndefinedRate
from .metrics import GroupedConfusion, MetricEstimate, metric_values

CLAMP_ZERO = "clamp_zero"
NO_POSTPROCESS = "none"


@dataclass(frozen=True)
class LaplaceParams:
    epsilon: float
    seed: int = 0
    sensitivity: float = 1.0

    def __post_init__(self):
        if not self.epsilon > 0:
            raise NonPositiveEpsilon(f"epsilon must be positive, got {self.epsilon}")
        if self.sensitivity != 1.0:
            raise ValueError("count-cell sensitivity is fixed at 1")

    @property
    def scale(self):
        return self.sensitivity / self.epsilon


@dataclass(frozen=True)
class NoisyGroupedConfusion:
    cells: np.ndarray
    params: LaplaceParams

    def grouped(self):
        return GroupedConfusion.from_cells(self.cells)


def laplace_release(grouped, params):
    exact = np.asarray(grouped.cells() if isinstance(grouped, GroupedConfusion) else grouped, dtype=float)
    noise = np.random.default_rng(params.seed).laplace(0.0, params.scale, size=8)
    cells = exact + noise
    cells.setflags(write=False)
    return NoisyGroupedConfusion(cells, params)


def add_laplace_noise(cells, epsilon, seed):
    """Independent Laplace(1/epsilon) noise on every cell of an array shaped ``(..., 8)``."""
    if not epsilon > 0:
        raise NonPositiveEpsilon(f"epsilon must be positive, got {epsilon}")
    cells = np.asarray(cells, dtype=float)
    return cells + np.random.default_rng(seed).laplace(0.0, 1.0 / epsilon, size=cells.shape)


def postprocess(noisy, policy=CLAMP_ZERO):
    if policy == NO_POSTPROCESS:
        return noisy
    if policy != CLAMP_ZERO:
        raise ValueError(f"unknown post-processing policy {policy!r}")
    cells = np.maximum(noisy.cells, 0.0)
    cells.setflags(write=False)
    return NoisyGroupedConfusion(cells, noisy.params)


def noisy_metric_values(cells, metric):
    """Metric over real-valued cells; a denominator below 1 is uncomputable (NaN)."""
    return np.clip(metric_values(cells, metric, floor=1.0), -1.0, 1.0)


def metric_from_noisy(noisy, metric):
    value = float(noisy_metric_values(noisy.cells, metric))
    if np.isnan(value):
        raise UndefinedRate(f"{metric}: denominator below 1 after noise")
    return MetricEstimate(metric, value)


def write_release_csv(path, releases):
    """Write noisy matrices as ``(group, tp, fp, fn, tn, epsilon, draw_index)`` rows.

    ``releases`` is an iterable of ``(draw_index, NoisyGroupedConfusion)``.
    """
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["group", "tp", "fp", "fn", "tn", "epsilon", "draw_index"])
        for draw, noisy in releases:
            for label, part in (("underprivileged", noisy.cells[:4]), ("privileged", noisy.cells[4:])):
                w.writerow([label, *(repr(float(v)) for v in part), repr(float(noisy.params.epsilon)), draw])
