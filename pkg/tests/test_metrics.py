import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from auditbench.errors import EmptyGroup, PredictionsAbsent, TooManyDegenerate, UndefinedRate
from auditbench.metrics import (
    AOD,
    EOD,
    METRICS,
    SPD,
    ConfusionMatrix,
    GroupedConfusion,
    bootstrap_ci,
    confusion_by_group,
    parity_metric,
    percentile_interval,
)
from conftest import make_table, tally


def grouped(u, p):
    return GroupedConfusion(ConfusionMatrix(*u), ConfusionMatrix(*p))


def test_four_row_confusion():
    t = make_table([(1, 1, "u"), (0, 0, "u"), (1, 0, "p"), (0, 1, "p")])
    g = confusion_by_group(t)
    assert g.underprivileged.as_tuple() == (1, 0, 0, 1)
    assert g.privileged.as_tuple() == (0, 1, 1, 0)


def test_empty_group_and_absent_predictions():
    with pytest.raises(EmptyGroup):
        confusion_by_group(make_table([(1, 1, "u"), (0, 1, "u")]))
    t = make_table([(1, 1, "u"), (0, 1, "p")]).without_predictions()
    with pytest.raises(PredictionsAbsent):
        confusion_by_group(t)


def test_counts_match_tally_on_random_rows():
    rng = np.random.default_rng(0)
    rows = [(int(a), int(b), "u" if c else "p") for a, b, c in rng.integers(0, 2, size=(10000, 3))]
    g = confusion_by_group(make_table(rows))
    ref = tally(rows)
    assert g.underprivileged == ConfusionMatrix(**ref["u"])
    assert g.privileged == ConfusionMatrix(**ref["p"])


def test_worked_example():
    g = grouped((40, 10, 10, 40), (45, 15, 5, 35))
    for m in METRICS:
        assert parity_metric(g, m).value == pytest.approx(-0.10, abs=1e-12)


def test_identical_groups_give_zero():
    g = grouped((3, 4, 5, 6), (3, 4, 5, 6))
    assert all(parity_metric(g, m).value == 0 for m in METRICS)


def test_perfect_predictor():
    g = grouped((50, 0, 0, 50), (30, 0, 0, 70))
    assert parity_metric(g, EOD).value == 0
    assert parity_metric(g, AOD).value == 0
    assert parity_metric(g, SPD).value == pytest.approx(0.2)


def test_undefined_rate():
    g = grouped((0, 3, 0, 3), (1, 1, 1, 1))
    with pytest.raises(UndefinedRate):
        parity_metric(g, EOD)
    assert parity_metric(g, SPD).value == pytest.approx(0.0)


counts = st.tuples(*[st.integers(0, 30)] * 4).filter(lambda c: c[0] + c[2] > 0 and c[1] + c[3] > 0)


@given(counts, counts)
def test_antisymmetric_under_group_swap(u, p):
    g = grouped(u, p)
    for m in METRICS:
        assert parity_metric(g.swapped(), m).value == pytest.approx(-parity_metric(g, m).value, abs=1e-12)


@given(counts, counts)
def test_metrics_bounded(u, p):
    g = grouped(u, p)
    for m in METRICS:
        assert -1 <= parity_metric(g, m).value <= 1


def test_zero_width_interval_without_variance():
    t = make_table([(1, 1, "u")] * 20 + [(1, 1, "p")] * 20)
    r = bootstrap_ci(t, SPD, B=200, seed=1)
    assert r.estimate.value == 0
    assert r.interval.lower == r.interval.upper == 0


def test_bootstrap_deterministic_and_contains_point():
    rng = np.random.default_rng(4)
    rows = [(int(a), int(b), "u" if c else "p") for a, b, c in rng.integers(0, 2, size=(400, 3))]
    t = make_table(rows)
    a = bootstrap_ci(t, AOD, B=500, seed=7)
    b = bootstrap_ci(t, AOD, B=500, seed=7)
    assert a.interval == b.interval
    assert np.array_equal(a.values, b.values)
    assert a.interval.lower <= a.estimate.value <= a.interval.upper
    assert len(a.values) + a.n_degenerate == 500


def test_too_many_degenerate():
    # a single underprivileged positive: most resamples lose it
    rows = [(1, 1, "u")] + [(0, 0, "u")] * 9 + [(1, 1, "p"), (0, 0, "p")] * 5
    with pytest.raises(TooManyDegenerate):
        bootstrap_ci(make_table(rows), EOD, B=300, seed=0)


@settings(max_examples=30)
@given(st.lists(st.floats(-1, 1), min_size=1, max_size=200))
def test_percentile_interval_ordered(values):
    iv = percentile_interval(values)
    assert min(values) <= iv.lower <= iv.upper <= max(values)
