import numpy as np
import pytest
from hypothesis import given, strategies as st

from auditbench.errors import EmptyValues, InvalidInterval
from auditbench.metrics import Interval
from auditbench.reliability import (
    AuditOutcome,
    IntervalConfiguration as C,
    classify_configuration,
    classify_outcome,
    compare,
    overlap_proportion,
)


def test_configurations():
    assert classify_configuration((-0.20, -0.05)) == C.NEGATIVE
    assert classify_configuration((-0.03, 0.04)) == C.PARITY
    assert classify_configuration((0.00, 0.02)) == C.PARITY
    assert classify_configuration(Interval(0.01, 0.2)) == C.POSITIVE
    with pytest.raises(InvalidInterval):
        classify_configuration((0.3, 0.1))


def test_outcomes():
    assert classify_outcome(C.PARITY, C.NEGATIVE) == AuditOutcome.TYPE1
    assert classify_outcome(C.NEGATIVE, C.PARITY) == AuditOutcome.TYPE2
    assert classify_outcome(C.NEGATIVE, C.POSITIVE) == AuditOutcome.REVERSE
    for c in C:
        assert classify_outcome(c, c) == AuditOutcome.ACCURATE


def test_overlap():
    assert overlap_proportion((-0.1, 0.1), [-0.05, 0.0, 0.15, 0.2]) == 0.5
    assert overlap_proportion((-1, 1), [0.3, 0.4]) == 1.0
    with pytest.raises(EmptyValues):
        overlap_proportion((-1, 1), [])


@given(st.lists(st.floats(-1, 1), min_size=1, max_size=100), st.floats(-1, 1), st.floats(0, 1))
def test_overlap_is_a_proportion(values, lo, w):
    p = overlap_proportion((lo, lo + w), values)
    assert 0 <= p <= 1
    assert p * len(values) == pytest.approx(round(p * len(values)))


def test_compare_report():
    vals = np.linspace(-0.3, -0.1, 101)
    r = compare(Interval(-0.2, -0.05), vals)
    assert r.baseline_config == C.NEGATIVE
    assert r.experiment_config == C.NEGATIVE
    assert r.outcome == AuditOutcome.ACCURATE
    assert r.n_values == 101
    assert r.overlap_proportion == pytest.approx(51 / 101)
