import numpy as np
import pytest

from auditbench.dataset import DataTable, Schema


def make_table(rows, features=None):
    """rows: iterable of (y, yhat, group) with group in {"u", "p"}."""
    rows = list(rows)
    n = len(rows)
    schema = Schema(features=(("x", "numeric"),))
    feats = features if features is not None else {"x": np.arange(n, dtype=float)}
    group = [1 if g == "u" else 0 for _, _, g in rows]
    return DataTable(schema, feats, group, [r[0] for r in rows], [r[1] for r in rows])


def tally(rows):
    """Brute-force cell counts, independent of the package's row coding."""
    out = {g: {"tp": 0, "fp": 0, "fn": 0, "tn": 0} for g in ("u", "p")}
    for y, yhat, g in rows:
        if y == 1 and yhat == 1:
            out[g]["tp"] += 1
        elif y == 0 and yhat == 1:
            out[g]["fp"] += 1
        elif y == 1 and yhat == 0:
            out[g]["fn"] += 1
        else:
            out[g]["tn"] += 1
    return out


@pytest.fixture
def table_from_rows():
    return make_table


# one line per acceptance criterion, printed at the end of the session
ACCEPTANCE = []


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for number, ok, detail in sorted(ACCEPTANCE, key=lambda r: r[0]):
        terminalreporter.write_line(f"criterion {number:>2}: {'PASS' if ok else 'FAIL'}  {detail}")
