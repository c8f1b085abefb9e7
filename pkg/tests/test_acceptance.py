"""Desk acceptance suite at the stated budgets and tolerances.

The suite runs once per session (several minutes on one core); each
criterion is then its own test, and a pass/fail line per criterion is
printed in the terminal summary.
"""

import pytest

from driftlab.acceptance import SUITES, run_acceptance

from conftest import ACCEPTANCE_LINES

IDS = [c.id for c in SUITES["desk"]]


@pytest.fixture(scope="module")
def report(tmp_path_factory):
    out = tmp_path_factory.mktemp("acceptance")
    rep = run_acceptance("desk", out, echo=ACCEPTANCE_LINES.append)
    return rep


def test_every_criterion_reported(report):
    assert [r.id for r in report.rows] == IDS
    assert not report.crashed


@pytest.mark.parametrize("cid", IDS)
def test_criterion(report, cid):
    row = next(r for r in report.rows if r.id == cid)
    print(row.line())
    assert row.verdict == "pass", row.line()
