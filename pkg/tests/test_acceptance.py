"""Acceptance criteria at their stated tolerances, one line per criterion."""
import pytest

from exitdim.acceptance import CHECKS


@pytest.mark.slow
@pytest.mark.parametrize("check", CHECKS, ids=[f"criterion_{c.number}" for c in CHECKS])
def test_criterion(check, capsys):
    res = check()
    with capsys.disabled():
        print("\n" + res.line())
    assert res.passed, res.summary
