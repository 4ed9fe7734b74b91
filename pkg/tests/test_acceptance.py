"""End-to-end acceptance criteria; each prints one PASS/FAIL line."""
import pytest

from cribsim.acceptance import CRITERIA, run_criterion


@pytest.mark.parametrize("cid", sorted(CRITERIA), ids=lambda c: f"criterion_{c:02d}")
def test_criterion(cid, capsys):
    res = run_criterion(cid)
    with capsys.disabled():
        print("\n" + res.line())
    assert res.passed, res.line()
