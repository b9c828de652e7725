"""All twelve acceptance criteria at their stated tolerances and time limits."""

import pytest

from jjtorus.verify import CRITERIA


@pytest.mark.parametrize("criterion", CRITERIA, ids=[f"{c.number:02d}-{c.__name__}" for c in CRITERIA])
def test_criterion(criterion, capsys):
    res = criterion()
    with capsys.disabled():
        print(f"\n{res.line}  {res.detail if not res.passed else ''}".rstrip())
    assert res.passed, res.detail
