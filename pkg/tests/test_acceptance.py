"""The acceptance battery at its documented parameters, one line per criterion."""

import pytest

from fraclab.acceptance import CRITERIA, Settings, run_criterion

pytestmark = [pytest.mark.acceptance, pytest.mark.slow]


@pytest.mark.parametrize("key", list(CRITERIA))
def test_criterion(key, capsys):
    res = run_criterion(key, Settings())
    with capsys.disabled():
        print(f"\n{res.line()}  [{res.seconds:.1f} s]")
    assert res.passed, res.summary
