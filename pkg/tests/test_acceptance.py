"""Runs every acceptance criterion at its stated tolerance, one line per criterion."""

import pytest

from coulomb2d.acceptance import CRITERIA

_results = {}


@pytest.mark.slow
@pytest.mark.parametrize("criterion", CRITERIA, ids=lambda c: f"criterion_{c.number}")
def test_criterion(criterion, capsys):
    res = criterion()
    _results[res.number] = res
    with capsys.disabled():
        print("\n" + res.line())
    assert res.passed, res.details


def teardown_module(module):
    if _results:
        print("\nacceptance summary")
        for k in sorted(_results):
            print(_results[k].line())
