"""One test per acceptance criterion; each prints a PASS/FAIL line with its measurements."""
import pytest

from pqlab.acceptance import CRITERIA


@pytest.mark.parametrize("k", sorted(CRITERIA))
def test_criterion(k, capsys):
    _, name, passed, seconds, detail = CRITERIA[k]()
    with capsys.disabled():
        print(f"\ncriterion {k}: {'PASS' if passed else 'FAIL'} [{name}] {seconds:.2f}s :: {detail}")
    assert passed, detail
