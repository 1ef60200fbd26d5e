"""Every acceptance criterion at its stated tolerance.

One pass/fail line per criterion is printed, and repeated in the
"acceptance criteria" section of the terminal summary.
"""

import pytest

from chcontrol.acceptance import CRITERIA, run_criterion


@pytest.mark.parametrize("number", [n for n, _, _ in CRITERIA], ids=[f"criterion_{n}" for n, _, _ in CRITERIA])
def test_criterion(number, acceptance_log):
    result = run_criterion(number, seed=0)
    print(result.line())
    acceptance_log(result.line())
    assert result.passed, result.line()
