"""Full acceptance battery at the stated tolerances and budgets.

Each criterion prints one pass/fail line. The lines are also repeated in the
pytest terminal summary, so they show up without ``-s``. Run this file directly
with ``python3 tests/test_acceptance.py`` to get only the lines.
"""

import sys

import pytest

from varexp_risk.acceptance import CRITERIA, run_criterion

ACCEPTANCE_LINES: list[str] = []


@pytest.mark.acceptance
@pytest.mark.parametrize("name", [key for key, *_ in CRITERIA])
def test_criterion(name):
    result = run_criterion(name, scale=1.0, seed=0)
    print(result.line())
    ACCEPTANCE_LINES.append(result.line())
    assert result.passed, result.detail
    assert result.within_budget, f"{result.seconds:.2f} s exceeds the {result.budget:.0f} s budget"


if __name__ == "__main__":
    results = [run_criterion(key) for key, *_ in CRITERIA]
    for r in results:
        print(r.line())
    sys.exit(0 if all(r.ok for r in results) else 1)
