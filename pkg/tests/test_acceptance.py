"""The eleven acceptance criteria at their stated tolerances.

Each test records one ``criterion N: PASS|FAIL`` line; the lines are printed
together in the terminal summary of every run.
"""

import time

import pytest

from mildns.verify import CRITERIA

LINES: dict[int, str] = {}

# runtime budgets in seconds, generous by a factor of two over the stated limits
BUDGET = {1: 10, 2: 120, 3: 20, 4: 60, 5: 60, 6: 240, 7: 360, 8: 1200, 9: 60, 10: 600, 11: 120}


@pytest.mark.parametrize("number", sorted(CRITERIA))
def test_criterion(number):
    t0 = time.perf_counter()
    passed, detail, parts = CRITERIA[number]()
    elapsed = time.perf_counter() - t0
    LINES[number] = f"criterion {number:2d}: {'PASS' if passed else 'FAIL'} ({elapsed:.1f}s) {detail}"
    print(LINES[number])
    assert passed, detail
    assert elapsed < BUDGET[number]
