import numpy as np
import pytest

from cdmasp import Instance


@pytest.fixture
def aligned():
    """N = K = 4, every chip and bit +1, no noise: y_mu = 2."""
    return Instance.from_arrays(np.ones((4, 4), dtype=int), np.ones(4, dtype=int), 0.0)


@pytest.fixture
def single_user():
    return Instance.from_arrays([[1]], [-1], 0.0)


_VERDICTS = []


@pytest.fixture
def criterion():
    """Record one acceptance line; the terminal summary lists them all."""

    def record(number, ok, detail):
        line = f"criterion {number}: {'PASS' if ok else 'FAIL'}  {detail}"
        _VERDICTS.append((number, line))
        print(line)
        return ok

    return record


def pytest_terminal_summary(terminalreporter):
    if _VERDICTS:
        terminalreporter.section("acceptance criteria")
        for _, line in sorted(_VERDICTS):
            terminalreporter.write_line(line)
