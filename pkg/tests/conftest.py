import numpy as np
import pytest

from mpccreg.model import load_problem
from mpccreg.suite import builtin_suite

P1_TEXT = """
name: p1
vars:
  x1 0 inf 1
  x2 0 inf 1
objective: x1 + x2
pairs:
  x1 x2
"""

P3_TEXT = """
name: p3
vars:
  x0 -inf inf 0
  x1 0 inf 1
  x2 0 inf 1
objective: (x0 - 2)^2 + x1^2 + x2^2
constraints:
  1 <= x0 + x1 - x2 <= 1
pairs:
  x1 x2
"""


@pytest.fixture(scope="session")
def suite():
    return builtin_suite()


@pytest.fixture
def p1():
    return load_problem(P1_TEXT)


@pytest.fixture
def p3():
    return load_problem(P3_TEXT)


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
