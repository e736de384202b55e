import math
import sys

import pytest

from randbeta.dynamics import GOLDEN, SILVER, TRIBONACCI, BetaParams

G = GOLDEN
g = G - 1

# Bases exercised by the property tests: the three Markov cases plus
# non-Markov ones with one, two and three switch regions.
PROPERTY_BETAS = (GOLDEN, SILVER, TRIBONACCI, 1.5, 1.8, 2.5, 3.3)
MARKOV_BETAS = (GOLDEN, SILVER, TRIBONACCI)


@pytest.fixture
def golden():
    return BetaParams(GOLDEN, 0.5)


def lex_le(a, b):
    return tuple(a) <= tuple(b)


def geometric_value(digits, beta):
    return math.fsum(d * beta ** -(i + 1) for i, d in enumerate(digits))


def pytest_terminal_summary(terminalreporter):
    module = sys.modules.get("test_acceptance")
    if module is None or not module.RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for line in module.summary_lines():
        terminalreporter.write_line(line)
