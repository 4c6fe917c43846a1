import itertools
import math
from fractions import Fraction

import pytest

from epr_ensembles import RandomSource


def enumerate_sum_law(n):
    """Brute-force law of the sum of n fair +-1 variables, by listing all 2^n outcomes."""
    law = {}
    for outcome in itertools.product((1, -1), repeat=n):
        s = sum(outcome)
        law[s] = law.get(s, 0) + 1
    return {s: Fraction(c, 2**n) for s, c in law.items()}


def three_sigma_band(p, trials):
    half = 3.0 * math.sqrt(p * (1.0 - p) / trials)
    return p - half, p + half


@pytest.fixture
def rng():
    return RandomSource(20241019, 0)


def pytest_terminal_summary(terminalreporter):
    import sys

    mod = sys.modules.get("test_acceptance") or sys.modules.get("tests.test_acceptance")
    lines = getattr(mod, "RESULTS", None)
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
