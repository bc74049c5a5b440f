import math

import numpy as np
import pytest
from hypothesis import settings

from nestlab.maps import QuadraticFamily, RealQuadratic
from nestlab.nest import build_nest
from nestlab.params import descend

settings.register_profile("nestlab", deadline=None, max_examples=60)
settings.load_profile("nestlab")

GOLDEN = (1 + math.sqrt(5)) / 2
CURVE = QuadraticFamily((1.5, 2.0))

# one line per acceptance criterion, filled in by test_acceptance
REPORT = []


@pytest.fixture(scope="session")
def nest19():
    """A deep nest of a chaotic parameter, shared by many tests."""
    return build_nest(RealQuadratic(1.9), max_depth=10)


@pytest.fixture(scope="session")
def descents():
    """Deep parameters reached by seeded combinatorial descent."""
    out = []
    for seed in range(3):
        out.append(descend(CURVE, 8, np.random.default_rng(seed), lam_range=(1.84, 2.0)))
    return out


def pytest_terminal_summary(terminalreporter):
    if REPORT:
        terminalreporter.section("acceptance criteria")
        for line in sorted(REPORT, key=lambda l: int(l.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
