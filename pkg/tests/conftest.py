import os
import sys

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

sys.path.insert(0, os.path.dirname(__file__))

from eimpc import assemble_batch, build_benchmark  # noqa: E402

settings.register_profile("default", deadline=None, max_examples=40,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")

_CACHE = {}


def benchmark(sys_id):
    """(spec, qp) per benchmark, built once per session."""
    if sys_id not in _CACHE:
        spec = build_benchmark(sys_id)
        _CACHE[sys_id] = (spec, assemble_batch(spec))
    return _CACHE[sys_id]


@pytest.fixture(scope="session")
def sys1():
    return benchmark(1)


@pytest.fixture(scope="session")
def sys2():
    return benchmark(2)


@pytest.fixture(scope="session")
def sys3():
    return benchmark(3)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


ACCEPTANCE_LINES = []


def report(criterion, passed, detail):
    """Record one acceptance verdict; printed again in the terminal summary."""
    line = f"ACCEPTANCE {criterion}: {'PASS' if passed else 'FAIL'} | {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line)
    return passed


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
