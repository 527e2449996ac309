import os

import numpy as np
import pytest
from hypothesis import settings

from ddtrigger.sysdata import double_integrator

settings.register_profile("ci", deadline=None, max_examples=60)
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "ci"))

REFERENCE_K = np.array([[-3.75, -11.5]])


@pytest.fixture(scope="session")
def plant01():
    return double_integrator(0.1)


@pytest.fixture(scope="session")
def plant001():
    return double_integrator(0.01)


ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
