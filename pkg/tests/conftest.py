import os
import sys

import pytest
from hypothesis import settings

sys.path.insert(0, os.path.dirname(__file__))

import shared  # noqa: E402

settings.register_profile("default", max_examples=60, deadline=None)
settings.load_profile("default")


@pytest.fixture(scope="session")
def series_1e8():
    return shared.series_1e8()[0]


def pytest_terminal_summary(terminalreporter):
    if shared.CRITERIA_LINES:
        terminalreporter.section("acceptance criteria")
        for line in shared.CRITERIA_LINES:
            terminalreporter.write_line(line)
