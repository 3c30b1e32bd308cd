import os
import sys

import pytest
from hypothesis import settings

sys.path.insert(0, os.path.dirname(__file__))

from pedems import fixtures  # noqa: E402

settings.register_profile("default", deadline=None, max_examples=100)
settings.load_profile("default")


@pytest.fixture
def three_net():
    return fixtures.three_route_network()


@pytest.fixture
def three_hist():
    return fixtures.three_route_history()


@pytest.fixture
def y_net():
    return fixtures.y_network()


@pytest.fixture
def campus_net():
    return fixtures.campus_network()


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    if mod is None or not mod.RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for line in mod.report_lines():
        terminalreporter.write_line(line)
