import sys

import pytest

from exomuscle import biomech, geometry


@pytest.fixture(scope="session")
def placement():
    return geometry.default_placement()


@pytest.fixture(scope="session")
def profile():
    return geometry.DEFAULT_PROFILE


@pytest.fixture(scope="session")
def subject():
    return biomech.scale_segments(1.89, 100.0)


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance") or sys.modules.get("tests.test_acceptance")
    if mod is not None and mod.RESULTS:
        terminalreporter.section("acceptance criteria")
        for line in mod.RESULTS:
            terminalreporter.write_line(line)
