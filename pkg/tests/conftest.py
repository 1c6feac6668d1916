import os
import sys
import warnings

import pytest

sys.path.insert(0, os.path.dirname(__file__))

from basinlab.landscape import build_well_catalog, builtin  # noqa: E402


@pytest.fixture(scope="session")
def f_land():
    return builtin("two_depths")


@pytest.fixture(scope="session")
def g_land():
    return builtin("two_widths")


@pytest.fixture(scope="session")
def f_cat(f_land):
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        return build_well_catalog(f_land)


@pytest.fixture(scope="session")
def g_cat(g_land):
    return build_well_catalog(g_land)


def pytest_terminal_summary(terminalreporter):
    try:
        from test_acceptance import REPORT
    except ImportError:
        return
    if not REPORT:
        return
    terminalreporter.section("acceptance criteria")
    for line in REPORT:
        terminalreporter.write_line(line)
