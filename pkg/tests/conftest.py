import numpy as np
import pytest

from feddrl_oran.phy import load_mcs_table


@pytest.fixture(scope="session")
def table():
    return load_mcs_table()


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    try:
        from test_acceptance import RESULTS
    except ImportError:
        return
    if not RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for line in sorted(RESULTS.values(), key=lambda s: int(s.split()[1].rstrip(":"))):
        terminalreporter.write_line(line)
