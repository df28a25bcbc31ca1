import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from harvestnet.energy import BatteryModel  # noqa: E402
from harvestnet.profiles import build_split_map, load_profile  # noqa: E402


@pytest.fixture(scope="session")
def profile():
    return load_profile()


@pytest.fixture(scope="session")
def battery():
    return BatteryModel()


@pytest.fixture(scope="session")
def split_map(profile, battery):
    return build_split_map(profile, battery)


def pytest_terminal_summary(terminalreporter):
    try:
        import test_acceptance
    except ImportError:
        return
    if test_acceptance.LINES:
        terminalreporter.section("acceptance criteria")
        for line in test_acceptance.LINES:
            terminalreporter.write_line(line)
