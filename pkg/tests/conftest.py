import numpy as np
import pytest

from uav_harvest import config
from uav_harvest.world import RandomizationRanges

ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.write_sep("-", "acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


@pytest.fixture(scope="session")
def manhattan():
    return config.resolve_map("manhattan")


@pytest.fixture(scope="session")
def open_field():
    return config.resolve_map("open_field_city")


@pytest.fixture(scope="session")
def desk10():
    return config.resolve_map("desk10")


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def desk_ranges(grid, **overrides):
    """Criterion-9 setup: two devices, fixed 25-step budget, default data range."""
    kwargs = dict(device_count=(2, 2), flight_budget=(25, 25))
    kwargs.update(overrides)
    return RandomizationRanges.for_map(grid, **kwargs)
