import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from hofer_lab import AnnulusGrid, build_disk_region, build_hat_H

settings.register_profile("lab", deadline=None, max_examples=25,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("lab")


@pytest.fixture(scope="session")
def grid256():
    return AnnulusGrid.square(256)


@pytest.fixture(scope="session")
def grid512():
    return AnnulusGrid.square(512)


@pytest.fixture(scope="session")
def hat256(grid256):
    return build_hat_H(0.01, grid256)


@pytest.fixture(scope="session")
def hat512(grid512):
    return build_hat_H(0.01, grid512)


@pytest.fixture(scope="session")
def disk():
    return build_disk_region(0.6, 0.02, 0.01)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    from . import test_acceptance

    if test_acceptance.RESULTS:
        terminalreporter.section("acceptance criteria")
        for line in test_acceptance.RESULTS:
            terminalreporter.write_line(line)
