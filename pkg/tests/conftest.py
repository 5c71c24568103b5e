import contextlib
import os
import tempfile

import numpy as np
import pytest
from ksadi.grid import make_grid


def pytest_addoption(parser):
    parser.addoption(
        "--runslow", action="store_true", default=False, help="run the full-size experiment checks"
    )


def pytest_configure(config):
    config.addinivalue_line("markers", "slow: full-size experiment checks, run with --runslow")


def pytest_collection_modifyitems(config, items):
    if config.getoption("--runslow"):
        return
    skip_slow = pytest.mark.skip(reason="needs --runslow")
    for item in items:
        if "slow" in item.keywords:
            item.add_marker(skip_slow)


@contextlib.contextmanager
def chdir_manager(directory):
    old_directory = os.getcwd()
    os.chdir(directory)
    yield directory
    os.chdir(old_directory)


@pytest.fixture(scope="function")
def chdir():
    return chdir_manager


@pytest.fixture(scope="function")
def temporary_dir():
    with tempfile.TemporaryDirectory() as temp_dir:
        yield temp_dir


@pytest.fixture()
def rng():
    return np.random.default_rng(20240607)


@pytest.fixture()
def periodic_grid():
    return make_grid(0.0, 1.0, 0.0, 1.0, 6, 6, "periodic")


@pytest.fixture()
def neumann_grid():
    return make_grid(-1.0, 1.0, -1.0, 1.0, 5, 5, "neumann")


@pytest.fixture(params=["periodic", "neumann"])
def small_grid(request):
    return make_grid(0.0, 1.0, 0.0, 1.0, 5, 6, request.param)
