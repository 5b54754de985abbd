import numpy as np
import pytest


@pytest.fixture
def rng():
    return np.random.default_rng(0)


def pytest_addoption(parser):
    parser.addoption("--runslow-off", action="store_true", default=False,
                     help="skip tests marked slow")


def pytest_collection_modifyitems(config, items):
    if not config.getoption("--runslow-off"):
        return
    skip = pytest.mark.skip(reason="--runslow-off")
    for item in items:
        if "slow" in item.keywords:
            item.add_marker(skip)
