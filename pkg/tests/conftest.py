import pytest

from .fixtures import *


def pytest_addoption(parser):
    parser.addoption(
        "--skip-slow",
        action="store_true",
        default=False,
        help="Skip tests decorated with @slow, e.g. large sample Monte-Carlo checks.",
    )


def pytest_collection_modifyitems(config, items):
    if not config.getoption("--skip-slow"):
        return

    skip = pytest.mark.skip(reason="Test is slow and --skip-slow was given.")
    for item in items:
        if "slow" in item.keywords:
            item.add_marker(skip)
