import pytest


def pytest_addoption(parser):
    parser.addoption(
        "--runslow",
        action="store_true",
        default=False,
        help="run slow re-derivation tests (full oracle grids)",
    )


def pytest_collection_modifyitems(config, items):
    if config.getoption("--runslow"):
        return
    skip = pytest.mark.skip(reason="slow re-derivation test; use --runslow")
    for item in items:
        if "slow" in item.keywords:
            item.add_marker(skip)
