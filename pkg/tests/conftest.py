"""
Configuration pytest : marqueur 'slow' et option --run-slow
"""

import pytest


def pytest_addoption(parser):
    parser.addoption("--run-slow", action="store_true", default=False,
                     help="Exécute aussi les tests marqués slow (balayages complets, cas PGLib)")


def pytest_configure(config):
    config.addinivalue_line("markers", "slow: test long (balayage complet, cas PGLib)")


def pytest_collection_modifyitems(config, items):
    if config.getoption("--run-slow"):
        return
    skip_slow = pytest.mark.skip(reason="test long : relancer avec --run-slow")
    for item in items:
        if "slow" in item.keywords:
            item.add_marker(skip_slow)
