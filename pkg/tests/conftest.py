import sys

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from safebems.data import generate_synthetic_corpus, make_tou_tariff

settings.register_profile("default", deadline=None, suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


@pytest.fixture(scope="session")
def small_corpus():
    return generate_synthetic_corpus(9, 24 * 28, 3, seed=3)


@pytest.fixture(scope="session")
def small_tariff(small_corpus):
    return make_tou_tariff(small_corpus.buildings[0].load.calendar)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    if mod is None or not mod.RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(mod.RESULTS):
        terminalreporter.write_line(mod.RESULTS[n])
