import os
import sys

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

sys.path.insert(0, os.path.dirname(__file__))

settings.register_profile("default", deadline=None,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")

ACCEPTANCE_LINES = []


def random_channel(rng, L, K, snr_db=25.0):
    from ifcran.model import ChannelMatrix
    return ChannelMatrix(rng.standard_normal((L, K)), 10.0 ** (snr_db / 10))


def random_spd(rng, n, scale=1.0):
    B = rng.standard_normal((n, n))
    return scale * (B.T @ B) + np.eye(n)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
