import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from nwdag.builders import TwoLayerParams, build_two_layer

settings.register_profile("default", deadline=None, max_examples=60,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


@pytest.fixture
def tiny_net():
    """d=2, m=1: f(x) = 2 relu(0.5 x1 - x2)."""
    return build_two_layer(2, 1, TwoLayerParams([[0.5, -1.0]], [2.0]))


def seeds_strategy():
    from hypothesis import strategies as st
    return st.integers(0, 2**32 - 1)


def rng_for(seed):
    return np.random.default_rng(seed)


# ---- acceptance summary: one line per criterion, printed after the run

_CRITERIA: dict[int, str] = {}


def record_criterion(number: int, passed: bool, detail: str) -> None:
    _CRITERIA[number] = f"criterion {number:2d}: {'PASS' if passed else 'FAIL'}  {detail}"


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(_CRITERIA):
        terminalreporter.write_line(_CRITERIA[k])
