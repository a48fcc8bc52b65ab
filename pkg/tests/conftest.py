import math

import pytest

from pfguide import case_study_path, line_path, make_config


@pytest.fixture(scope="session")
def demo_path():
    return case_study_path()


@pytest.fixture(scope="session")
def xaxis_path():
    return line_path()


@pytest.fixture(scope="session")
def demo_config(demo_path):
    """Default tuning with the terminal weight synthesized once."""
    return make_config(demo_path)


def wrap_ref(a: float) -> float:
    """Independent wrap oracle used by several test modules."""
    while a > math.pi:
        a -= 2.0 * math.pi
    while a <= -math.pi:
        a += 2.0 * math.pi
    return a
