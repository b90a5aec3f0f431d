import sys

import numpy as np
import pytest
from hypothesis import HealthCheck, settings
from hypothesis import strategies as st

from varexp_risk import FiniteMeasureSpace, Utility, tree_space
from varexp_risk.space import random_space

settings.register_profile("default", deadline=None, max_examples=60,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")

finite = st.floats(-5.0, 5.0, allow_nan=False, allow_infinity=False)
seeds = st.integers(0, 2**32 - 1)


@st.composite
def spaces(draw, max_n=6, max_horizon=3):
    n = draw(st.integers(1, max_n))
    horizon = 0 if n == 1 else draw(st.integers(1, max_horizon))
    return random_space(np.random.default_rng(draw(seeds)), n, horizon)


@st.composite
def utilities(draw, d=1):
    family = draw(st.sampled_from(["exponential", "cvar", "piecewise"]))
    w = (1.0,) * d
    w = tuple(np.asarray(w) / d)
    if family == "exponential":
        return Utility.exponential(draw(st.floats(0.1, 4.0)), w)
    if family == "cvar":
        return Utility.cvar(draw(st.floats(0.05, 0.95)), w)
    return Utility.piecewise(draw(st.floats(1.0, 4.0)), draw(st.floats(0.0, 1.0)), w)


@pytest.fixture
def two_point():
    return FiniteMeasureSpace([0.5, 0.5])


@pytest.fixture
def tree4():
    return tree_space([2, 2])


@pytest.fixture
def entropic():
    return Utility.exponential(1.0)


@pytest.fixture
def cvar():
    return Utility.cvar(0.5)


def pytest_terminal_summary(terminalreporter):
    lines = getattr(sys.modules.get("test_acceptance"), "ACCEPTANCE_LINES", None)
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
