import os

import numpy as np
import pytest
from hypothesis import HealthCheck, settings
from hypothesis import strategies as st

from efx.fixtures import joint_space

settings.register_profile("efx", max_examples=60, deadline=None, derandomize=True, suppress_health_check=[HealthCheck.too_slow])
settings.register_profile("stress", max_examples=400, deadline=None, suppress_health_check=[HealthCheck.too_slow])
settings.load_profile(os.environ.get("EFX_HYP_PROFILE", "efx"))


@st.composite
def joint_tables(draw, ndim=2, max_arity=4, allow_zeros=True):
    """Random probability table with `ndim` axes, each of arity 2..max_arity."""
    shape = tuple(draw(st.integers(2, max_arity)) for _ in range(ndim))
    cells = int(np.prod(shape))
    lo = 0 if allow_zeros else 1
    raw = draw(st.lists(st.integers(lo, 20), min_size=cells, max_size=cells))
    raw = np.array(raw, dtype=float)
    if raw.sum() == 0:
        raw[0] = 1.0
    return (raw / raw.sum()).reshape(shape)


def rvs_of(table):
    return joint_space(table)[1]


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    try:
        from test_acceptance import RESULTS
    except ImportError:
        return
    if RESULTS:
        terminalreporter.section("acceptance criteria")
        for line in RESULTS:
            terminalreporter.write_line(line)
