"""Pytest configuration and fixtures."""

import numpy as np
import pytest

from semistatic.config import Config
from semistatic.market import instance_a, nonconvex_example_market, one_period_market
from semistatic.utility import LogUtility, PowerUtility, nonconvex_example_utility


@pytest.fixture
def test_config():
    """Create a test configuration."""
    return Config(threads=2)


@pytest.fixture
def market():
    """One-period trinomial market with a call struck at 1."""
    return instance_a()


@pytest.fixture
def basket_market():
    """Instance A with a second claim paying twice the call."""
    return one_period_market([2.0, 1.0, 0.5], [1 / 3, 1 / 3, 1 / 3],
                             {'call': [1.0, 0.0, 0.0], 'double': [2.0, 0.0, 0.0]},
                             name='basket')


@pytest.fixture
def s10_market():
    """Stock-free market with a single +-1 claim."""
    return nonconvex_example_market()


@pytest.fixture
def s10_utility():
    """Piecewise-linear utility of the non-convexity example."""
    return nonconvex_example_utility()


@pytest.fixture
def log_utility():
    return LogUtility()


@pytest.fixture
def sqrt_utility():
    """Power utility with alpha = 1/2."""
    return PowerUtility(0.5)


@pytest.fixture
def rng():
    return np.random.default_rng(7)
