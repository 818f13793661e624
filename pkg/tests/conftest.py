import numpy as np
import pytest

from predcomp.dynamics import double_integrator


@pytest.fixture
def di():
    return double_integrator(0.1, "exact")


@pytest.fixture
def di_euler():
    return double_integrator(0.1, "euler")


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
