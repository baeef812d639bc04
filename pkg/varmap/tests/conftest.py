import numpy as np
import pytest

from app.duffing import DuffingParams, duffing_system
from app.variational import integrate_map

STUDY_POINT = (1.26082, 2.05452)


@pytest.fixture(scope="session")
def study_params():
    return DuffingParams()


@pytest.fixture(scope="session")
def mild_params():
    """Weakly driven oscillator whose maps converge over wide deviations."""
    return DuffingParams(beta=0.1, epsilon=1.5, omega_d=1.5)


def build_map(params, order, steps, z0=STUDY_POINT, time_base="normalized"):
    system = duffing_system(params, order, time_base)
    return integrate_map(system, z0, 0.0, system.period, order, steps)


@pytest.fixture(scope="session")
def mild_map3(mild_params):
    return build_map(mild_params, 3, 256, z0=(0.5, 0.0))


@pytest.fixture(scope="session")
def study_map8(study_params):
    return build_map(study_params, 8, 2048)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
