import numpy as np
import pytest

from src.application.dynamics.integrator import PerturbedFlowService
from src.application.equidistribution.lab import EquidistributionLab
from src.application.potential.derivatives import FlowDerivativeService
from src.application.stability.transforms import StabilityService
from src.domain.potential import constant_potential, default_potential
from src.domain.surface import bolza_group
from src.infrastructure.parallel.pool import WorkerPool


@pytest.fixture(scope="session")
def group():
    return bolza_group(4)


@pytest.fixture(scope="session")
def potential(group):
    return default_potential(group)


@pytest.fixture(scope="session")
def flat_potential(group):
    return constant_potential(group)


@pytest.fixture(scope="session")
def flows(potential):
    return PerturbedFlowService(potential)


@pytest.fixture(scope="session")
def derivatives(potential):
    return FlowDerivativeService(potential)


@pytest.fixture(scope="session")
def stability(flows, derivatives):
    return StabilityService(flows, derivatives)


@pytest.fixture(scope="session")
def lab(flows, derivatives, stability):
    return EquidistributionLab(flows, derivatives, stability)


@pytest.fixture(scope="session")
def samples(group):
    return group.sample_liouville(20, seed=7)


@pytest.fixture(scope="session")
def start_point(lab):
    """A unit point well inside K_V^0(0.05)."""
    return lab.sample_start_points(1, J=0, eta0=0.05, seed=11)[0]


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(autouse=True)
def inline_pool():
    WorkerPool.init(1)
    yield
    WorkerPool.close()
