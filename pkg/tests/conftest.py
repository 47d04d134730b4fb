import numpy as np
import pytest
from hypothesis import HealthCheck, settings

settings.register_profile("default", deadline=None, max_examples=30,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


@pytest.fixture(scope="session")
def mesh2():
    from vvflow.mesh import build_box_mesh
    return build_box_mesh(2, 2, 2)


@pytest.fixture(scope="session")
def mesh1():
    from vvflow.mesh import build_box_mesh
    return build_box_mesh(1, 1, 1)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
