import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from meshfit.mesh import Mesh, ico_sphere

settings.register_profile("meshfit", deadline=None, max_examples=40,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("meshfit")


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def jittered_sphere(seed, subdiv=0, jitter=0.1):
    """Icosphere with random vertex noise; every face stays well shaped."""
    base = ico_sphere(subdiv)
    r = np.random.default_rng(seed)
    return Mesh(base.vertices + r.normal(0.0, jitter, base.vertices.shape), base.faces)


def unit_square(z=0.0):
    """Two-triangle unit square in the plane at height z."""
    v = [[0, 0, z], [1, 0, z], [1, 1, z], [0, 1, z]]
    return Mesh(v, [[0, 1, 2], [0, 2, 3]])
