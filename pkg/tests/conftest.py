import numpy as np
import pytest

from hardylab.domain import make_domain
from hardylab.mesh import MeshOptions, generate_mesh


def bump(mesh, center=(0.5, 0.0), radius=0.3, power=8):
    """Smooth nodal bump cos^power supported in a disc away from the origin."""
    dist = np.hypot(mesh.nodes[:, 0] - center[0], mesh.nodes[:, 1] - center[1])
    return np.where(dist < radius, np.cos(np.pi * dist / (2 * radius)) ** power, 0.0)


@pytest.fixture(scope="session")
def half_ball_mesh():
    return generate_mesh(make_domain("half_ball"), options=MeshOptions(h=0.1, layers=6))


@pytest.fixture(scope="session")
def tangent_ball_mesh():
    return generate_mesh(make_domain("tangent_ball"), options=MeshOptions(h=0.1, layers=8))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
