import numpy as np
import pytest

from ldlab import create_lab
from ldlab.domain import DomainSpec, Shape, build_domain
from ldlab.fields import MagneticPotential, OrderParameterStack


@pytest.fixture(scope='session', autouse=True)
def lab():
    """Testing settings: tight CG tolerance, one thread, no remote logging."""
    return create_lab('testing')


@pytest.fixture
def disk_spec():
    return DomainSpec(shape=Shape.DISK, radius=0.5, h_grid=0.1, L=0.4, N=2, R_box=1.0, h_box=0.2)


@pytest.fixture
def square_spec():
    return DomainSpec(shape=Shape.RECTANGLE, width=1.0, height=1.0, h_grid=0.1, L=0.4, N=2,
                      R_box=1.0, h_box=0.2)


@pytest.fixture
def disk(disk_spec):
    return build_domain(disk_spec)


@pytest.fixture
def square(square_spec):
    return build_domain(square_spec)


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


@pytest.fixture
def random_state(rng):
    """Factory for random (u, A) on a domain; |u| <= 1, A of size ``scale``."""
    def make(domain, h_ex=0.0, scale=0.3):
        layer, box = domain
        u = OrderParameterStack.random(layer, rng)
        A = MagneticPotential(box, scale * rng.standard_normal(box.n_edges), h_ex)
        return u, A
    return make


@pytest.fixture
def vortex_field():
    """Factory: unimodular (z - c)^degree / |z - c|^degree sampled at the layer nodes."""
    def make(grid, center, degree=1):
        xx, yy = grid.node_coordinates
        z = (xx - center[0]) + 1j * (yy - center[1])
        w = z / np.abs(z)
        return w if degree > 0 else np.conj(w)
    return make
