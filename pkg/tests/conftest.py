import numpy as np
import pytest

from vecchaos.grid import unit_torus
from vecchaos.io import data_path, load_measure
from vecchaos.spectral import MatrixSpectralMeasure, from_density


def flat_density(x):
    """Smooth d=2 density with a non-real cross spectrum."""
    x = x[:, 0]
    g = (1 + 0.5 * np.cos(x)) / (2 * np.pi)
    out = np.empty((len(x), 2, 2), complex)
    out[:, 0, 0] = g
    out[:, 1, 1] = 0.8 * g
    out[:, 0, 1] = 0.5 * g * np.exp(1j * x)
    out[:, 1, 0] = np.conj(out[:, 0, 1])
    return out


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(scope="session")
def example_measure():
    return load_measure(data_path("example_measure.json"))


@pytest.fixture(scope="session")
def smooth_measure():
    return from_density(unit_torus(1, 16), flat_density)


def one_pair(d, mass):
    """Two-cell unit-torus measure with ``mass`` on Delta_1."""
    mass = np.asarray(mass, dtype=complex).reshape(1, d, d)
    return MatrixSpectralMeasure.from_positive(unit_torus(1, 2), mass)
