import math

import numpy as np
import pytest

from fibersqueeze import lattice as lat
from fibersqueeze import nlse

TWO_PI = 2.0 * math.pi


def small_grid(n=256, window=20.0):
    return lat.TemporalGrid(n, -window, window)


def random_pair(grid, rng):
    shape = (grid.n_points,)
    return (rng.standard_normal(shape) + 1j * rng.standard_normal(shape),
            rng.standard_normal(shape) + 1j * rng.standard_normal(shape))


def linear_profile(length=1.0):
    """Dispersion-only fiber: A = B = C = 0."""
    return lat.FiberProfile(
        0.0, 0.0, 0.0,
        dispersion=lambda z: 1.0,
        birefringence=lambda z: 0.0,
        group_delay=lambda z: 0.0,
        length=length,
        descriptor={"model": "linear"},
    )


@pytest.fixture(scope="session")
def soliton_trajectory():
    """Fundamental averaged-model soliton on a mid-sized grid."""
    grid = small_grid(512)
    u0 = 3.0 / (2.0 * math.sqrt(2.0))
    f0 = lat.make_initial_single(grid, u0)
    return nlse.propagate_classical(f0, lat.manakov_profile(TWO_PI), 600)


@pytest.fixture(scope="session")
def modulated_trajectory():
    """Small split-soliton trajectory used by duality and measurement tests."""
    grid = small_grid(256)
    f0 = lat.make_initial_single(grid, 2.0)
    prof = lat.manakov_profile(TWO_PI, lat.ModulationSpec("sine", 1.3, 0.2))
    return nlse.propagate_classical(f0, prof, 400)


@pytest.fixture(scope="session")
def birefringent_trajectory():
    grid = small_grid(256)
    f0 = lat.make_initial_single(grid, 1.8)
    prof = lat.birefringent_profile(1.5, b=10.0, b1=1.0)
    return nlse.propagate_classical(f0, prof, 300)


@pytest.fixture(scope="session")
def linear_trajectory():
    grid = small_grid(256)
    f0 = lat.make_initial_single(grid, 2.0)
    return nlse.propagate_classical(f0, linear_profile(1.0), 120)
