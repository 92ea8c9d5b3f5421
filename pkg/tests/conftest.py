import numpy as np
import pytest

from wgbiharm.mesh import Mesh, build_polygonal, build_uniform_triangular


@pytest.fixture(scope="session")
def unit_triangle():
    return Mesh([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]], [[0, 1, 2]])


@pytest.fixture(scope="session")
def unit_square():
    return Mesh([[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]], [[0, 1, 2, 3]])


@pytest.fixture(scope="session")
def uniform():
    cache = {}

    def get(n):
        if n not in cache:
            cache[n] = build_uniform_triangular(n)
        return cache[n]

    return get


@pytest.fixture(scope="session")
def voronoi64():
    return build_polygonal(64, lloyd_iters=3, rng_seed=7)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
