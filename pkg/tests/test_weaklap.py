import math

import numpy as np
import pytest

from wgbiharm.dofmap import DofMap, normalize_flavor
from wgbiharm.mesh import Mesh, build_polygonal, build_uniform_triangular
from wgbiharm.polyspace import dim_p, embed_exact_solution, project_Qh_interior
from wgbiharm.problems import problem_from_expression
from wgbiharm.weaklap import apply_weak_laplacian, build_weak_laplacian, verify_commutativity

FLAVORS = ["algorithm1", "algorithm2"]


def _local(mesh, k, flavor, u, grad, t=0):
    dm = DofMap(mesh, k, flavor)
    return dm.restrict(embed_exact_solution(u, grad, mesh, k, flavor, dofmap=dm), t)


def test_flavor_aliases():
    assert normalize_flavor("II") == "algorithm2"
    assert normalize_flavor(1) == "algorithm1"
    with pytest.raises(ValueError):
        normalize_flavor("three")


@pytest.mark.parametrize("flavor", FLAVORS)
def test_k2_ignores_v0_and_vb(unit_triangle, flavor):
    op = build_weak_laplacian(unit_triangle, 0, 2, flavor)
    n0, nb = dim_p(2), 3
    # Only the gradient-trace columns can be nonzero for k = 2
    assert not op.matrix[:, : n0 + 3 * nb].any()


def test_hypotenuse_example(unit_triangle):
    m = unit_triangle
    op = build_weak_laplacian(m, 0, 2, "algorithm2")
    dm = DofMap(m, 2, "algorithm2")
    hyp = [e for e in range(3) if np.allclose(m.edge_midpoints[e], [0.5, 0.5])][0]
    local = np.zeros(op.shape[1])
    j = list(m.element_edges(0)).index(hyp)
    # n_e is outward on the boundary, so v_g . n = 1 on the hypotenuse
    local[dm.n_v0 + 3 * dm.n_vb + j * dm.n_vg] = 1.0
    assert apply_weak_laplacian(op, local)[0] == pytest.approx(2 * math.sqrt(2), rel=1e-14)


def test_x_cubed_k3(uniform):
    m = uniform(2)
    u = lambda x, y: x**3  # noqa: E731
    g = lambda x, y: (3 * x**2, 0 * y)  # noqa: E731
    for t in range(m.n_elements):
        op = build_weak_laplacian(m, t, 3, "algorithm2")
        got = apply_weak_laplacian(op, _local(m, 3, "algorithm2", u, g, t))
        want = project_Qh_interior(lambda x, y: 6 * x, m, t, 3)
        assert np.abs(got - want).max() < 1e-11


@pytest.mark.parametrize("flavor", FLAVORS)
def test_apply_linear_and_zero(voronoi64, flavor, rng):
    op = build_weak_laplacian(voronoi64, 3, 3, flavor)
    v, w = rng.normal(size=(2, op.shape[1]))
    assert not apply_weak_laplacian(op, np.zeros(op.shape[1])).any()
    lhs = apply_weak_laplacian(op, 2.0 * v - 0.5 * w)
    rhs = 2.0 * apply_weak_laplacian(op, v) - 0.5 * apply_weak_laplacian(op, w)
    assert np.allclose(lhs, rhs, rtol=1e-13, atol=1e-12)
    with pytest.raises(ValueError):
        apply_weak_laplacian(op, np.zeros(op.shape[1] + 1))


@pytest.mark.parametrize("flavor", FLAVORS)
def test_x2_plus_y2_gives_4(uniform, flavor):
    m = uniform(3)
    u = lambda x, y: x**2 + y**2  # noqa: E731
    g = lambda x, y: (2 * x, 2 * y)  # noqa: E731
    for t in (0, 5, 17):
        op = build_weak_laplacian(m, t, 2, flavor)
        assert apply_weak_laplacian(op, _local(m, 2, flavor, u, g, t))[0] == pytest.approx(4.0)


@pytest.mark.parametrize("flavor", FLAVORS)
@pytest.mark.parametrize("k", [2, 3, 4])
def test_commutativity_polynomials(voronoi64, flavor, k):
    # all polynomials of degree <= k + 2
    p = problem_from_expression("x**2*y**2 - 3*x**3*y + y**4 + x*y + 2" +
                                (" + x**5*y - y**6" if k == 4 else "") +
                                (" + x**3*y**2" if k == 3 else ""))
    m = voronoi64 if k < 4 else build_polygonal(16, lloyd_iters=2, rng_seed=2)
    tol = 1e-10 if k < 4 else 1e-8
    assert verify_commutativity(m, k, flavor, p.u, p.grad, p.lap) < tol


def test_commutativity_smooth_is_quadrature_limited():
    m = build_uniform_triangular(16)
    pi = math.pi
    u = lambda x, y: np.sin(pi * x) * np.sin(pi * y)  # noqa: E731
    g = lambda x, y: (pi * np.cos(pi * x) * np.sin(pi * y), pi * np.sin(pi * x) * np.cos(pi * y))  # noqa: E731
    lap = lambda x, y: -2 * pi**2 * u(x, y)  # noqa: E731
    assert verify_commutativity(m, 2, "algorithm2", u, g, lap) < 1e-8


def test_flavor_equivalence(voronoi64, rng):
    """Flavor I with v_g parallel to n_e acts like flavor II on the normal part."""
    m, k = voronoi64, 3
    for t in (0, 10, 40):
        op1 = build_weak_laplacian(m, t, k, "algorithm1")
        op2 = build_weak_laplacian(m, t, k, "algorithm2")
        d1, d2 = DofMap(m, k, "algorithm1"), DofMap(m, k, "algorithm2")
        nedge = len(m.element_edges(t))
        head = rng.normal(size=d2.n_v0 + nedge * d2.n_vb)
        g = rng.normal(size=(nedge, k))
        v2 = np.concatenate([head, g.ravel()])
        v1 = np.concatenate([head, np.hstack([g, rng.normal(size=(nedge, k))]).ravel()])
        a, b = apply_weak_laplacian(op1, v1), apply_weak_laplacian(op2, v2)
        # identical columns; only the BLAS summation order can differ
        assert np.abs(a - b).max() <= 1e-13 * np.abs(b).max()


def test_dilation_scaling(rng):
    verts = np.array([[0.1, 0.0], [1.0, 0.2], [0.9, 1.1], [0.0, 0.8]])
    small = Mesh(verts, [[0, 1, 2, 3]])
    big = Mesh(2.0 * verts, [[0, 1, 2, 3]])
    u = lambda x, y: x**3 - x * y**2 + 2 * y**3  # noqa: E731
    g = lambda x, y: (3 * x**2 - y**2, -2 * x * y + 6 * y**2)  # noqa: E731
    us = lambda x, y: u(x / 2, y / 2)  # noqa: E731
    gs = lambda x, y: tuple(c / 2 for c in g(x / 2, y / 2))  # noqa: E731
    a = apply_weak_laplacian(build_weak_laplacian(small, 0, 3, "algorithm2"),
                             _local(small, 3, "algorithm2", u, g))
    b = apply_weak_laplacian(build_weak_laplacian(big, 0, 3, "algorithm2"),
                             _local(big, 3, "algorithm2", us, gs))
    # coefficients are in scaled bases, so they compare directly
    assert np.abs(b - a / 4).max() < 1e-12 * np.abs(a).max()


def test_requires_k_at_least_2(unit_triangle):
    with pytest.raises(ValueError):
        build_weak_laplacian(unit_triangle, 0, 1, "algorithm2")
