import numpy as np
import pytest
import sympy as sp

from wgbiharm.problems import (
    case1,
    case2,
    get_problem,
    load_problem,
    polynomial_problem,
    problem_from_expression,
)


def _fd_bilaplacian(u, x, y, h=1e-2):
    """13-point biharmonic stencil (two applications of the 5-point Laplacian)."""
    def lap(x, y):
        return (u(x + h, y) + u(x - h, y) + u(x, y + h) + u(x, y - h) - 4 * u(x, y)) / h**2
    return (lap(x + h, y) + lap(x - h, y) + lap(x, y + h) + lap(x, y - h) - 4 * lap(x, y)) / h**2


@pytest.mark.parametrize("make", [case1, case2])
def test_load_matches_finite_differences(make):
    p = make()
    rng = np.random.default_rng(0)
    pts = rng.uniform(0.1, 0.9, size=(20, 2))
    x, y = pts.T
    exact = p.f(x, y)
    # the plain stencil is only second order: about 1.6e-4 relative for case 2
    coarse = _fd_bilaplacian(p.u, x, y, 1e-2)
    assert np.max(np.abs(coarse - exact) / np.abs(exact)) < 1e-3
    # Richardson extrapolation removes the h^2 term
    fd = (4 * _fd_bilaplacian(p.u, x, y, 5e-3) - coarse) / 3
    assert np.max(np.abs(fd - exact) / np.abs(exact)) < 1e-4


def test_case1_load_matches_symbolic():
    x, y = sp.symbols("x y")
    u = x**2 * (1 - x) ** 2 * y**2 * (1 - y) ** 2
    bilap = sp.lambdify((x, y), sp.diff(u, x, 4) + 2 * sp.diff(u, x, 2, y, 2) + sp.diff(u, y, 4))
    pts = np.random.default_rng(1).uniform(0, 1, size=(50, 2))
    assert np.allclose(case1().f(*pts.T), bilap(*pts.T), rtol=1e-13, atol=1e-13)


def test_case1_derivatives():
    p = case1()
    pts = np.random.default_rng(2).uniform(0, 1, size=(10, 2))
    x, y = pts.T
    eps = 1e-6
    gx = (p.u(x + eps, y) - p.u(x - eps, y)) / (2 * eps)
    gy = (p.u(x, y + eps) - p.u(x, y - eps)) / (2 * eps)
    assert np.allclose(p.grad(x, y), (gx, gy), atol=1e-9)


def test_boundary_data():
    p1, p2 = case1(), case2()
    s = np.linspace(0, 1, 9)
    zero = np.zeros_like(s)
    assert not p1.dirichlet()(s, zero).any()
    assert not p1.neumann()(s, zero, zero, -1 + zero).any()
    # case 2: zero Dirichlet data, nonzero normal derivative
    assert np.allclose(p2.dirichlet()(s, zero), 0.0, atol=1e-15)
    dn = p2.neumann()(s[1:-1], zero[1:-1], zero[1:-1], -1 + zero[1:-1])
    assert np.allclose(dn, -np.pi * np.sin(np.pi * s[1:-1]))


def test_polynomial_problem():
    p = polynomial_problem([[1.0, 0.0, 2.0], [0.0, 3.0, 0.0]])  # 1 + 2 y^2 + 3 x y
    assert p.polynomial_degree == 2
    assert p.u(0.5, 0.5) == pytest.approx(1 + 0.5 + 0.75)
    assert not np.any(p.f(np.array([0.2, 0.3]), np.array([0.4, 0.1])))
    assert p.lap(0.3, 0.3) == pytest.approx(4.0)
    assert polynomial_problem([[0.0]]).polynomial_degree == 0


def test_expression_problem_load():
    p = problem_from_expression("x**3*y**2")
    assert p.f(0.3, 0.7) == pytest.approx(24 * 0.3)
    assert p.polynomial_degree == 5
    assert problem_from_expression("sin(pi*x)").polynomial_degree is None


def test_load_problem_file(tmp_path):
    path = tmp_path / "quartic.txt"
    path.write_text("# a quartic\nname = quartic\nu = x**4 + y**2\n")
    p = load_problem(path)
    assert p.name == "quartic"
    assert p.f(0.1, 0.2) == pytest.approx(24.0)
    assert get_problem(str(path)).name == "quartic"


def test_bad_problem_specs(tmp_path):
    with pytest.raises(ValueError):
        get_problem("case3")
    bad = tmp_path / "bad.txt"
    bad.write_text("v = x\n")
    with pytest.raises(ValueError):
        load_problem(bad)
    bad.write_text("no equals sign\n")
    with pytest.raises(ValueError):
        load_problem(bad)
