import types

import numpy as np
import pytest
import scipy.io
import scipy.sparse as sp

from wgbiharm.analysis import error_vs_projection, l2_norm_element, solve_problem
from wgbiharm.mesh import build_polygonal, build_uniform_triangular
from wgbiharm.problems import get_problem, problem_from_expression
from wgbiharm.system import (
    ConvergenceError,
    FactorizationError,
    SparseSystem,
    assemble,
    is_positive_definite,
    local_matrices,
    solve,
    write_matrix_market,
)

FLAVORS = ["algorithm1", "algorithm2"]


@pytest.mark.parametrize("flavor", FLAVORS)
def test_zero_data_gives_zero(uniform, flavor):
    s = assemble(uniform(3), 2, flavor)
    assert not s.rhs.any()
    assert not solve(s).any()


@pytest.mark.parametrize("flavor", FLAVORS)
@pytest.mark.parametrize("k", [2, 3])
def test_symmetric_positive_definite(voronoi64, flavor, k):
    p = get_problem("case1")
    s = assemble(voronoi64, k, flavor, p.f)
    assert s.asymmetry() < 1e-12
    assert is_positive_definite(s.matrix)
    rng = np.random.default_rng(0)
    V = rng.normal(size=(s.n_free, 50))
    assert np.all(np.einsum("ij,ij->j", V, s.matrix @ V) > 0)


def test_local_matrix_symmetric(voronoi64):
    K, F = local_matrices(voronoi64, 5, 3, "algorithm1", f=lambda x, y: 1 + x)
    assert np.array_equal(K, K.T)
    assert F[10:].sum() == 0 and F[:10].any()


POLY = {2: "1 + x - 2*y + x**2 + 3*x*y - y**2",
        3: "1 + x - 2*y + x**2 + 3*x*y - y**2 + x**3 - 2*x*y**2 + y**3"}


@pytest.mark.parametrize("flavor", FLAVORS)
@pytest.mark.parametrize("k", [2, 3])
@pytest.mark.parametrize("mesh_kind", ["uniform", "voronoi"])
def test_patch_test(uniform, voronoi64, flavor, k, mesh_kind):
    mesh = uniform(4) if mesh_kind == "uniform" else voronoi64
    p = problem_from_expression(POLY[k])
    u_h, system = solve_problem(mesh, p, k, flavor)
    rep = error_vs_projection(mesh, k, flavor, u_h, p.u, p.grad, system=system)
    assert rep.err_H2 < 1e-8
    assert rep.err_L2 < 1e-8


def test_residual_recomputed(uniform):
    p = get_problem("case2")
    s = assemble(uniform(8), 2, "algorithm2", p.f, p.dirichlet(), p.neumann())
    x = solve(s)
    r = s.matrix @ x[s.dofmap.free] - s.rhs
    assert np.linalg.norm(r) / np.linalg.norm(s.rhs) < 1e-10
    assert np.array_equal(x[s.dofmap.fixed], s.boundary_values[s.dofmap.fixed])


def test_cg_matches_direct_and_is_unique(uniform):
    p = get_problem("case1")
    s = assemble(uniform(4), 2, "algorithm2", p.f)
    direct = solve(s)
    a = solve(s, method="cg", tol=1e-12)
    b = solve(s, method="cg", tol=1e-12, x0=np.random.default_rng(3).normal(size=s.n_free))
    scale = np.abs(direct).max()
    assert np.abs(a - direct).max() < 1e-8 * scale
    assert np.abs(a - b).max() < 1e-8 * scale


def test_cg_nonconvergence(uniform):
    p = get_problem("case1")
    s = assemble(uniform(4), 2, "algorithm2", p.f)
    with pytest.raises(ConvergenceError):
        solve(s, method="cg", maxiter=2)
    with pytest.raises(ValueError):
        solve(s, method="lu")


def _tiny_system(A, b):
    dm = types.SimpleNamespace(free=np.arange(len(b)), fixed=np.array([], dtype=int))
    A = sp.csr_matrix(np.atleast_2d(A))
    return SparseSystem(A, np.asarray(b, float), np.zeros(len(b)), dm, A, np.asarray(b, float), 4)


def test_one_by_one_system():
    assert solve(_tiny_system([[4.0]], [2.0]))[0] == 0.5


def test_indefinite_matrix_rejected():
    s = _tiny_system([[1.0, 2.0], [2.0, 1.0]], [1.0, 0.0])
    assert not is_positive_definite(s.matrix)
    with pytest.raises(FactorizationError):
        solve(s)


def test_flavors_agree_within_band(uniform):
    mesh = uniform(8)
    p = get_problem("case1")
    norms = []
    for flavor in FLAVORS:
        u_h, system = solve_problem(mesh, p, 2, flavor)
        norms.append(l2_norm_element(mesh, 2, u_h))
    assert abs(norms[0] - norms[1]) < 0.1 * norms[1]
    reps = [error_vs_projection(mesh, 2, f, solve_problem(mesh, p, 2, f)[0], p.u, p.grad)
            for f in FLAVORS]
    assert abs(reps[0].err_L2 - reps[1].err_L2) < 0.1 * reps[1].err_L2


def test_stabilizer_scales_and_orthonormal(uniform):
    mesh = uniform(4)
    edge = assemble(mesh, 2, "algorithm2")
    elem = assemble(mesh, 2, "algorithm2", stabilizer="element")
    assert abs(edge.full_matrix - elem.full_matrix).max() > 1.0
    ortho = assemble(mesh, 3, "algorithm2", orthonormal=True)
    plain = assemble(mesh, 3, "algorithm2")
    diff = abs(ortho.full_matrix - plain.full_matrix).max()
    assert diff < 1e-10 * abs(plain.full_matrix).max()
    with pytest.raises(ValueError):
        assemble(mesh, 2, "algorithm2", stabilizer="vertex")


@pytest.mark.parametrize("mesh", [build_uniform_triangular(3),
                                  build_polygonal(10, lloyd_iters=1, rng_seed=5)])
def test_shape_cache_matches_uncached(mesh):
    s = assemble(mesh, 2, "algorithm1")
    dense = np.zeros(s.full_matrix.shape)
    for t in range(mesh.n_elements):
        ids = s.dofmap.local_dofs(t)
        dense[np.ix_(ids, ids)] += local_matrices(mesh, t, 2, "algorithm1")[0]
    assert np.abs(dense - s.full_matrix.toarray()).max() < 1e-9 * np.abs(dense).max()


def test_superlu_fallback(monkeypatch, uniform):
    import wgbiharm.system as system

    p = get_problem("case1")
    s = assemble(uniform(4), 2, "algorithm2", p.f)
    ref = solve(s)
    monkeypatch.setattr(system, "_cholmod_cholesky", None)
    assert np.abs(solve(s) - ref).max() < 1e-10 * np.abs(ref).max()
    assert not is_positive_definite(sp.csr_matrix([[1.0, 2.0], [2.0, 1.0]]))


def test_matrix_market(tmp_path, uniform):
    s = assemble(uniform(2), 2, "algorithm2")
    path = tmp_path / "A.mtx"
    write_matrix_market(s, path)
    back = scipy.io.mmread(str(path))
    assert abs(sp.csr_matrix(back) - s.matrix).max() < 1e-14 * abs(s.matrix).max()
    assert "symmetric" in path.read_text().splitlines()[0]


@pytest.mark.parametrize("k", [4, 5])
@pytest.mark.parametrize("orthonormal", [False, True])
def test_patch_test_high_order(uniform, k, orthonormal):
    # Delta^2 u is a nonzero polynomial here, so the load term is exercised
    p = problem_from_expression(f"x**{k - 1}*y + x**2*y**{k - 2} - y**{k}")
    mesh = uniform(2)
    u_h, system = solve_problem(mesh, p, k, "algorithm2", orthonormal=orthonormal)
    rep = error_vs_projection(mesh, k, "algorithm2", u_h, p.u, p.grad, system=system)
    assert rep.err_H2 < 1e-8
