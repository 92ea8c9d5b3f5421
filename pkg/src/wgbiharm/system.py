"""Global assembly and solution of the weak Galerkin biharmonic system.

The bilinear form on each element is the weak-Laplacian stiffness plus the
two stabilizer terms weighted by ``h**-1`` (gradient mismatch) and
``h**-3`` (value mismatch).  ``h`` is the length of the edge carrying the
term (``stabilizer="edge"``, the default) or the element diameter
(``stabilizer="element"``).  Boundary DOFs are eliminated: ``v_b`` and
the normal gradient trace on boundary edges are fixed to the projected
Dirichlet and Neumann data and their coupling moves to the right-hand side.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .dofmap import FLAVORS, DofMap, normalize_flavor
from .polyspace import (
    EdgeBasis,
    ElementBasis,
    default_degree,
    edge_quadrature,
    element_quadrature,
    evaluate_field,
    project_Qb,
    project_Qgn,
)
from .weaklap import build_weak_laplacian

try:  # optional CHOLMOD backend
    from sksparse.cholmod import CholmodNotPositiveDefiniteError
    from sksparse.cholmod import cholesky as _cholmod_cholesky
except ImportError:  # pragma: no cover - depends on the environment
    _cholmod_cholesky = None

__all__ = [
    "FLAVORS",
    "DofMap",
    "build_dof_map",
    "FactorizationError",
    "ConvergenceError",
    "SparseSystem",
    "STABILIZER_SCALES",
    "penalty_lengths",
    "local_stabilizer",
    "local_matrices",
    "assemble",
    "solve",
    "is_positive_definite",
    "backward_error",
    "write_matrix_market",
]

log = logging.getLogger(__name__)


class FactorizationError(np.linalg.LinAlgError):
    """Cholesky failed: the reduced matrix is not symmetric positive definite."""


class ConvergenceError(RuntimeError):
    pass


def build_dof_map(mesh, k, flavor):
    return DofMap(mesh, k, flavor)


@dataclass
class SparseSystem:
    """Reduced SPD system on free DOFs plus everything needed to rebuild the full vector."""

    matrix: sp.csr_matrix
    rhs: np.ndarray
    boundary_values: np.ndarray
    dofmap: DofMap
    full_matrix: sp.csr_matrix
    load: np.ndarray
    degree: int
    stabilizer: str = "edge"

    @property
    def n_free(self):
        return self.matrix.shape[0]

    @property
    def n_dofs(self):
        return self.full_matrix.shape[0]

    def asymmetry(self):
        """max |A - A^T| relative to max |A|."""
        A = self.matrix
        d = abs(A - A.T)
        return float(d.max() / abs(A).max()) if d.nnz else 0.0

    def expand(self, x_free):
        x = self.boundary_values.copy()
        x[self.dofmap.free] = x_free
        return x


STABILIZER_SCALES = ("edge", "element")


def penalty_lengths(mesh, t, stabilizer="edge"):
    """Length scale of each stabilizer term on the edges of element ``t``."""
    eids = mesh.element_edges(t)
    if stabilizer == "edge":
        return mesh.edge_lengths[eids]
    if stabilizer == "element":
        return np.full(len(eids), mesh.diameters[t])
    raise ValueError(f"unknown stabilizer scale {stabilizer!r}; expected one of {STABILIZER_SCALES}")


def local_stabilizer(mesh, t, k, flavor, degree=None, stabilizer="edge"):
    """Element stabilizer matrix on local DOFs (``DofMap.local_dofs`` order)."""
    flavor = normalize_flavor(flavor)
    vector = flavor == "algorithm1"
    deg = default_degree(k) if degree is None else degree
    eids = mesh.element_edges(t)
    m = len(eids)
    n0, nb, ng = (k + 1) * (k + 2) // 2, k + 1, (2 * k if vector else k)
    nloc = n0 + m * (nb + ng)
    hs = penalty_lengths(mesh, t, stabilizer)
    trial = ElementBasis.for_element(mesh, t, k)

    S = np.zeros((nloc, nloc))
    for j, (e, h) in enumerate(zip(eids, hs)):
        rule = edge_quadrature(mesh, e, deg)
        sw = np.sqrt(rule.weights)[:, None]
        vals = trial.values(rule.points)
        grads = trial.gradients(rule.points)
        eb = EdgeBasis.for_edge(mesh, e, k).values(rule.points)
        eg = EdgeBasis.for_edge(mesh, e, k - 1).values(rule.points)
        cb = n0 + j * nb
        cg = n0 + m * nb + j * ng

        jump = np.zeros((len(sw), nloc))
        jump[:, :n0] = vals
        jump[:, cb:cb + nb] = -eb
        jump *= sw
        S += h**-3 * (jump.T @ jump)

        dn = np.zeros((len(sw), nloc))
        dn[:, :n0] = grads @ mesh.edge_normals[e]
        dn[:, cg:cg + k] = -eg
        dn *= sw
        S += h**-1 * (dn.T @ dn)
        if vector:
            dt = np.zeros((len(sw), nloc))
            dt[:, :n0] = grads @ mesh.edge_tangents[e]
            dt[:, cg + k:cg + 2 * k] = -eg
            dt *= sw
            S += h**-1 * (dt.T @ dt)
    return S


def local_matrices(mesh, t, k, flavor, f=None, degree=None, stabilizer="edge",
                   orthonormal=False):
    """Element matrix and load vector on local DOFs.

    The weak-Laplacian part is ``B^T M^{-1} B`` formed as ``G^T G`` with
    ``G = C^{-1} B`` (``M = C C^T``) so it is symmetric to the last bit.
    It does not depend on the test basis; ``orthonormal=True`` only makes
    ``M`` the identity, which helps at high ``k``.
    """
    deg = default_degree(k) if degree is None else degree
    op = build_weak_laplacian(mesh, t, k, flavor, degree=deg, orthonormal=orthonormal)
    C = np.linalg.cholesky(op.mass)
    G = np.linalg.solve(C, op.rhs)
    K = G.T @ G + local_stabilizer(mesh, t, k, flavor, deg, stabilizer)
    return K, local_load(mesh, t, k, f, deg, K.shape[0])


def local_load(mesh, t, k, f, degree, size):
    """Load moments ``(f, v0)_T`` zero-padded to ``size`` local DOFs."""
    n0 = (k + 1) * (k + 2) // 2
    F = np.zeros(size)
    if f is None:
        return F
    rule = element_quadrature(mesh, t, degree)
    V = ElementBasis.for_element(mesh, t, k).values(rule.points)
    F[:n0] = V.T @ (rule.weights * evaluate_field(f, rule.points))
    return F


def _shape_key(mesh, t):
    # Element matrices are translation invariant: every basis is centred on
    # the element or edge, so relative geometry plus edge orientation fixes K.
    eids = mesh.element_edges(t)
    scale = mesh.diameters[t]
    rel = (mesh.element_vertices(t) - mesh.centroids[t]) / scale
    parts = (rel, mesh.edge_normals[eids], mesh.edge_tangents[eids])
    return (round(scale, 13), mesh.edge_signs(t).tobytes(),
            *(np.round(a, 12).tobytes() for a in parts))


def _boundary_values(dm, zeta, phi, degree):
    mesh, k = dm.mesh, dm.k
    x = np.zeros(dm.n_dofs)
    for e in np.flatnonzero(mesh.boundary_edges):
        if zeta is not None:
            x[dm.vb_slice(e)] = project_Qb(zeta, mesh, e, k, degree)
        if phi is not None:
            x[dm.gn_slice(e)] = project_Qgn(phi, mesh, e, k - 1, degree)
    return x


def assemble(mesh, k, flavor, f=None, zeta=None, phi=None, degree=None, stabilizer="edge",
             orthonormal=False):
    """Assemble the reduced system.

    Parameters
    ----------
    f : callable ``f(x, y)`` or None
        Load; ``None`` means zero.
    zeta : callable ``zeta(x, y)`` or None
        Dirichlet value on the boundary.
    phi : callable ``phi(x, y, nx, ny)`` or None
        Outward normal derivative on the boundary.
    degree : int, optional
        Quadrature exactness on elements and edges (default ``2k + 2``).
    stabilizer : {"edge", "element"}
        Length scale in the stabilizer weights.
    orthonormal : bool
        Orthonormalize the weak-Laplacian test basis on each element.
    """
    dm = DofMap(mesh, k, flavor)
    deg = default_degree(k) if degree is None else degree

    rows, cols, vals = [], [], []
    load = np.zeros(dm.n_dofs)
    cache = {}
    for t in range(mesh.n_elements):
        key = _shape_key(mesh, t)
        K = cache.get(key)
        if K is None:
            K, _ = local_matrices(mesh, t, k, dm.flavor, None, deg, stabilizer, orthonormal)
            cache[key] = K
        ids = dm.local_dofs(t)
        F = local_load(mesh, t, k, f, deg, len(ids))
        rows.append(np.repeat(ids, len(ids)))
        cols.append(np.tile(ids, len(ids)))
        vals.append(K.ravel())
        np.add.at(load, ids, F)

    A = sp.coo_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
        shape=(dm.n_dofs, dm.n_dofs),
    ).tocsr()
    A.sum_duplicates()

    xb = _boundary_values(dm, zeta, phi, deg)
    free, fixed = dm.free, dm.fixed
    A_ff = A[free][:, free].tocsr()
    b = load[free] - A[free][:, fixed] @ xb[fixed]
    log.debug("assembled %s: %d free of %d DOFs, nnz=%d", dm, len(free), dm.n_dofs, A_ff.nnz)
    return SparseSystem(A_ff, b, xb, dm, A, load, deg, stabilizer)


def _cholesky_solver(A):
    """Return a callable solving ``A x = b`` via a symmetric factorization.

    CHOLMOD is used when scikit-sparse is installed.  Otherwise SuperLU runs
    in symmetric mode with diagonal pivots only, which for a symmetric matrix
    is an LDL^T factorization; all pivots positive is then equivalent to a
    successful Cholesky factorization.
    """
    A = sp.csc_matrix(A)
    if _cholmod_cholesky is not None:
        try:
            # supernodal mode breaks when CHOLMOD and numpy load different BLAS builds
            factor = _cholmod_cholesky(A, mode="simplicial")
        except CholmodNotPositiveDefiniteError as exc:
            raise FactorizationError(f"matrix is not positive definite: {exc}") from None
        # simplicial CHOLMOD computes LDL^T, which also succeeds on indefinite matrices
        d = factor.D()
        if not np.all(d > 0.0):
            raise FactorizationError(
                f"non-positive pivot {d.min():.3e}: matrix is not positive definite")
        return factor
    try:
        lu = spla.splu(A, permc_spec="MMD_AT_PLUS_A", diag_pivot_thresh=0.0,
                       options={"SymmetricMode": True})
    except RuntimeError as exc:
        raise FactorizationError(str(exc)) from None
    pivots = lu.U.diagonal()
    if not np.all(pivots > 0.0):
        raise FactorizationError(
            f"non-positive pivot {pivots.min():.3e}: matrix is not positive definite")
    return lu.solve


def is_positive_definite(A):
    try:
        _cholesky_solver(A)
    except FactorizationError:
        return False
    return True


def backward_error(A, x, b):
    """Normwise backward error ``||b - A x|| / (||A|| ||x|| + ||b||)`` in the inf-norm."""
    r = b - A @ x
    anorm = abs(A).sum(axis=1).max()
    return float(np.abs(r).max() / (anorm * np.abs(x).max() + np.abs(b).max()))


def solve(system, method="direct", tol=1e-10, x0=None, maxiter=None):
    """Solve the reduced system and return the full DOF vector.

    ``method="direct"`` uses sparse Cholesky with up to three steps of
    iterative refinement; ``"cg"`` uses conjugate gradients with Jacobi
    preconditioning.  A relative residual ``||A x - b|| / ||b||`` above
    ``tol`` raises :class:`ConvergenceError`.  The condition number grows
    like ``h**-4``, so from about n = 128 the default ``tol`` is below what
    double precision delivers; the error message reports the backward error
    to tell this apart from a genuine failure.
    """
    A, b = system.matrix, system.rhs
    bnorm = np.linalg.norm(b)
    if bnorm == 0.0:
        return system.expand(np.zeros(system.n_free))

    if method == "direct":
        factor = _cholesky_solver(A)
        x = factor(b)
        for _ in range(3):
            r = b - A @ x
            if np.linalg.norm(r) <= tol * bnorm:
                break
            x = x + factor(r)
    elif method == "cg":
        M = sp.diags(1.0 / A.diagonal())
        maxiter = 20 * A.shape[0] if maxiter is None else maxiter
        x, info = spla.cg(A, b, x0=x0, rtol=tol, atol=0.0, M=M, maxiter=maxiter)
        if info != 0:
            raise ConvergenceError(f"CG did not converge in {maxiter} iterations")
    else:
        raise ValueError(f"unknown method {method!r}")

    res = np.linalg.norm(A @ x - b) / bnorm
    if res > tol:
        raise ConvergenceError(f"relative residual {res:.3e} exceeds tol {tol:.1e} "
                               f"(backward error {backward_error(A, x, b):.1e})")
    return system.expand(x)


def write_matrix_market(system, path, full=False):
    """Write the reduced (or full) matrix in symmetric MatrixMarket coordinate format."""
    from scipy.io import mmwrite

    A = system.full_matrix if full else system.matrix
    mmwrite(str(path), sp.coo_matrix(A), symmetry="symmetric")
