"""Discrete weak Laplacian on a single element.

For a local weak function ``v = {v0, v_b, v_g}`` the weak Laplacian is the
polynomial ``w`` in P_{k-2}(T) with, for every test polynomial ``phi``,

    (w, phi)_T = (v0, lap phi)_T - <v_b, grad phi . n>_dT + <v_g . n, phi>_dT

where ``n`` is the outward normal of T.  The map ``v -> w`` is stored as a
dense matrix acting on the element's local DOF vector.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla

from .dofmap import DofMap, normalize_flavor
from .polyspace import (
    EdgeBasis,
    ElementBasis,
    SingularMassError,
    default_degree,
    dim_p,
    edge_quadrature,
    element_quadrature,
    embed_exact_solution,
    project_Qh_interior,
)

__all__ = [
    "WeakLaplacianOperator",
    "build_weak_laplacian",
    "apply_weak_laplacian",
    "verify_commutativity",
]


@dataclass(frozen=True)
class WeakLaplacianOperator:
    element: int
    k: int
    flavor: str
    matrix: np.ndarray
    mass: np.ndarray
    rhs: np.ndarray
    basis: ElementBasis

    @property
    def shape(self):
        return self.matrix.shape


def build_weak_laplacian(mesh, t, k, flavor, degree=None, orthonormal=False):
    """Weak Laplacian operator of element ``t`` for local DOFs ordered as in :class:`DofMap`.

    With ``orthonormal=True`` the result is expressed in the L2-orthonormal
    basis of P_{k-2}(T), so the mass matrix is the identity.
    """
    if k < 2:
        raise ValueError("k must be >= 2")
    flavor = normalize_flavor(flavor)
    vector = flavor == "algorithm1"
    deg = default_degree(k) if degree is None else degree

    eids = mesh.element_edges(t)
    signs = mesh.edge_signs(t)
    m = len(eids)
    n0, nb, ng = dim_p(k), k + 1, (2 * k if vector else k)
    ntest = dim_p(k - 2)

    rule = element_quadrature(mesh, t, deg)
    # v0 always lives in the scaled monomial basis; ``orthonormal`` only
    # changes the P_{k-2} test basis and hence the output coefficients
    trial = ElementBasis.for_element(mesh, t, k)
    test = ElementBasis.for_element(mesh, t, k - 2, orthonormal=orthonormal)

    B = np.zeros((ntest, n0 + m * (nb + ng)))
    w = rule.weights
    if k >= 4:
        # lap phi vanishes identically for k - 2 < 2
        B[:, :n0] = (test.laplacians(rule.points) * w[:, None]).T @ trial.values(rule.points)

    for j, (e, sgn) in enumerate(zip(eids, signs)):
        er = edge_quadrature(mesh, e, deg)
        we = er.weights
        normal = sgn * mesh.edge_normals[e]
        phi = test.values(er.points)
        dphi_n = test.gradients(er.points) @ normal
        vb_vals = EdgeBasis.for_edge(mesh, e, k).values(er.points)
        vg_vals = EdgeBasis.for_edge(mesh, e, k - 1).values(er.points)

        cb = n0 + j * nb
        B[:, cb:cb + nb] -= (dphi_n * we[:, None]).T @ vb_vals
        cg = n0 + m * nb + j * ng
        # v_g . n = sgn * (normal block) since n = sgn * n_e
        B[:, cg:cg + k] += sgn * (phi * we[:, None]).T @ vg_vals

    M = test.mass(rule)
    try:
        factor = sla.cho_factor(M)
    except np.linalg.LinAlgError as exc:
        raise SingularMassError(f"element {t}: {exc}") from None
    L = sla.cho_solve(factor, B)
    return WeakLaplacianOperator(t, k, flavor, L, M, B, test)


def apply_weak_laplacian(op, local_dofs):
    """P_{k-2}(T) coefficients of the weak Laplacian of ``local_dofs``."""
    local_dofs = np.asarray(local_dofs, dtype=float)
    if local_dofs.shape[0] != op.matrix.shape[1]:
        raise ValueError(
            f"expected {op.matrix.shape[1]} local DOFs, got {local_dofs.shape[0]}")
    return op.matrix @ local_dofs


def verify_commutativity(mesh, k, flavor, u, grad_u, lap_u, degree=None):
    """Max coefficient gap between ``lap_w(Q_h u)`` and ``Q_h(lap u)`` over elements."""
    dm = DofMap(mesh, k, flavor)
    x = embed_exact_solution(u, grad_u, mesh, k, dm.flavor, degree=degree, dofmap=dm)
    worst = 0.0
    for t in range(mesh.n_elements):
        op = build_weak_laplacian(mesh, t, k, dm.flavor, degree=degree)
        lhs = apply_weak_laplacian(op, dm.restrict(x, t))
        rhs = project_Qh_interior(lap_u, mesh, t, k, degree=degree)
        worst = max(worst, float(np.max(np.abs(lhs - rhs))))
    return worst
