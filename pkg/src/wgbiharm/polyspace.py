"""Polynomial bases, quadrature and L2 projections on elements and edges.

Element polynomials use scaled monomials centred at the element centroid,
``((x - x_T)/h_T)**a * ((y - y_T)/h_T)**b`` in graded order, so the first
``dim P_r`` functions span ``P_r`` for every ``r <= k``.  Edge polynomials
are powers of ``s = (x - m_e).tau_e / h_e`` which runs over [-1/2, 1/2].
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np
import scipy.linalg as sla
from scipy.special import roots_jacobi, roots_legendre

__all__ = [
    "SingularMassError",
    "QuadratureRule",
    "ElementBasis",
    "EdgeBasis",
    "dim_p",
    "monomial_exponents",
    "triangle_rule",
    "segment_rule",
    "element_quadrature",
    "edge_quadrature",
    "default_degree",
    "evaluate_field",
    "evaluate_vector_field",
    "project_Q0",
    "project_Qb",
    "project_Qg",
    "project_Qgn",
    "project_Qh_interior",
    "embed_exact_solution",
]


class SingularMassError(np.linalg.LinAlgError):
    pass


def dim_p(k):
    """Dimension of P_k in two variables; 0 for negative k."""
    return (k + 1) * (k + 2) // 2 if k >= 0 else 0


@lru_cache(maxsize=None)
def monomial_exponents(k):
    """Exponent pairs (a, b) with a + b <= k in graded lexicographic order."""
    out = [(d - j, j) for d in range(k + 1) for j in range(d + 1)]
    arr = np.array(out, dtype=np.int64).reshape(-1, 2)
    arr.setflags(write=False)
    return arr


def default_degree(k):
    """Default quadrature exactness for degree-k weak functions."""
    return 2 * k + 2


# ---------------------------------------------------------------------------
# quadrature


@dataclass(frozen=True)
class QuadratureRule:
    points: np.ndarray
    weights: np.ndarray
    degree: int

    def integrate(self, values):
        return np.tensordot(self.weights, values, axes=(0, 0))


@lru_cache(maxsize=None)
def triangle_rule(degree):
    """Collapsed Gauss rule on the reference triangle (0,0), (1,0), (0,1).

    Gauss-Jacobi in the collapsed direction absorbs the Duffy Jacobian, so
    all weights are positive and the rule is exact up to ``degree``.
    """
    n = max(int(degree), 0) // 2 + 1
    tj, wj = roots_jacobi(n, 1.0, 0.0)
    tl, wl = roots_legendre(n)
    u = 0.5 * (1.0 + tj)
    v = 0.5 * (1.0 + tl)
    wu = 0.25 * wj
    wv = 0.5 * wl
    U, V = np.meshgrid(u, v, indexing="ij")
    pts = np.column_stack([U.ravel(), ((1.0 - U) * V).ravel()])
    w = np.outer(wu, wv).ravel()
    pts.setflags(write=False)
    w.setflags(write=False)
    return pts, w


@lru_cache(maxsize=None)
def segment_rule(degree):
    """Gauss-Legendre rule on [-1/2, 1/2]."""
    n = max(int(degree), 0) // 2 + 1
    x, w = roots_legendre(n)
    x, w = 0.5 * x, 0.5 * w
    x.setflags(write=False)
    w.setflags(write=False)
    return x, w


def _triangulate(xy, centroid):
    """Sub-triangles covering a simple polygon.

    Triangles are used as-is; polygons are fanned from the centroid when
    every fan triangle is positively oriented, otherwise ear-clipped.
    """
    m = len(xy)
    if m == 3:
        return [xy]
    fan = [np.array([centroid, xy[i], xy[(i + 1) % m]]) for i in range(m)]
    if all(_tri_area(tri) > 0.0 for tri in fan):
        return fan
    return _ear_clip(xy)


def _tri_area(tri):
    (x0, y0), (x1, y1), (x2, y2) = tri
    return 0.5 * ((x1 - x0) * (y2 - y0) - (x2 - x0) * (y1 - y0))


def _ear_clip(xy):
    idx = list(range(len(xy)))
    tris = []
    while len(idx) > 3:
        for j in range(len(idx)):
            a, b, c = idx[j - 1], idx[j], idx[(j + 1) % len(idx)]
            tri = np.array([xy[a], xy[b], xy[c]])
            if _tri_area(tri) <= 0.0:
                continue
            others = [xy[i] for i in idx if i not in (a, b, c)]
            if any(_in_triangle(p, tri) for p in others):
                continue
            tris.append(tri)
            del idx[j]
            break
        else:
            raise ValueError("ear clipping failed; polygon is not simple")
    tris.append(np.array([xy[i] for i in idx]))
    return tris


def _in_triangle(p, tri):
    d = [_tri_area(np.array([tri[i], tri[(i + 1) % 3], p])) for i in range(3)]
    return all(x >= 0.0 for x in d)


def element_quadrature(mesh, t, degree):
    """Quadrature on element ``t`` exact for polynomials of ``degree``."""
    if mesh.areas[t] < 1e-14:
        raise ValueError(f"element {t} is degenerate (area {mesh.areas[t]:.3e})")
    ref_pts, ref_w = triangle_rule(degree)
    pts, wts = [], []
    for tri in _triangulate(mesh.element_vertices(t), mesh.centroids[t]):
        a = tri[0]
        J = np.column_stack([tri[1] - a, tri[2] - a])
        pts.append(a + ref_pts @ J.T)
        wts.append(ref_w * abs(np.linalg.det(J)))
    return QuadratureRule(np.vstack(pts), np.concatenate(wts), int(degree))


def edge_quadrature(mesh, e, degree):
    """Gauss rule on edge ``e``; weights sum to the edge length."""
    s, w = segment_rule(degree)
    he = mesh.edge_lengths[e]
    pts = mesh.edge_midpoints[e] + np.outer(s * he, mesh.edge_tangents[e])
    return QuadratureRule(pts, w * he, int(degree))


# ---------------------------------------------------------------------------
# bases


class ElementBasis:
    """Scaled monomial basis of P_k on one element.

    With ``orthonormal=True`` the basis is replaced by its L2-orthonormal
    Gram-Schmidt version in the same graded order (useful for k > 4).
    """

    def __init__(self, center, h, k, rule=None, orthonormal=False):
        self.center = np.asarray(center, dtype=float)
        self.h = float(h)
        self.k = int(k)
        self.exponents = monomial_exponents(self.k)
        self.dim = len(self.exponents)
        self.transform = None
        if orthonormal:
            if rule is None:
                raise ValueError("orthonormal basis needs a quadrature rule")
            M = self._raw_mass(rule)
            try:
                L = np.linalg.cholesky(M)
            except np.linalg.LinAlgError as exc:
                raise SingularMassError(str(exc)) from None
            self.transform = sla.solve_triangular(L, np.eye(self.dim), lower=True).T

    @classmethod
    def for_element(cls, mesh, t, k, rule=None, orthonormal=False):
        if orthonormal and rule is None:
            rule = element_quadrature(mesh, t, 2 * k)
        return cls(mesh.centroids[t], mesh.diameters[t], k, rule, orthonormal)

    def _scaled(self, pts):
        pts = np.asarray(pts, dtype=float).reshape(-1, 2)
        return (pts - self.center) / self.h

    def _powers(self, z, deg):
        # z^p for p = 0..deg as (npts, deg+1)
        return z[:, None] ** np.arange(deg + 1)

    def _raw_values(self, pts):
        xi = self._scaled(pts)
        px, py = self._powers(xi[:, 0], self.k), self._powers(xi[:, 1], self.k)
        a, b = self.exponents.T
        return px[:, a] * py[:, b]

    def _raw_mass(self, rule):
        V = self._raw_values(rule.points)
        return (V * rule.weights[:, None]).T @ V

    def _apply(self, raw):
        return raw if self.transform is None else raw @ self.transform

    def values(self, pts):
        """(npts, dim) basis values."""
        return self._apply(self._raw_values(pts))

    def gradients(self, pts):
        """(npts, dim, 2) basis gradients."""
        xi = self._scaled(pts)
        px, py = self._powers(xi[:, 0], self.k), self._powers(xi[:, 1], self.k)
        a, b = self.exponents.T
        dx = np.where(a > 0, a, 0) * px[:, np.maximum(a - 1, 0)] * py[:, b]
        dy = np.where(b > 0, b, 0) * px[:, a] * py[:, np.maximum(b - 1, 0)]
        g = np.stack([self._apply(dx), self._apply(dy)], axis=-1)
        return g / self.h

    def laplacians(self, pts):
        """(npts, dim) basis Laplacians."""
        xi = self._scaled(pts)
        px, py = self._powers(xi[:, 0], self.k), self._powers(xi[:, 1], self.k)
        a, b = self.exponents.T
        dxx = a * (a - 1) * px[:, np.maximum(a - 2, 0)] * py[:, b]
        dyy = b * (b - 1) * px[:, a] * py[:, np.maximum(b - 2, 0)]
        return self._apply(dxx + dyy) / self.h**2

    def mass(self, rule):
        V = self.values(rule.points)
        return (V * rule.weights[:, None]).T @ V

    def evaluate(self, coeffs, pts):
        return self.values(pts) @ np.asarray(coeffs)


class EdgeBasis:
    """Monomials ``s**j``, j <= m, in the centred arclength ``s`` on an edge."""

    def __init__(self, midpoint, tangent, length, m):
        self.midpoint = np.asarray(midpoint, dtype=float)
        self.tangent = np.asarray(tangent, dtype=float)
        self.length = float(length)
        self.m = int(m)
        self.dim = self.m + 1

    @classmethod
    def for_edge(cls, mesh, e, m):
        return cls(mesh.edge_midpoints[e], mesh.edge_tangents[e], mesh.edge_lengths[e], m)

    def parameter(self, pts):
        pts = np.asarray(pts, dtype=float).reshape(-1, 2)
        return (pts - self.midpoint) @ self.tangent / self.length

    def values(self, pts):
        s = self.parameter(pts)
        return s[:, None] ** np.arange(self.dim)

    def mass(self, rule):
        V = self.values(rule.points)
        return (V * rule.weights[:, None]).T @ V

    def evaluate(self, coeffs, pts):
        return self.values(pts) @ np.asarray(coeffs)


# ---------------------------------------------------------------------------
# projections


def evaluate_field(f, pts):
    """Evaluate a scalar callable ``f(x, y)`` at (npts, 2) points."""
    pts = np.asarray(pts, dtype=float).reshape(-1, 2)
    val = f(pts[:, 0], pts[:, 1])
    return np.broadcast_to(np.asarray(val, dtype=float), (len(pts),)).copy()


def evaluate_vector_field(g, pts):
    """Evaluate ``g(x, y) -> (gx, gy)`` at points; returns (npts, 2)."""
    pts = np.asarray(pts, dtype=float).reshape(-1, 2)
    gx, gy = g(pts[:, 0], pts[:, 1])
    out = np.empty((len(pts), 2))
    out[:, 0] = gx
    out[:, 1] = gy
    return out


def _solve_mass(M, b):
    try:
        c, low = sla.cho_factor(M)
    except np.linalg.LinAlgError as exc:
        raise SingularMassError(f"mass matrix is not positive definite: {exc}") from None
    return sla.cho_solve((c, low), b)


def _l2_project(basis, rule, values):
    V = basis.values(rule.points)
    M = (V * rule.weights[:, None]).T @ V
    rhs = (V * rule.weights[:, None]).T @ values
    return _solve_mass(M, rhs)


def project_Q0(f, mesh, t, k, degree=None, orthonormal=False):
    """Coefficients of the L2 projection of ``f`` onto P_k(T) (scaled monomials)."""
    rule = element_quadrature(mesh, t, default_degree(k) if degree is None else degree)
    basis = ElementBasis.for_element(mesh, t, k, orthonormal=orthonormal)
    return _l2_project(basis, rule, evaluate_field(f, rule.points))


def project_Qh_interior(f, mesh, t, k, degree=None, orthonormal=False):
    """Coefficients of the L2 projection of ``f`` onto P_{k-2}(T)."""
    if k < 2:
        raise ValueError("k must be >= 2")
    rule = element_quadrature(mesh, t, default_degree(k) if degree is None else degree)
    basis = ElementBasis.for_element(mesh, t, k - 2, orthonormal=orthonormal)
    return _l2_project(basis, rule, evaluate_field(f, rule.points))


def project_Qb(f, mesh, e, k, degree=None):
    """Coefficients of the L2 projection of ``f`` onto P_k(e)."""
    rule = edge_quadrature(mesh, e, default_degree(k) if degree is None else degree)
    return _l2_project(EdgeBasis.for_edge(mesh, e, k), rule, evaluate_field(f, rule.points))


def project_Qg(g, mesh, e, m, degree=None):
    """Componentwise L2 projection of a vector field onto [P_m(e)]^2.

    Returns a (2, m+1) array: x-component coefficients, then y.
    """
    rule = edge_quadrature(mesh, e, default_degree(m + 1) if degree is None else degree)
    vals = evaluate_vector_field(g, rule.points)
    return _l2_project(EdgeBasis.for_edge(mesh, e, m), rule, vals).T


def project_Qgn(g, mesh, e, m, degree=None):
    """L2 projection onto P_m(e) of a scalar normal-derivative datum.

    ``g`` is called as ``g(x, y, nx, ny)`` with ``n_e`` broadcast to the
    quadrature points, so both ``grad(u).n`` style data and plain scalar
    fields (ignoring the normal) are accepted.
    """
    rule = edge_quadrature(mesh, e, default_degree(m + 1) if degree is None else degree)
    p = rule.points
    n = np.broadcast_to(mesh.edge_normals[e], p.shape)
    vals = np.broadcast_to(np.asarray(g(p[:, 0], p[:, 1], n[:, 0], n[:, 1]), dtype=float),
                           (len(p),))
    return _l2_project(EdgeBasis.for_edge(mesh, e, m), rule, vals)


def embed_exact_solution(u, grad_u, mesh, k, flavor, degree=None, dofmap=None):
    """Global DOF vector of the weak-function projection ``{Q0 u, Qb u, Qg grad u}``.

    For ``algorithm1`` the gradient trace is stored in the edge frame
    (normal block, then tangential block); for ``algorithm2`` only the
    normal component is kept.
    """
    from .dofmap import DofMap

    dm = DofMap(mesh, k, flavor) if dofmap is None else dofmap
    x = np.zeros(dm.n_dofs)
    for t in range(mesh.n_elements):
        x[dm.element_slice(t)] = project_Q0(u, mesh, t, k, degree)
    for e in range(mesh.n_edges):
        x[dm.vb_slice(e)] = project_Qb(u, mesh, e, k, degree)
        qg = project_Qg(grad_u, mesh, e, k - 1, degree)
        gn = mesh.edge_normals[e] @ qg
        if dm.vector_trace:
            gt = mesh.edge_tangents[e] @ qg
            x[dm.vg_slice(e)] = np.concatenate([gn, gt])
        else:
            x[dm.vg_slice(e)] = gn
    return x
