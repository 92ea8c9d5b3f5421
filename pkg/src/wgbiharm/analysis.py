"""Error norms, convergence studies and empirical inequality constants."""
from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field

import numpy as np

from .dofmap import DofMap
from .mesh import build_uniform_triangular
from .polyspace import (
    EdgeBasis,
    ElementBasis,
    default_degree,
    edge_quadrature,
    element_quadrature,
    embed_exact_solution,
)
from .problems import get_problem
from .system import assemble, penalty_lengths, solve
from .weaklap import apply_weak_laplacian, build_weak_laplacian

__all__ = [
    "ErrorReport",
    "ConvergenceRow",
    "ConvergenceTable",
    "InequalityEstimate",
    "triple_bar_norm",
    "l2_norm_element",
    "error_vs_projection",
    "solve_problem",
    "convergence_study",
    "observed_orders",
    "trace_quotients",
    "estimate_trace_constant",
    "estimate_inverse_constant",
    "estimate_lp_inverse",
    "estimate_domain_inverse",
]


# ---------------------------------------------------------------------------
# norms


def _check_size(dm, v):
    v = np.asarray(v, dtype=float)
    if v.shape != (dm.n_dofs,):
        raise ValueError(f"expected a vector of {dm.n_dofs} DOFs, got shape {v.shape}")
    return v


def triple_bar_norm(mesh, k, flavor, v, degree=None, stabilizer="edge"):
    """Discrete H2 norm: weak Laplacian plus both stabilizer terms.

    Every term is integrated pointwise by quadrature, independently of the
    assembled matrix.
    """
    dm = DofMap(mesh, k, flavor)
    v = _check_size(dm, v)
    deg = default_degree(k) if degree is None else degree
    total = 0.0
    for t in range(mesh.n_elements):
        local = dm.restrict(v, t)
        op = build_weak_laplacian(mesh, t, k, dm.flavor, degree=deg)
        rule = element_quadrature(mesh, t, deg)
        lap_w = op.basis.values(rule.points) @ apply_weak_laplacian(op, local)
        total += rule.weights @ lap_w**2

        basis = ElementBasis.for_element(mesh, t, k)
        v0 = local[:dm.n_v0]
        for e, h in zip(mesh.element_edges(t), penalty_lengths(mesh, t, stabilizer)):
            er = edge_quadrature(mesh, e, deg)
            vb = EdgeBasis.for_edge(mesh, e, k).evaluate(v[dm.vb_slice(e)], er.points)
            gvals = EdgeBasis.for_edge(mesh, e, k - 1).values(er.points)
            g = v[dm.vg_slice(e)]
            trace = basis.evaluate(v0, er.points)
            grad = np.einsum("pjd,j->pd", basis.gradients(er.points), v0)
            mismatch_n = grad @ mesh.edge_normals[e] - gvals @ g[:k]
            s = er.weights @ mismatch_n**2
            if dm.vector_trace:
                mismatch_t = grad @ mesh.edge_tangents[e] - gvals @ g[k:]
                s += er.weights @ mismatch_t**2
            total += s / h + er.weights @ (trace - vb) ** 2 / h**3
    return math.sqrt(max(total, 0.0))


def l2_norm_element(mesh, k, v, degree=None):
    """sqrt(sum_T int_T v0^2); only the element blocks of ``v`` are read."""
    n0 = (k + 1) * (k + 2) // 2
    v = np.asarray(v, dtype=float)
    if v.shape[0] < n0 * mesh.n_elements:
        raise ValueError("vector is too short for the element blocks")
    deg = default_degree(k) if degree is None else degree
    total = 0.0
    for t in range(mesh.n_elements):
        rule = element_quadrature(mesh, t, deg)
        vals = ElementBasis.for_element(mesh, t, k).evaluate(v[t * n0:(t + 1) * n0], rule.points)
        total += rule.weights @ vals**2
    return math.sqrt(total)


# ---------------------------------------------------------------------------
# errors and convergence


@dataclass(frozen=True)
class ErrorReport:
    h: float
    err_H2: float
    err_L2: float
    n_dofs: int = 0


def error_vs_projection(mesh, k, flavor, u_h, u, grad_u, degree=None, stabilizer="edge",
                        system=None):
    """Errors of ``u_h`` against ``Q_h u`` (discrete H2) and ``Q_0 u`` (element L2).

    When ``system`` is given its unconstrained matrix supplies the H2 norm
    (``e^T A e``); otherwise the norm is integrated directly.
    """
    dm = DofMap(mesh, k, flavor) if system is None else system.dofmap
    q = embed_exact_solution(u, grad_u, mesh, k, dm.flavor, degree=degree, dofmap=dm)
    e = _check_size(dm, u_h) - q
    if system is None:
        h2 = triple_bar_norm(mesh, k, dm.flavor, e, degree, stabilizer)
    else:
        h2 = math.sqrt(max(float(e @ (system.full_matrix @ e)), 0.0))
    l2 = l2_norm_element(mesh, k, e, degree)
    return ErrorReport(mesh.h, h2, l2, dm.n_dofs)


def solve_problem(mesh, problem, k=2, flavor="algorithm2", method="direct", tol=1e-10,
                  degree=None, stabilizer="edge", orthonormal=False):
    """Assemble and solve; returns ``(u_h, system)``."""
    problem = get_problem(problem)
    system = assemble(mesh, k, flavor, problem.f, problem.dirichlet(), problem.neumann(),
                      degree=degree, stabilizer=stabilizer, orthonormal=orthonormal)
    return solve(system, method=method, tol=tol), system


def observed_orders(hs, errs):
    """``log(e[i-1]/e[i]) / log(h[i-1]/h[i])``; the first entry is None."""
    out = [None]
    for i in range(1, len(errs)):
        if errs[i] > 0 and errs[i - 1] > 0 and hs[i] != hs[i - 1]:
            out.append(math.log(errs[i - 1] / errs[i]) / math.log(hs[i - 1] / hs[i]))
        else:
            out.append(None)
    return out


@dataclass(frozen=True)
class ConvergenceRow:
    h: float
    err_H2: float
    order_H2: float | None
    err_L2: float
    order_L2: float | None


@dataclass
class ConvergenceTable:
    rows: list = field(default_factory=list)
    title: str = ""

    @classmethod
    def from_reports(cls, reports, title="", orders=True):
        hs = [r.h for r in reports]
        h2 = [r.err_H2 for r in reports]
        l2 = [r.err_L2 for r in reports]
        if orders:
            o2, ol = observed_orders(hs, h2), observed_orders(hs, l2)
        else:
            o2 = ol = [None] * len(reports)
        rows = [ConvergenceRow(*vals) for vals in zip(hs, h2, o2, l2, ol)]
        return cls(rows, title)

    def column(self, name):
        return [getattr(r, name) for r in self.rows]

    def to_text(self):
        def order(o):
            return "" if o is None else f"{o:.4f}"

        head = f"{'h':>11}  {'|||u_h-Q_h u|||':>15}  {'order':>7}  {'||u_0-Q_0 u||':>14}  {'order':>7}"
        lines = [self.title] if self.title else []
        lines.append(head)
        for r in self.rows:
            lines.append(f"{r.h:11.4e}  {r.err_H2:15.4e}  {order(r.order_H2):>7}  "
                         f"{r.err_L2:14.4e}  {order(r.order_L2):>7}")
        return "\n".join(lines)

    def to_csv(self):
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["h", "err_h2", "order_h2", "err_l2", "order_l2"])
        for r in self.rows:
            w.writerow([f"{r.h:.4e}", f"{r.err_H2:.4e}",
                        "" if r.order_H2 is None else f"{r.order_H2:.4e}",
                        f"{r.err_L2:.4e}",
                        "" if r.order_L2 is None else f"{r.order_L2:.4e}"])
        return buf.getvalue()

    def __str__(self):
        return self.to_text()


def convergence_study(problem, k=2, flavor="algorithm2", n_list=(4, 8, 16, 32, 64),
                      meshes=None, method="direct", tol=1e-10, degree=None,
                      stabilizer="edge", callback=None, orthonormal=False):
    """Solve on a sequence of meshes and tabulate errors and observed orders.

    ``meshes`` overrides the uniform triangular meshes built from ``n_list``.
    Orders are left blank for problems whose exact solution lies in P_k,
    since the errors are then at round-off level.
    """
    problem = get_problem(problem)
    if meshes is None:
        meshes = (build_uniform_triangular(n) for n in n_list)
    reports = []
    for mesh in meshes:
        u_h, system = solve_problem(mesh, problem, k, flavor, method, tol, degree, stabilizer,
                                    orthonormal)
        rep = error_vs_projection(mesh, k, flavor, u_h, problem.u, problem.grad, degree,
                                  stabilizer, system=system)
        reports.append(rep)
        if callback is not None:
            callback(rep)
    exact = problem.polynomial_degree is not None and problem.polynomial_degree <= k
    title = f"{problem.name}: k={k}, {flavor}"
    return ConvergenceTable.from_reports(reports, title, orders=not exact)


# ---------------------------------------------------------------------------
# inequality constants


@dataclass(frozen=True)
class InequalityEstimate:
    kind: str
    value: float
    samples: int
    seed: int
    h: float = float("nan")


def _sample_coeffs(k, samples, seed):
    rng = np.random.default_rng(seed)
    return rng.uniform(-1.0, 1.0, size=((k + 1) * (k + 2) // 2, int(samples)))


def _element_grams(mesh, t, k, deg):
    rule = element_quadrature(mesh, t, deg)
    basis = ElementBasis.for_element(mesh, t, k)
    V = basis.values(rule.points)
    G = basis.gradients(rule.points)
    w = rule.weights
    M = (V * w[:, None]).T @ V
    K = np.einsum("p,pid,pjd->ij", w, G, G)
    return basis, M, K


def _quad_form(A, C):
    return np.einsum("is,ij,js->s", C, A, C)


def trace_quotients(mesh, t, e, coeffs, k):
    """``||theta||_e^2 / (h_T^-1 (||theta||_T^2 + h_T^2 ||grad theta||_T^2))`` per column of ``coeffs``."""
    deg = 2 * k + 2
    basis, M, K = _element_grams(mesh, t, k, deg)
    hT = mesh.diameters[t]
    er = edge_quadrature(mesh, e, deg)
    Ve = basis.values(er.points)
    Me = (Ve * er.weights[:, None]).T @ Ve
    C = np.asarray(coeffs, dtype=float).reshape(len(M), -1)
    num = _quad_form(Me, C)
    den = (_quad_form(M, C) + hT**2 * _quad_form(K, C)) / hT
    ok = den > 0.0
    return num[ok] / den[ok]


def estimate_trace_constant(mesh, k=2, samples=200, seed=0):
    """Sampled best constant of the L2 trace inequality over all (T, e) pairs.

    The same random coefficient vectors (in each element's scaled basis)
    are used on every element, so similar elements give identical values.
    """
    C = _sample_coeffs(k, samples, seed)
    best = 0.0
    for t in range(mesh.n_elements):
        for e in mesh.element_edges(t):
            q = trace_quotients(mesh, t, e, C, k)
            if q.size:
                best = max(best, float(q.max()))
    return InequalityEstimate("trace", best, int(samples), seed, mesh.h)


def inverse_quotients(mesh, t, coeffs, k):
    """``h_T ||grad phi||_T / ||phi||_T`` per column of ``coeffs``."""
    _, M, K = _element_grams(mesh, t, k, 2 * k + 2)
    C = np.asarray(coeffs, dtype=float).reshape(len(M), -1)
    num, den = _quad_form(K, C), _quad_form(M, C)
    ok = den > 0.0
    return mesh.diameters[t] * np.sqrt(num[ok] / den[ok])


def estimate_inverse_constant(mesh, k=2, samples=200, seed=0):
    """Sampled best constant of ``||grad phi||_T <= C h_T^-1 ||phi||_T`` on P_k(T)."""
    C = _sample_coeffs(k, samples, seed)
    best = 0.0
    for t in range(mesh.n_elements):
        q = inverse_quotients(mesh, t, C, k)
        if q.size:
            best = max(best, float(q.max()))
    return InequalityEstimate("inverse", best, int(samples), seed, mesh.h)


def _element_lp(mesh, t, k, coeffs, p, deg):
    rule = element_quadrature(mesh, t, deg)
    vals = ElementBasis.for_element(mesh, t, k).values(rule.points) @ coeffs
    return rule.weights @ np.abs(vals) ** p


def lp_quotient(mesh, k, coeffs, p=2, r=1, degree=None):
    """``||phi||_Lp / (h^(2/p - 2/r) ||phi||_Lr)`` for piecewise coefficients ``coeffs[t]``.

    ``coeffs`` maps element ids to P_k coefficient vectors; missing
    elements are zero.
    """
    deg = 4 * k + 4 if degree is None else degree
    sp_, sr = 0.0, 0.0
    for t, c in coeffs.items():
        sp_ += _element_lp(mesh, t, k, c, p, deg)
        sr += _element_lp(mesh, t, k, c, r, deg)
    if sr == 0.0:
        return float("nan")
    return sp_ ** (1.0 / p) / (mesh.h ** (2.0 / p - 2.0 / r) * sr ** (1.0 / r))


def estimate_lp_inverse(mesh, k=2, p=2, r=1, samples=200, seed=0, degree=None):
    """Sampled constant of ``||phi||_Lp <= C h^(d/p - d/r) ||phi||_Lr``.

    Half of the samples are global piecewise polynomials with independent
    random coefficients on every element; the other half are supported on a
    single element (cycling through the first few element ids), which is
    where the inequality is sharp.
    """
    if not (p >= r >= 1):
        raise ValueError(f"need p >= r >= 1, got p={p}, r={r}")
    samples = int(samples)
    deg = 4 * k + 4 if degree is None else degree
    rng = np.random.default_rng(seed)
    n0 = (k + 1) * (k + 2) // 2
    n_local = samples - samples // 2
    local = rng.uniform(-1.0, 1.0, size=(n_local, n0))
    glob = rng.uniform(-1.0, 1.0, size=(samples // 2, mesh.n_elements, n0))

    # accumulate |phi|^p and |phi|^r integrals for all samples at once
    lp_loc, lr_loc = np.zeros(n_local), np.zeros(n_local)
    lp_glob, lr_glob = np.zeros(len(glob)), np.zeros(len(glob))
    owner = np.arange(n_local) % min(2, mesh.n_elements)
    for t in range(mesh.n_elements):
        rule = element_quadrature(mesh, t, deg)
        V = ElementBasis.for_element(mesh, t, k).values(rule.points)
        w = rule.weights
        if t < 2:
            sel = owner == t
            vals = np.abs(local[sel] @ V.T)
            lp_loc[sel] += (vals**p) @ w
            lr_loc[sel] += (vals**r) @ w
        vals = np.abs(glob[:, t, :] @ V.T)
        lp_glob += (vals**p) @ w
        lr_glob += (vals**r) @ w
    num = np.concatenate([lp_loc, lp_glob]) ** (1.0 / p)
    den = mesh.h ** (2.0 / p - 2.0 / r) * np.concatenate([lr_loc, lr_glob]) ** (1.0 / r)
    ok = den > 0.0
    best = float(np.max(num[ok] / den[ok]))
    return InequalityEstimate(f"lp-inverse(p={p},r={r})", best, samples, seed, mesh.h)


def _disk_rule(center, radius, degree):
    from scipy.special import roots_jacobi

    n_r = degree // 2 + 1
    tr, wr = roots_jacobi(n_r, 0.0, 1.0)
    rho = 0.5 * (1.0 + tr) * radius
    wrho = wr * radius**2 / 4.0
    n_a = degree + 1
    ang = 2.0 * np.pi * np.arange(n_a) / n_a
    R, A = np.meshgrid(rho, ang, indexing="ij")
    pts = np.column_stack([(R * np.cos(A)).ravel(), (R * np.sin(A)).ravel()]) + center
    w = np.outer(wrho, np.full(n_a, 2.0 * np.pi / n_a)).ravel()
    return pts, w


def _triangle_rule(tri, degree):
    from .polyspace import triangle_rule

    ref, w = triangle_rule(degree)
    a = tri[0]
    J = np.column_stack([tri[1] - a, tri[2] - a])
    return a + ref @ J.T, w * abs(np.linalg.det(J))


def domain_inverse_quotients(simplex, center, radius, coeffs, k):
    """``||v||_K / ||v||_S`` for P_k polynomials in the scaled basis of ``K``."""
    tri = np.asarray(simplex, dtype=float).reshape(3, 2)
    center = np.asarray(center, dtype=float)
    signed = 0.5 * ((tri[1, 0] - tri[0, 0]) * (tri[2, 1] - tri[0, 1])
                    - (tri[2, 0] - tri[0, 0]) * (tri[1, 1] - tri[0, 1]))
    if signed < 0:
        tri = tri[::-1]
    for i in range(3):
        a, b = tri[i], tri[(i + 1) % 3]
        d = b - a
        inward = np.array([-d[1], d[0]]) / np.hypot(*d)
        if (center - a) @ inward < radius * (1.0 - 1e-12):
            raise ValueError("the ball is not contained in the simplex")
    hK = max(np.hypot(*(tri[i] - tri[j])) for i in range(3) for j in range(3))
    basis = ElementBasis(tri.mean(axis=0), hK, k)
    deg = 2 * k + 2
    pk, wk = _triangle_rule(tri, deg)
    ps, ws = _disk_rule(center, radius, deg)
    C = np.asarray(coeffs, dtype=float).reshape(basis.dim, -1)
    nk = wk @ (basis.values(pk) @ C) ** 2
    ns = ws @ (basis.values(ps) @ C) ** 2
    ok = ns > 0.0
    return np.sqrt(nk[ok] / ns[ok])


def estimate_domain_inverse(simplex, center, radius, k=2, samples=200, seed=0):
    """Sampled constant of ``||v||_K <= C ||v||_S`` for a ball ``S`` inside a triangle ``K``."""
    C = _sample_coeffs(k, samples, seed)
    q = domain_inverse_quotients(simplex, center, radius, C, k)
    return InequalityEstimate("domain-inverse", float(q.max()), int(samples), seed)
