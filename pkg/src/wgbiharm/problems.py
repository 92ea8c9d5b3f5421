"""Manufactured solutions for the biharmonic problem on (0,1)^2."""
from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Optional

import numpy as np

__all__ = [
    "Problem",
    "case1",
    "case2",
    "polynomial_problem",
    "problem_from_expression",
    "load_problem",
    "get_problem",
    "BUILTIN_PROBLEMS",
]


@dataclass(frozen=True)
class Problem:
    """Exact solution and the data it induces.

    ``u``, ``lap``, ``f`` and ``zeta`` are called as ``fn(x, y)``; ``grad``
    returns ``(ux, uy)``; ``phi`` is called as ``phi(x, y, nx, ny)``.
    Missing ``zeta``/``phi`` default to the traces of ``u``.
    """

    name: str
    u: Callable
    grad: Callable
    lap: Callable
    f: Callable
    zeta: Optional[Callable] = None
    phi: Optional[Callable] = None
    polynomial_degree: Optional[int] = None

    def dirichlet(self):
        return self.u if self.zeta is None else self.zeta

    def neumann(self):
        if self.phi is not None:
            return self.phi
        grad = self.grad

        def phi(x, y, nx, ny):
            gx, gy = grad(x, y)
            return gx * nx + gy * ny

        return phi


# u = X(x) X(y) with X(s) = s^2 (1-s)^2


def _X(s):
    return s**2 * (1.0 - s) ** 2


def _dX(s):
    return 2.0 * s - 6.0 * s**2 + 4.0 * s**3


def _d2X(s):
    return 2.0 - 12.0 * s + 12.0 * s**2


def case1():
    """``u = x^2 (1-x)^2 y^2 (1-y)^2`` with homogeneous boundary data."""
    zero = lambda x, y: np.zeros_like(np.asarray(x, dtype=float))  # noqa: E731
    return Problem(
        name="case1",
        u=lambda x, y: _X(x) * _X(y),
        grad=lambda x, y: (_dX(x) * _X(y), _X(x) * _dX(y)),
        lap=lambda x, y: _d2X(x) * _X(y) + _X(x) * _d2X(y),
        # X'''' = 24, so lap^2 u = 24 X(y) + 2 X''(x) X''(y) + 24 X(x)
        f=lambda x, y: 24.0 * (_X(x) + _X(y)) + 2.0 * _d2X(x) * _d2X(y),
        zeta=zero,
        phi=lambda x, y, nx, ny: zero(x, y),
    )


def case2():
    """``u = sin(pi x) sin(pi y)``: zero Dirichlet data, nonzero normal derivative."""
    pi = np.pi
    u = lambda x, y: np.sin(pi * x) * np.sin(pi * y)  # noqa: E731
    return Problem(
        name="case2",
        u=u,
        grad=lambda x, y: (pi * np.cos(pi * x) * np.sin(pi * y),
                           pi * np.sin(pi * x) * np.cos(pi * y)),
        lap=lambda x, y: -2.0 * pi**2 * u(x, y),
        f=lambda x, y: 4.0 * pi**4 * u(x, y),
    )


BUILTIN_PROBLEMS = {"case1": case1, "case2": case2}


def polynomial_problem(coeffs, name="polynomial"):
    """Problem with ``u(x, y) = sum coeffs[i, j] x**i y**j``."""
    c = np.atleast_2d(np.asarray(coeffs, dtype=float))
    terms = [f"({float(c[i, j])!r})*x**{i}*y**{j}" for i, j in np.argwhere(c != 0)]
    return problem_from_expression(" + ".join(terms) or "0", name=name)


def problem_from_expression(expr, name=None):
    """Build a problem from a sympy-parsable expression in ``x`` and ``y``.

    Derivatives and the load are derived symbolically.
    """
    import sympy as sp

    x, y = sp.symbols("x y")
    u = sp.sympify(expr, locals={"x": x, "y": y, "pi": sp.pi})
    ux, uy = sp.diff(u, x), sp.diff(u, y)
    lap = sp.diff(u, x, 2) + sp.diff(u, y, 2)
    bilap = sp.simplify(sp.diff(lap, x, 2) + sp.diff(lap, y, 2))

    def fn(e):
        g = sp.lambdify((x, y), e, "numpy")
        return lambda X, Y: np.broadcast_to(g(X, Y), np.shape(X)).astype(float)

    gx, gy = fn(ux), fn(uy)
    poly_deg = None
    if u.is_polynomial(x, y):
        poly_deg = int(sp.Poly(u, x, y).total_degree()) if u != 0 else 0
    return Problem(
        name=name or str(expr),
        u=fn(u),
        grad=lambda X, Y: (gx(X, Y), gy(X, Y)),
        lap=fn(lap),
        f=fn(bilap),
        polynomial_degree=poly_deg,
    )


def load_problem(path):
    """Read ``u = <expression>`` (and optional ``name = ...``) from a text file."""
    fields = {}
    for raw in Path(path).read_text().splitlines():
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        if not sep:
            raise ValueError(f"{path}: expected 'key = value', got {raw!r}")
        fields[key.strip()] = value.strip()
    if "u" not in fields:
        raise ValueError(f"{path}: missing 'u = <expression>'")
    return problem_from_expression(fields["u"], name=fields.get("name", Path(path).stem))


def get_problem(spec):
    """Resolve a built-in name or a problem file path."""
    if isinstance(spec, Problem):
        return spec
    if spec in BUILTIN_PROBLEMS:
        return BUILTIN_PROBLEMS[spec]()
    if Path(spec).is_file():
        return load_problem(spec)
    raise ValueError(f"unknown problem {spec!r}; expected one of {sorted(BUILTIN_PROBLEMS)} "
                     "or a problem file")
