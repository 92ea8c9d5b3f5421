"""Command-line interface.

Subcommands: ``solve``, ``convergence``, ``mesh-check`` and ``ineq-check``.
Every flag can also be given in a ``--config`` file of ``key = value``
lines (keys are flag names without the leading dashes); flags on the
command line win.

Exit codes: 0 success, 1 failed check or numerical failure, 2 usage error.
"""
from __future__ import annotations

import argparse
import logging
import math
import sys
from pathlib import Path

import numpy as np

from .analysis import (
    ConvergenceTable,
    convergence_study,
    error_vs_projection,
    estimate_domain_inverse,
    estimate_inverse_constant,
    estimate_lp_inverse,
    estimate_trace_constant,
    solve_problem,
)
from .dofmap import FLAVORS, normalize_flavor
from .mesh import (
    MeshError,
    build_polygonal,
    build_uniform_triangular,
    check_shape_regularity,
    load_mesh,
    save_mesh,
)
from .polyspace import ElementBasis
from .problems import get_problem
from .system import ConvergenceError, FactorizationError, write_matrix_market

__all__ = ["main", "build_parser", "read_config", "UsageError"]

log = logging.getLogger("wgbiharm")

K_CAP = 4
COMMANDS = ("solve", "convergence", "mesh-check", "ineq-check")


class UsageError(ValueError):
    pass


# ---------------------------------------------------------------------------
# argument handling


def _int_list(text):
    try:
        vals = [int(v) for v in str(text).replace(" ", "").split(",") if v]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}")
    if not vals or min(vals) < 1:
        raise argparse.ArgumentTypeError(f"expected positive integers, got {text!r}")
    return vals


def _flavor(text):
    try:
        return normalize_flavor(text)
    except ValueError as exc:
        raise argparse.ArgumentTypeError(str(exc))


def _common(p, default_mesh):
    p.add_argument("--config", type=Path, help="key = value file mirroring the flags")
    p.add_argument("--quiet", action="store_true", help="suppress tables; files are still written")
    p.add_argument("--verbose", action="store_true", help="debug logging to stderr")
    g = p.add_argument_group("mesh")
    g.add_argument("--uniform", "--n", dest="uniform", type=_int_list, default=None,
                   help=f"uniform triangular meshes, n subdivisions per side (default {default_mesh})")
    g.add_argument("--polygonal", type=_int_list, default=None,
                   help="Voronoi meshes with this many seeds")
    g.add_argument("--lloyd", type=int, default=3, help="Lloyd iterations for --polygonal")
    g.add_argument("--mesh", type=Path, nargs="+", default=None, help="mesh files")
    g.add_argument("--seed", type=int, default=0, help="rng seed for meshes and sampling")
    g.add_argument("--save-mesh", type=Path, default=None,
                   help="write the (last) mesh in the polymesh text format")
    p.set_defaults(default_mesh=default_mesh)


def _discretization(p):
    g = p.add_argument_group("discretization")
    g.add_argument("--case", default="case1", help="case1, case2 or a problem file")
    g.add_argument("--k", type=int, default=2, help="polynomial degree (>= 2)")
    g.add_argument("--flavor", type=_flavor, default="algorithm2",
                   help=f"one of {', '.join(FLAVORS)}")
    g.add_argument("--orthonormal", action="store_true",
                   help=f"orthonormal test basis; lifts the k <= {K_CAP} cap")
    g.add_argument("--solver", choices=("direct", "cg"), default="direct")
    g.add_argument("--tol", type=float, default=1e-10, help="relative residual tolerance")
    g.add_argument("--degree", type=int, default=None,
                   help="quadrature exactness on elements and edges (default 2k+2)")
    g.add_argument("--stabilizer", choices=("edge", "element"), default="edge",
                   help="length scale in the stabilizer weights")
    g.add_argument("--csv", type=Path, default=None, help="write results as CSV")


def build_parser():
    parser = argparse.ArgumentParser(
        prog="wgbiharm", description="Weak Galerkin solver for the biharmonic equation.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("solve", help="solve once and report the errors")
    _common(p, [4])
    _discretization(p)
    p.add_argument("--field", type=Path, default=None, help="raster export of v0 as x,y,u CSV")
    p.add_argument("--matrix", type=Path, default=None, help="MatrixMarket dump of the reduced matrix")

    p = sub.add_parser("convergence", help="errors and observed orders over a mesh sequence")
    _common(p, [4, 8, 16, 32, 64])
    _discretization(p)

    p = sub.add_parser("mesh-check", help="shape-regularity constants")
    _common(p, [8])
    p.add_argument("--rho-min", type=float, default=0.05, help="floor for area / h_T^2")
    p.add_argument("--kappa-min", type=float, default=0.0, help="floor for h_e / h_T")
    p.add_argument("--sigma-min", type=float, default=0.05,
                   help="floor for the inscribed-triangle height / h_T")
    p.add_argument("--area-min", type=float, default=0.0, help="floor for element area")
    p.add_argument("--csv", type=Path, default=None)

    p = sub.add_parser("ineq-check", help="sampled constants of the trace and inverse inequalities")
    _common(p, [2, 4, 8])
    p.add_argument("--trace", action="store_true")
    p.add_argument("--inverse", action="store_true")
    p.add_argument("--lp", action="store_true")
    p.add_argument("--domain", action="store_true")
    p.add_argument("--k", type=int, default=2)
    p.add_argument("--samples", type=int, default=200)
    p.add_argument("--p", type=float, default=2.0)
    p.add_argument("--r", type=float, default=1.0)
    p.add_argument("--max-spread", type=float, default=3.0,
                   help="fail if max/min over meshes exceeds this")
    p.add_argument("--csv", type=Path, default=None)
    return parser


def read_config(path):
    """Turn a ``key = value`` file into command-line tokens."""
    tokens = []
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise UsageError(f"cannot read config {path}: {exc}") from None
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        if not sep:
            raise UsageError(f"{path}:{lineno}: expected 'key = value'")
        flag = "--" + key.strip().replace("_", "-")
        value = value.strip()
        low = value.lower()
        if low in ("true", "yes", "on"):
            tokens.append(flag)
        elif low in ("false", "no", "off"):
            continue
        else:
            tokens.extend([flag, *value.split()])
    return tokens


def _parse(argv):
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.config is not None:
        # config tokens go right after the subcommand so explicit flags override them
        pos = argv.index(args.command) + 1
        args = parser.parse_args(argv[:pos] + read_config(args.config) + argv[pos:])
    return args


def _validate(args):
    k = getattr(args, "k", 2)
    if k < 2:
        raise UsageError("--k must be >= 2")
    if k > K_CAP and not getattr(args, "orthonormal", True):
        raise UsageError(f"--k {k} exceeds the cap of {K_CAP}; pass --orthonormal to allow it")
    tol = getattr(args, "tol", 0.5)
    if not 0.0 < tol < 1.0:
        raise UsageError("--tol must lie in (0, 1)")
    if args.lloyd < 0:
        raise UsageError("--lloyd must be >= 0")
    if sum(x is not None for x in (args.uniform, args.polygonal, args.mesh)) > 1:
        raise UsageError("give at most one of --uniform/--n, --polygonal, --mesh")


def _meshes(args):
    """List of ``(label, mesh)`` pairs from the mesh options."""
    if args.mesh is not None:
        out = []
        for path in args.mesh:
            try:
                out.append((str(path), load_mesh(path)))
            except OSError as exc:
                raise UsageError(f"cannot read mesh {path}: {exc}") from None
        return out
    if args.polygonal is not None:
        return [(f"voronoi {s}", build_polygonal(s, lloyd_iters=args.lloyd, rng_seed=args.seed))
                for s in args.polygonal]
    ns = args.uniform if args.uniform is not None else args.default_mesh
    return [(f"uniform {n}", build_uniform_triangular(n)) for n in ns]


def _emit(args, text):
    if not args.quiet:
        print(text)


# ---------------------------------------------------------------------------
# field export


def _points_in_polygon(pts, xy):
    inside = np.zeros(len(pts), dtype=bool)
    x, y = pts[:, 0], pts[:, 1]
    for (x0, y0), (x1, y1) in zip(xy, np.roll(xy, -1, axis=0)):
        crosses = (y0 > y) != (y1 > y)
        with np.errstate(divide="ignore", invalid="ignore"):
            xc = x0 + (y - y0) * (x1 - x0) / (y1 - y0)
        inside ^= crosses & (xc > x)
    return inside


def sample_field(mesh, k, u_h, per_edge=3):
    """Sample ``v0`` on a regular grid with spacing ``median edge length / per_edge``.

    Returns ``(points, values)``; a grid point on a shared edge takes the
    value of the lowest-numbered element containing it.
    """
    step = float(np.median(mesh.edge_lengths)) / per_edge
    lo, hi = mesh.vertices.min(axis=0), mesh.vertices.max(axis=0)
    nx, ny = (int(round(s / step)) + 1 for s in hi - lo)
    X, Y = np.meshgrid(np.linspace(lo[0], hi[0], nx), np.linspace(lo[1], hi[1], ny))
    pts = np.column_stack([X.ravel(), Y.ravel()])
    # nudge inwards so points on the domain boundary land in some element
    probe = pts + 1e-12 * (mesh.centroids.mean(axis=0) - pts)
    vals = np.full(len(pts), np.nan)
    n0 = (k + 1) * (k + 2) // 2
    for t in range(mesh.n_elements):
        xy = mesh.element_vertices(t)
        box = np.all((probe >= xy.min(axis=0)) & (probe <= xy.max(axis=0)), axis=1)
        cand = np.flatnonzero(box & np.isnan(vals))
        if cand.size == 0:
            continue
        hit = cand[_points_in_polygon(probe[cand], xy)]
        if hit.size:
            basis = ElementBasis.for_element(mesh, t, k)
            vals[hit] = basis.evaluate(u_h[t * n0:(t + 1) * n0], pts[hit])
    keep = ~np.isnan(vals)
    return pts[keep], vals[keep]


def _write_field(path, pts, vals):
    with open(path, "w") as fh:
        fh.write("x,y,u\n")
        for (x, y), v in zip(pts, vals):
            fh.write(f"{x:.10e},{y:.10e},{v:.10e}\n")


# ---------------------------------------------------------------------------
# subcommands


def cmd_solve(args):
    problem = get_problem(args.case)
    reports = []
    for label, mesh in _meshes(args):
        u_h, system = solve_problem(mesh, problem, args.k, args.flavor, args.solver, args.tol,
                                    args.degree, args.stabilizer, args.orthonormal)
        rep = error_vs_projection(mesh, args.k, args.flavor, u_h, problem.u, problem.grad,
                                  args.degree, args.stabilizer, system=system)
        reports.append(rep)
        _emit(args, f"{problem.name} on {label}: k={args.k}, {args.flavor}, "
                    f"{rep.n_dofs} DOFs ({system.n_free} free)\n"
                    f"  h      = {rep.h:.4e}\n"
                    f"  err_H2 = {rep.err_H2:.4e}\n"
                    f"  err_L2 = {rep.err_L2:.4e}")
        if args.matrix is not None:
            write_matrix_market(system, args.matrix)
        if args.field is not None:
            _write_field(args.field, *sample_field(mesh, args.k, u_h))
        if args.save_mesh is not None:
            save_mesh(mesh, args.save_mesh)
    if args.csv is not None:
        table = ConvergenceTable.from_reports(reports, orders=False)
        args.csv.write_text(table.to_csv())
    return 0


def cmd_convergence(args):
    problem = get_problem(args.case)
    meshes = _meshes(args)

    def progress(rep):
        log.info("h=%.4e  err_H2=%.4e  err_L2=%.4e  (%d DOFs)",
                 rep.h, rep.err_H2, rep.err_L2, rep.n_dofs)

    table = convergence_study(problem, args.k, args.flavor, meshes=[m for _, m in meshes],
                              method=args.solver, tol=args.tol, degree=args.degree,
                              stabilizer=args.stabilizer, callback=progress,
                              orthonormal=args.orthonormal)
    if args.save_mesh is not None:
        save_mesh(meshes[-1][1], args.save_mesh)
    _emit(args, table.to_text())
    if args.csv is not None:
        args.csv.write_text(table.to_csv())
    return 0


def cmd_mesh_check(args):
    floors = {"rho_v": args.rho_min, "kappa": args.kappa_min,
              "sigma_star": args.sigma_min, "min_area": args.area_min}
    rows, failed = [], []
    meshes = _meshes(args)
    for label, mesh in meshes:
        rep = check_shape_regularity(mesh, sigma_star=args.sigma_min).as_dict()
        rows.append((label, mesh.n_elements, rep))
        for key, floor in floors.items():
            if rep[key] < floor:
                failed.append(f"{label}: {key} = {rep[key]:.4e} below floor {floor:.4e}")
    if args.save_mesh is not None:
        save_mesh(meshes[-1][1], args.save_mesh)

    head = f"{'mesh':<16} {'cells':>7} {'rho_v':>11} {'rho_e':>11} {'kappa':>11} {'sigma*':>11} {'min area':>11}"
    lines = [head]
    for label, nt, r in rows:
        lines.append(f"{label:<16} {nt:>7d} {r['rho_v']:11.4e} {r['rho_e']:11.4e} "
                     f"{r['kappa']:11.4e} {r['sigma_star']:11.4e} {r['min_area']:11.4e}")
    _emit(args, "\n".join(lines))
    if args.csv is not None:
        out = ["mesh,cells,rho_v,rho_e,kappa,sigma_star,min_area"]
        out += [f"{label},{nt},{r['rho_v']:.6e},{r['rho_e']:.6e},{r['kappa']:.6e},"
                f"{r['sigma_star']:.6e},{r['min_area']:.6e}" for label, nt, r in rows]
        args.csv.write_text("\n".join(out) + "\n")
    for msg in failed:
        print(f"check failed: {msg}", file=sys.stderr)
    return 1 if failed else 0


def _domain_pair(h):
    # unit right triangle scaled by h, with a ball of half the inradius at the incentre
    K = h * np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]])
    r_in = h * (2.0 - math.sqrt(2.0)) / 2.0
    return K, np.array([r_in, r_in]), 0.5 * r_in


def cmd_ineq_check(args):
    if not (args.p >= args.r >= 1):
        raise UsageError("need --p >= --r >= 1")
    if args.samples < 1:
        raise UsageError("--samples must be >= 1")
    kinds = [name for name in ("trace", "inverse", "lp", "domain") if getattr(args, name)]
    kinds = kinds or ["trace", "inverse", "lp", "domain"]
    results = {kind: [] for kind in kinds}
    for label, mesh in _meshes(args):
        opts = dict(samples=args.samples, seed=args.seed)
        for kind in kinds:
            if kind == "trace":
                est = estimate_trace_constant(mesh, args.k, **opts)
            elif kind == "inverse":
                est = estimate_inverse_constant(mesh, args.k, **opts)
            elif kind == "lp":
                est = estimate_lp_inverse(mesh, args.k, args.p, args.r, **opts)
            else:
                est = estimate_domain_inverse(*_domain_pair(mesh.h), k=args.k, **opts)
            results[kind].append((label, mesh.h, est.value))

    lines = [f"{'inequality':<12} {'mesh':<16} {'h':>11} {'constant':>22}"]
    csv_rows = ["inequality,mesh,h,constant"]
    failed = []
    for kind, rows in results.items():
        for label, h, val in rows:
            lines.append(f"{kind:<12} {label:<16} {h:11.4e} {val:22.15e}")
            csv_rows.append(f"{kind},{label},{h:.6e},{val:.15e}")
        vals = [v for _, _, v in rows]
        spread = max(vals) / min(vals) if min(vals) > 0 else math.inf
        lines.append(f"{kind:<12} {'max/min':<16} {'':>11} {spread:22.15e}")
        if not all(map(math.isfinite, vals)) or spread > args.max_spread:
            failed.append(f"{kind}: max/min = {spread:.4e} exceeds {args.max_spread}")
    _emit(args, "\n".join(lines))
    if args.csv is not None:
        args.csv.write_text("\n".join(csv_rows) + "\n")
    for msg in failed:
        print(f"check failed: {msg}", file=sys.stderr)
    return 1 if failed else 0


_HANDLERS = {
    "solve": cmd_solve,
    "convergence": cmd_convergence,
    "mesh-check": cmd_mesh_check,
    "ineq-check": cmd_ineq_check,
}


def main(argv=None):
    argv = list(sys.argv[1:] if argv is None else argv)
    try:
        args = _parse(argv)
    except SystemExit as exc:  # argparse: --help exits 0, errors exit 2
        return int(exc.code or 0)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(name)s: %(message)s")
    try:
        _validate(args)
        return _HANDLERS[args.command](args)
    except (FactorizationError, ConvergenceError, np.linalg.LinAlgError) as exc:
        # LinAlgError subclasses ValueError, so it must be caught first
        print(f"failed: {exc}", file=sys.stderr)
        return 1
    except (UsageError, MeshError, ValueError) as exc:
        # MeshError and ValueError cover bad mesh files and unknown problems
        print(f"error: {exc}", file=sys.stderr)
        return 2

if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
