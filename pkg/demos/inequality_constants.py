"""Empirical constants of the trace, inverse and Lp-inverse inequalities.

Run:  python3 demos/inequality_constants.py

On uniform meshes every element is a scaled copy of the same triangle, so
the estimated constants do not move with n.  On Voronoi meshes they vary
with the cell shapes but stay bounded.
"""
from wgbiharm import (
    build_polygonal,
    build_uniform_triangular,
    estimate_inverse_constant,
    estimate_lp_inverse,
    estimate_trace_constant,
)


def row(label, mesh):
    c_t = estimate_trace_constant(mesh, 2).value
    c_i = estimate_inverse_constant(mesh, 2).value
    c_p = estimate_lp_inverse(mesh, 2, p=2, r=1).value
    print(f"{label:>16}  {c_t:10.4f}  {c_i:10.4f}  {c_p:10.4f}")


def main():
    print(f"{'mesh':>16}  {'trace':>10}  {'inverse':>10}  {'Lp-inverse':>10}")
    for n in (2, 4, 8, 16):
        row(f"uniform n={n}", build_uniform_triangular(n))
    for s in (16, 64, 256):
        row(f"voronoi {s}", build_polygonal(s, lloyd_iters=3, rng_seed=1))


if __name__ == "__main__":
    main()
