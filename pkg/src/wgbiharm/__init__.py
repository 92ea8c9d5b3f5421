"""Weak Galerkin finite elements for the biharmonic equation on polygonal meshes."""
from .analysis import (
    ConvergenceTable,
    ErrorReport,
    InequalityEstimate,
    convergence_study,
    error_vs_projection,
    estimate_domain_inverse,
    estimate_inverse_constant,
    estimate_lp_inverse,
    estimate_trace_constant,
    l2_norm_element,
    observed_orders,
    solve_problem,
    triple_bar_norm,
)
from .dofmap import FLAVORS, DofMap
from .mesh import (
    Mesh,
    MeshError,
    RegularityReport,
    build_polygonal,
    build_uniform_triangular,
    check_shape_regularity,
    load_mesh,
    save_mesh,
)
from .polyspace import ElementBasis, EdgeBasis, embed_exact_solution
from .problems import Problem, case1, case2, get_problem, polynomial_problem
from .system import SparseSystem, assemble, solve, write_matrix_market
from .weaklap import build_weak_laplacian, verify_commutativity

__version__ = "0.1.0"
