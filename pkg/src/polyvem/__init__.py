"""Conforming virtual element method of arbitrary order for quasilinear elliptic problems."""
from .assembly import (AssemblyError, Discretization, assemble_global, local_load,
                       local_newton, local_stiffness)
from .convergence import (ConvergenceRecord, StudyConfig, compute_errors, eoc,
                          run_convergence, write_csv)
from .estimator import VirtualElementSolver
from .mesh import (ElementGeometry, MeshError, PolyMesh, RegularityReport, build_mesh,
                   element_geometry, generate, read_mesh, regularity_report, write_mesh)
from .polyquad import (MonomialBasis, QuadRule, eval_basis, eval_grad, integrate_edge,
                       integrate_element, mass_matrix)
from .problems import (ProblemSpec, exact_norms, get_problem, paper_problem,
                       poisson_patch_problem)
from .solver import (BreakdownError, LinearSolverError, SolveReport, bicgstab_solve,
                     cg_solve, fixed_point_solve, newton_solve)
from .vemspace import (DofMap, ElementProjectors, ProjectorError, build_dofmap,
                       compute_projectors, interpolate, interpolate_global)

__all__ = [name for name in dir() if not name.startswith("_")]
__version__ = "0.1.0"
