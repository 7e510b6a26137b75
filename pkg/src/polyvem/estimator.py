"""scikit-learn style wrapper: ``fit`` solves on a mesh, ``predict`` evaluates the solution."""
from __future__ import annotations

import numpy as np
from scipy.spatial import cKDTree
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_array, check_is_fitted

from .assembly import Discretization
from .mesh import PolyMesh
from .polyquad import MonomialBasis
from .problems import ProblemSpec, get_problem
from .solver import fixed_point_solve, newton_solve


class VirtualElementSolver(BaseEstimator):
    """Solve -div(kappa(u) grad u) = f on a polygonal mesh.

    Parameters
    ----------
    degree : int
        Polynomial order k.
    solver : {"fp", "newton"}
        Nonlinear iteration.
    tol : float
        Relative increment tolerance.
    max_iter : int
        Nonlinear iteration cap.
    problem : str or ProblemSpec
        Problem name (``paper``, ``linear``, ``patch:<d>``) or an instance.

    Attributes
    ----------
    solution_ : ndarray
        Global DoF vector.
    report_ : SolveReport
    n_iter_ : int
    """

    def __init__(self, degree=1, solver="fp", tol=1e-10, max_iter=50, problem="paper"):
        self.degree = degree
        self.solver = solver
        self.tol = tol
        self.max_iter = max_iter
        self.problem = problem

    def _problem(self) -> ProblemSpec:
        return self.problem if isinstance(self.problem, ProblemSpec) else get_problem(self.problem)

    def fit(self, mesh: PolyMesh, y=None):
        if not isinstance(mesh, PolyMesh):
            raise TypeError("fit expects a PolyMesh")
        if int(self.degree) < 1:
            raise ValueError("degree must be at least 1")
        if self.solver not in ("fp", "newton"):
            raise ValueError(f"unknown solver {self.solver!r}")
        disc = Discretization(mesh, int(self.degree))
        run = fixed_point_solve if self.solver == "fp" else newton_solve
        report = run(disc, self._problem(), self.tol, self.max_iter)
        self.discretization_ = disc
        self.report_ = report
        self.solution_ = report.solution
        self.n_iter_ = report.nonlinear_iterations
        self._coeffs = [None] * mesh.n_cells
        for ps in disc.stacks:
            z = self.solution_[np.array([disc.dofmap.cell_dofs[c] for c in ps.cells])]
            for j, c in enumerate(ps.cells):
                self._coeffs[c] = ps.pizero[j] @ z[j]
        self._tree = cKDTree(np.array([g.centroid for g in disc.geometries]))
        return self

    def locate(self, X) -> np.ndarray:
        """Index of a cell containing each point, -1 outside the mesh."""
        check_is_fitted(self, "solution_")
        X = check_array(X, dtype=float)
        if X.shape[1] != 2:
            raise ValueError("points must have two coordinates")
        geoms = self.discretization_.geometries
        n_near = min(16, len(geoms))
        _, cand = self._tree.query(X, k=n_near)
        cand = np.atleast_2d(cand).reshape(len(X), -1)
        out = np.full(len(X), -1, dtype=np.int64)
        for i, (pt, cs) in enumerate(zip(X, cand)):
            for c in cs:
                if _inside(geoms[c].vertices, pt):
                    out[i] = c
                    break
        return out

    def predict(self, X) -> np.ndarray:
        """Values of the L2 projection of the discrete solution at points ``X``."""
        X = check_array(X, dtype=float)
        cells = self.locate(X)
        if np.any(cells < 0):
            raise ValueError("some points lie outside the mesh")
        out = np.empty(len(X))
        for i, (pt, c) in enumerate(zip(X, cells)):
            g = self.discretization_.geometries[c]
            basis = MonomialBasis(int(self.degree), g.centroid, g.diameter)
            out[i] = basis.eval(pt[None])[0] @ self._coeffs[c]
        return out


def _inside(poly: np.ndarray, pt: np.ndarray, eps: float = 1e-12) -> bool:
    """Winding test with a tolerance so points on edges count as inside."""
    q = np.roll(poly, -1, axis=0)
    cr = (q[:, 0] - poly[:, 0]) * (pt[1] - poly[:, 1]) - (q[:, 1] - poly[:, 1]) * (pt[0] - poly[:, 0])
    scale = eps * max(1.0, float(np.abs(poly).max()))
    if np.all(cr >= -scale):
        return True
    up = (poly[:, 1] <= pt[1]) & (q[:, 1] > pt[1])
    down = (poly[:, 1] > pt[1]) & (q[:, 1] <= pt[1])
    wn = np.sum(up & (cr > 0)) - np.sum(down & (cr < 0))
    return bool(wn != 0)
