"""Projection-based errors, empirical orders and the refinement study driver."""
from __future__ import annotations

import csv
import logging
import math
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from .assembly import Discretization, dump_coo
from .mesh import generate, read_mesh
from .problems import ProblemSpec, exact_norms, get_problem
from .solver import NonlinearSolverError, fixed_point_solve, newton_solve
from .vemspace import dump_projectors

logger = logging.getLogger(__name__)

CSV_HEADER = ["level", "ndof", "h", "err_l2_rel", "err_h1_rel",
              "eoc_l2", "eoc_h1", "fp_iters", "nr_iters"]


def compute_errors(disc: Discretization, u_h, problem: ProblemSpec,
                   relative: bool = True) -> tuple[float, float]:
    """L2 error of pizero_k u_h and of pizero_{k-1} grad u_h against the exact solution."""
    if not problem.has_exact:
        raise ValueError(f"problem {problem.name!r} has no exact solution")
    u_h = np.asarray(u_h, dtype=float)
    if u_h.shape != (disc.n_dofs,):
        raise ValueError("dimension mismatch")
    e0 = e1 = 0.0
    for b in disc.batches:
        z = u_h[b.dofs]
        x, y = b.points[..., 0], b.points[..., 1]
        uq = np.einsum("eqn,en->eq", b.value, z)
        gq = np.einsum("edqn,en->eqd", b.grad, z)
        e0 += float(np.sum(b.weights * (problem.exact_u(x, y) - uq) ** 2))
        e1 += float(np.sum(b.weights * np.sum((problem.exact_grad_u(x, y) - gq) ** 2, axis=-1)))
    e0, e1 = math.sqrt(e0), math.sqrt(e1)
    if relative:
        n0, n1 = exact_norms(problem)
        e0 = e0 / n0 if n0 > 0 else e0
        e1 = e1 / n1 if n1 > 0 else e1
    return e0, e1


def eoc(prev, curr) -> float:
    """Order from two ``(error, ndof)`` pairs: log(e0/e1) / log(sqrt(n1/n0))."""
    (e0, n0), (e1, n1) = prev, curr
    if e0 <= 0 or e1 <= 0:
        raise ValueError("errors must be positive")
    if n1 <= n0:
        raise ValueError("DoF counts must increase")
    return math.log(e0 / e1) / math.log(math.sqrt(n1 / n0))


@dataclass
class ConvergenceRecord:
    level: int
    ndof: int
    h: float
    err_l2_rel: float
    err_h1_rel: float
    eoc_l2: Optional[float] = None
    eoc_h1: Optional[float] = None
    fp_iters: Optional[int] = None
    nr_iters: Optional[int] = None
    reports: dict = field(default_factory=dict, repr=False, compare=False)
    seconds: float = field(default=0.0, repr=False, compare=False)

    def row(self) -> list[str]:
        def num(v, fmt):
            return "" if v is None else format(v, fmt)
        return [str(self.level), str(self.ndof), num(self.h, ".6e"),
                num(self.err_l2_rel, ".6e"), num(self.err_h1_rel, ".6e"),
                num(self.eoc_l2, ".4f"), num(self.eoc_h1, ".4f"),
                num(self.fp_iters, "d"), num(self.nr_iters, "d")]


@dataclass
class StudyConfig:
    mesh: str = "voronoi"
    n0: int = 8
    levels: int = 5
    degree: int = 1
    solver: str = "both"
    tol: float = 1e-10
    max_iter: int = 50
    seed: int = 0
    problem: str = "paper"
    out: Optional[str] = None
    dump_matrices: Optional[str] = None
    absolute_errors: bool = False


class NonConvergenceError(RuntimeError):
    def __init__(self, msg, records):
        super().__init__(msg)
        self.records = records


def _mesh_for(config: StudyConfig, n: int):
    if config.mesh.startswith("file="):
        return read_mesh(config.mesh[5:])
    return generate(config.mesh, n, config.seed)


def run_convergence(config: StudyConfig, raise_on_failure: bool = True) -> list[ConvergenceRecord]:
    """Solve on a sequence of meshes with n = n0, 2 n0, 4 n0, ... and tabulate errors."""
    if config.levels < 2 and not config.mesh.startswith("file="):
        raise ValueError("levels must be at least 2")
    if config.n0 < 1:
        raise ValueError("n0 must be at least 1")
    if config.solver not in ("fp", "newton", "both"):
        raise ValueError(f"unknown solver {config.solver!r}")
    problem = get_problem(config.problem)
    levels = 1 if config.mesh.startswith("file=") else config.levels
    records: list[ConvergenceRecord] = []
    failed = []
    for level in range(levels):
        n = config.n0 * 2 ** level
        start = time.perf_counter()
        try:
            mesh = _mesh_for(config, n)
            disc = Discretization(mesh, config.degree)
            reports = {}
            if config.solver in ("fp", "both"):
                reports["fp"] = fixed_point_solve(disc, problem, config.tol, config.max_iter)
            if config.solver in ("newton", "both"):
                reports["newton"] = newton_solve(disc, problem, config.tol, config.max_iter)
        except NonlinearSolverError as err:
            raise NonlinearSolverError(f"level {level} (n={n}): {err}",
                                       err.iteration, err.report) from err
        except (ValueError, np.linalg.LinAlgError) as err:
            raise type(err)(f"level {level} (n={n}): {err}") from err
        main = reports.get("fp") or reports["newton"]
        e0, e1 = compute_errors(disc, main.solution, problem,
                                relative=not config.absolute_errors)
        rec = ConvergenceRecord(
            level=level, ndof=int(disc.dofmap.n_interior), h=float(mesh.h()),
            err_l2_rel=e0, err_h1_rel=e1,
            fp_iters=reports["fp"].nonlinear_iterations if "fp" in reports else None,
            nr_iters=reports["newton"].nonlinear_iterations if "newton" in reports else None,
            reports=reports)
        if records:
            p = records[-1]
            if p.err_l2_rel > 0 and e0 > 0 and rec.ndof > p.ndof:
                rec.eoc_l2 = eoc((p.err_l2_rel, p.ndof), (e0, rec.ndof))
            if p.err_h1_rel > 0 and e1 > 0 and rec.ndof > p.ndof:
                rec.eoc_h1 = eoc((p.err_h1_rel, p.ndof), (e1, rec.ndof))
        rec.seconds = time.perf_counter() - start
        records.append(rec)
        logger.info("level %d n=%d ndof=%d l2 %.3e h1 %.3e (%.2fs)",
                    level, n, rec.ndof, e0, e1, rec.seconds)
        for name, rep in reports.items():
            if not rep.converged:
                failed.append(f"{name} at level {level}")
        if config.dump_matrices:
            _dump(config.dump_matrices, level, disc, problem, main.solution)
    if config.out:
        write_csv(records, config.out)
    if failed and raise_on_failure:
        raise NonConvergenceError("no convergence: " + ", ".join(failed), records)
    return records


def _dump(directory, level, disc, problem, u):
    from .assembly import assemble_global
    root = Path(directory) / f"level{level}"
    root.mkdir(parents=True, exist_ok=True)
    a, _ = assemble_global(disc, problem, u, "fixed_point")
    dump_coo(a, root / "matrix_fp.txt")
    jac, _ = assemble_global(disc, problem, u, "newton")
    dump_coo(jac, root / "matrix_newton.txt")
    dump_projectors(disc.projectors, root / "projectors")


def write_csv(records: list[ConvergenceRecord], path) -> None:
    """Write the study table to a path or an open text stream."""
    if hasattr(path, "write"):
        w = csv.writer(path, lineterminator="\n")
        w.writerow(CSV_HEADER)
        for r in records:
            w.writerow(r.row())
        return
    with open(path, "w", newline="") as fh:
        write_csv(records, fh)

