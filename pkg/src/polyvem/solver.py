"""Jacobi-preconditioned Krylov solvers and the nonlinear drivers.

Sparse matrices are ``scipy.sparse.csr_matrix``; only matrix-vector products
and the diagonal are used here.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .assembly import Discretization, assemble_global

logger = logging.getLogger(__name__)

LINEAR_TOL = 1e-12


class LinearSolverError(RuntimeError):
    """Krylov iteration hit ``maxit``; the best iterate is kept on the exception."""

    def __init__(self, msg, x=None, iterations=0):
        super().__init__(msg)
        self.x = x
        self.iterations = iterations


class BreakdownError(LinearSolverError):
    """BiCGStab breakdown (rho or omega vanished)."""


class NonlinearSolverError(RuntimeError):
    """A linear solve failed inside a nonlinear iteration."""

    def __init__(self, msg, iteration, report=None):
        super().__init__(msg)
        self.iteration = iteration
        self.report = report


def as_csr(a) -> sp.csr_matrix:
    m = sp.csr_matrix(a, dtype=float)
    m.sum_duplicates()
    m.sort_indices()
    return m


def _jacobi(a: sp.csr_matrix, strict: bool) -> np.ndarray:
    d = a.diagonal()
    zero = d == 0
    if zero.any():
        if strict:
            raise ValueError(f"zero diagonal entry in row {int(np.flatnonzero(zero)[0])}")
        d = np.where(zero, 1.0, d)
    return 1.0 / d


def _default_maxit(n: int) -> int:
    return max(100, 10 * n)


def cg_solve(a, b, tol: float = LINEAR_TOL, maxit: int | None = None, x0=None):
    """Preconditioned conjugate gradients with a diagonal preconditioner.

    Stops when ``||b - A x|| <= tol * ||b||``. Returns ``(x, iterations)``.

    Raises
    ------
    ValueError
        On a zero diagonal entry.
    LinearSolverError
        When ``maxit`` is exceeded or the matrix is found not to be positive
        definite; ``err.x`` holds the last iterate.
    """
    a = as_csr(a)
    b = np.asarray(b, dtype=float)
    n = b.shape[0]
    maxit = _default_maxit(n) if maxit is None else maxit
    minv = _jacobi(a, strict=True) if n else np.zeros(0)
    x = np.zeros(n) if x0 is None else np.array(x0, dtype=float)
    bnorm = np.linalg.norm(b)
    if bnorm == 0.0:
        return np.zeros(n), 0
    r = b - a @ x
    target = tol * bnorm
    if np.linalg.norm(r) <= target:
        return x, 0
    z = minv * r
    p = z.copy()
    rz = r @ z
    for it in range(1, maxit + 1):
        q = a @ p
        pq = p @ q
        if not pq > 0:
            raise LinearSolverError(f"CG breakdown (p.Ap = {pq:.3e}) at iteration {it}", x, it)
        alpha = rz / pq
        x += alpha * p
        r -= alpha * q
        if np.linalg.norm(r) <= target:
            return x, it
        z = minv * r
        rz_new = r @ z
        p *= rz_new / rz
        p += z
        rz = rz_new
    raise LinearSolverError(f"CG did not converge in {maxit} iterations", x, maxit)


def bicgstab_solve(a, b, tol: float = LINEAR_TOL, maxit: int | None = None, x0=None,
                   breakdown_tol: float = 1e-30):
    """Right-preconditioned BiCGStab; zero diagonal entries are preconditioned by 1.

    Raises
    ------
    BreakdownError
        When rho or omega vanish relative to the vectors involved.
    LinearSolverError
        When ``maxit`` is exceeded.
    """
    a = as_csr(a)
    b = np.asarray(b, dtype=float)
    n = b.shape[0]
    maxit = _default_maxit(n) if maxit is None else maxit
    bnorm = np.linalg.norm(b)
    if bnorm == 0.0:
        return np.zeros(n), 0
    minv = _jacobi(a, strict=False)
    x = np.zeros(n) if x0 is None else np.array(x0, dtype=float)
    r = b - a @ x
    target = tol * bnorm
    if np.linalg.norm(r) <= target:
        return x, 0
    rhat = r.copy()
    rho = alpha = omega = 1.0
    v = np.zeros(n)
    p = np.zeros(n)
    for it in range(1, maxit + 1):
        rho_new = rhat @ r
        if abs(rho_new) <= breakdown_tol * np.linalg.norm(rhat) * np.linalg.norm(r):
            raise BreakdownError(f"BiCGStab breakdown (rho ~ 0) at iteration {it}", x, it)
        beta = (rho_new / rho) * (alpha / omega)
        rho = rho_new
        p = r + beta * (p - omega * v)
        phat = minv * p
        v = a @ phat
        denom = rhat @ v
        if denom == 0.0:
            raise BreakdownError(f"BiCGStab breakdown (rhat.v = 0) at iteration {it}", x, it)
        alpha = rho / denom
        s = r - alpha * v
        if np.linalg.norm(s) <= target:
            x += alpha * phat
            return x, it
        shat = minv * s
        t = a @ shat
        tt = t @ t
        if tt == 0.0:
            raise BreakdownError(f"BiCGStab breakdown (omega ~ 0) at iteration {it}", x, it)
        omega = (t @ s) / tt
        x += alpha * phat + omega * shat
        r = s - omega * t
        if np.linalg.norm(r) <= target:
            return x, it
        if abs(omega) <= breakdown_tol:
            raise BreakdownError(f"BiCGStab breakdown (omega ~ 0) at iteration {it}", x, it)
    raise LinearSolverError(f"BiCGStab did not converge in {maxit} iterations", x, maxit)


@dataclass
class SolveReport:
    solution: np.ndarray
    nonlinear_iterations: int = 0
    linear_iterations: list = field(default_factory=list)
    increments: list = field(default_factory=list)
    energies: list = field(default_factory=list)  # (F_n(u^n), F_n(u^{n+1})) per step
    residuals: list = field(default_factory=list)
    converged: bool = False


def _initial(disc: Discretization, problem, u0) -> np.ndarray:
    if u0 is None:
        u = np.zeros(disc.n_dofs)
    else:
        u = np.array(u0, dtype=float)
        if u.shape != (disc.n_dofs,):
            raise ValueError(f"u0 has length {u.shape}, expected {disc.n_dofs}")
    g = disc.boundary_values(problem)
    u[disc.boundary] = g[disc.boundary]
    return u


def _check(tol, maxit):
    if not tol > 0:
        raise ValueError("tol must be positive")
    if maxit < 1:
        raise ValueError("maxit must be at least 1")


def fixed_point_solve(disc: Discretization, problem, tol: float = 1e-10, maxit: int = 50,
                      u0=None, linear_tol: float = LINEAR_TOL,
                      stabilize: bool = True) -> SolveReport:
    """Frozen-coefficient iteration a_h(u^n; u^{n+1}, v) = (P_{k-1} f, v).

    Stops when ``||u^{n+1} - u^n|| / max(1, ||u^{n+1}||) <= tol``. The energy
    ``F_n(v) = a_h(u^n; v, v) - 2 (P_{k-1} f, v)`` is recorded at ``u^n`` and
    ``u^{n+1}``. ``stabilize=False`` drops the stabilising term (consistency
    part only), which is useful for comparisons with finite elements.
    """
    _check(tol, maxit)
    u = _initial(disc, problem, u0)
    report = SolveReport(solution=u)
    load = disc.load(problem.f)
    ii, bb = disc.interior, disc.boundary
    for n in range(1, maxit + 1):
        a = disc.stiffness(problem.kappa, u, stabilize)
        a_ii = a[ii][:, ii]
        rhs = load[ii] - a[ii][:, bb] @ u[bb]
        try:
            x, its = cg_solve(a_ii, rhs, linear_tol, x0=u[ii])
        except (LinearSolverError, ValueError) as err:
            raise NonlinearSolverError(f"fixed-point iteration {n}: {err}", n, report) from err
        new = u.copy()
        new[ii] = x
        e_old = u @ (a @ u) - 2 * load @ u
        e_new = new @ (a @ new) - 2 * load @ new
        inc = float(np.linalg.norm(new - u))
        rel = inc / max(1.0, float(np.linalg.norm(new)))
        report.linear_iterations.append(its)
        report.increments.append(inc)
        report.energies.append((float(e_old), float(e_new)))
        report.nonlinear_iterations = n
        logger.info("fp %d increment %.3e energy %.12e -> %.12e cg %d",
                    n, inc, e_old, e_new, its)
        u = new
        report.solution = u
        if rel <= tol:
            report.converged = True
            break
    return report


def newton_solve(disc: Discretization, problem, tol: float = 1e-10, maxit: int = 50,
                 u0=None, linear_tol: float = LINEAR_TOL,
                 stabilize: bool = True) -> SolveReport:
    """Newton-Raphson on the discrete residual, BiCGStab for the Jacobian systems.

    Converged when the relative increment drops below ``tol``, or when the
    relative residual ``||F - A(u^n) u^n|| / ||F||`` at a new iterate does.
    """
    _check(tol, maxit)
    u = _initial(disc, problem, u0)
    report = SolveReport(solution=u)
    fnorm = None
    for n in range(1, maxit + 1):
        jac, rhs = assemble_global(disc, problem, u, "newton", stabilize)
        res = float(np.linalg.norm(rhs))
        report.residuals.append(res)
        if fnorm is None:
            load = disc.load(problem.f)
            fnorm = float(np.linalg.norm(load[disc.interior])) or 1.0
        elif res <= tol * fnorm:
            report.converged = True
            break
        try:
            d, its = bicgstab_solve(jac, rhs, linear_tol)
        except (LinearSolverError, ValueError) as err:
            raise NonlinearSolverError(f"Newton iteration {n}: {err}", n, report) from err
        new = u.copy()
        new[disc.interior] += d
        inc = float(np.linalg.norm(d))
        rel = inc / max(1.0, float(np.linalg.norm(new)))
        report.linear_iterations.append(its)
        report.increments.append(inc)
        report.nonlinear_iterations = n
        logger.info("newton %d increment %.3e residual %.3e bicgstab %d", n, inc, res, its)
        u = new
        report.solution = u
        if rel <= tol:
            report.converged = True
            break
    return report
