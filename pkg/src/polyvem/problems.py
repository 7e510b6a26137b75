"""PDE instances: the manufactured quasilinear test problem and polynomial patch problems.

Pointwise functions take coordinate arrays ``(x, y)`` and broadcast;
``kappa`` and ``kappa_u`` take an array of solution values. ``exact_grad_u``
returns an array with a trailing axis of length 2.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from typing import Callable, Optional

import numpy as np
from numpy.polynomial import polynomial as P

Func = Callable[..., np.ndarray]


@dataclass(frozen=True)
class ProblemSpec:
    name: str
    kappa: Func
    kappa_u: Func
    f: Func
    exact_u: Optional[Func] = None
    exact_grad_u: Optional[Func] = None
    boundary_g: Optional[Func] = None

    @property
    def has_exact(self) -> bool:
        return self.exact_u is not None and self.exact_grad_u is not None


def _bubble(x, y):
    return (x - x * x) * (y - y * y)


def _bubble_grad(x, y):
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    return np.stack([(1 - 2 * x) * (y - y * y), (x - x * x) * (1 - 2 * y)], axis=-1)


def _bubble_lap(x, y):
    return -2.0 * (y - y * y) - 2.0 * (x - x * x)


def _zero(x, y):
    return np.zeros(np.broadcast(np.asarray(x), np.asarray(y)).shape)


def paper_problem() -> ProblemSpec:
    """kappa(u) = 1/(1+u)^2 with exact solution u = (x-x^2)(y-y^2) on the unit square."""

    def kappa(t):
        return 1.0 / (1.0 + np.asarray(t, dtype=float)) ** 2

    def kappa_u(t):
        return -2.0 / (1.0 + np.asarray(t, dtype=float)) ** 3

    def f(x, y):
        u = _bubble(x, y)
        g = _bubble_grad(x, y)
        return -kappa_u(u) * np.sum(g * g, axis=-1) - kappa(u) * _bubble_lap(x, y)

    return ProblemSpec("paper", kappa, kappa_u, f, _bubble, _bubble_grad, _zero)


def linear_problem() -> ProblemSpec:
    """kappa = 1 with the same exact solution; the fixed-point map is constant."""
    return ProblemSpec("linear", lambda t: np.ones_like(np.asarray(t, dtype=float)),
                       lambda t: np.zeros_like(np.asarray(t, dtype=float)),
                       lambda x, y: -_bubble_lap(x, y), _bubble, _bubble_grad, _zero)


def poisson_patch_problem(coeffs) -> ProblemSpec:
    """Poisson problem with polynomial solution ``p(x, y) = sum c[i, j] x^i y^j``.

    Parameters
    ----------
    coeffs : array_like, shape (m, n)
        Coefficient table in the numpy.polynomial ``polyval2d`` convention.
    """
    c = np.atleast_2d(np.asarray(coeffs, dtype=float))
    cx = P.polyder(c, axis=0)
    cy = P.polyder(c, axis=1)
    lap_c = P.polyder(c, 2, axis=0)
    lap_c2 = P.polyder(c, 2, axis=1)

    def xy(x, y):
        return np.broadcast_arrays(np.asarray(x, dtype=float), np.asarray(y, dtype=float))

    def p(x, y):
        return P.polyval2d(*xy(x, y), c)

    def grad(x, y):
        x, y = xy(x, y)
        return np.stack(np.broadcast_arrays(P.polyval2d(x, y, cx), P.polyval2d(x, y, cy)), axis=-1)

    def f(x, y):
        x, y = xy(x, y)
        return -(P.polyval2d(x, y, lap_c) + P.polyval2d(x, y, lap_c2)) + 0.0 * x

    return ProblemSpec("patch", lambda t: np.ones_like(np.asarray(t, dtype=float)),
                       lambda t: np.zeros_like(np.asarray(t, dtype=float)), f, p, grad, p)


def patch_coefficients(degree: int) -> np.ndarray:
    """A fixed polynomial of exact total degree ``degree`` with every monomial present."""
    c = np.zeros((degree + 1, degree + 1))
    for i in range(degree + 1):
        for j in range(degree + 1 - i):
            c[i, j] = 1.0 / (1 + i + 2 * j) * (-1) ** (i + j)
    return c


def get_problem(name: str) -> ProblemSpec:
    """Look up a problem by name: ``paper``, ``linear`` or ``patch:<degree>``."""
    if name == "paper":
        return paper_problem()
    if name == "linear":
        return linear_problem()
    if name.startswith("patch:"):
        try:
            d = int(name.split(":", 1)[1])
        except ValueError:
            raise ValueError(f"bad patch degree in {name!r}") from None
        if not 0 <= d <= 4:
            raise ValueError("patch degree must be between 0 and 4")
        return poisson_patch_problem(patch_coefficients(d))
    raise ValueError(f"unknown problem {name!r}")


@lru_cache(maxsize=1)
def _reference_rule(n: int, exactness: int):
    from .mesh import generate
    from .polyquad import triangle_rule
    mesh = generate("squares", n, 0)
    ref = triangle_rule(exactness)
    pts, wts = [], []
    for ring in mesh.cells:
        a, b, c, d = mesh.vertices[ring]
        for tri in ((a, b, c), (a, c, d)):
            e1, e2 = tri[1] - tri[0], tri[2] - tri[0]
            jac = abs(e1[0] * e2[1] - e1[1] * e2[0])
            pts.append(tri[0] + ref.points[:, :1] * e1 + ref.points[:, 1:] * e2)
            wts.append(jac * ref.weights)
    return np.concatenate(pts), np.concatenate(wts)


def exact_norms(problem: ProblemSpec) -> tuple[float, float]:
    """L2 norm and H1 seminorm of the exact solution over the unit square."""
    if not problem.has_exact:
        raise ValueError(f"problem {problem.name!r} has no exact solution")
    pts, w = _reference_rule(16, 12)
    x, y = pts[:, 0], pts[:, 1]
    u = np.broadcast_to(problem.exact_u(x, y), w.shape)
    g = np.broadcast_to(problem.exact_grad_u(x, y), w.shape + (2,))
    return float(np.sqrt(w @ u ** 2)), float(np.sqrt(w @ np.sum(g * g, axis=1)))
