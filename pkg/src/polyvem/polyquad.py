"""Scaled monomials, Gauss rules on edges and fan triangles, Gram matrices."""
from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from math import ceil

import numpy as np
from numpy.polynomial.legendre import leggauss
from scipy.special import roots_jacobi


def poly_dim(degree: int) -> int:
    """Dimension of the bivariate polynomials of total degree <= ``degree``."""
    if degree < 0:
        return 0
    return (degree + 1) * (degree + 2) // 2


@lru_cache(maxsize=None)
def exponents(degree: int) -> np.ndarray:
    """Multi-indices sorted by total degree, then by decreasing x power."""
    out = [(d - j, j) for d in range(degree + 1) for j in range(d + 1)]
    arr = np.array(out, dtype=np.int64).reshape(-1, 2)
    arr.setflags(write=False)
    return arr


def exponent_index(alpha: tuple[int, int]) -> int:
    d = alpha[0] + alpha[1]
    return poly_dim(d - 1) + alpha[1]


@dataclass(frozen=True)
class MonomialBasis:
    """Monomials ``((x - centroid) / diameter) ** alpha`` up to ``degree``."""

    degree: int
    centroid: np.ndarray
    diameter: float
    element: object = None

    @classmethod
    def on(cls, geom, degree: int) -> "MonomialBasis":
        return cls(degree, np.asarray(geom.centroid, dtype=float), float(geom.diameter), geom)

    @property
    def dim(self) -> int:
        return poly_dim(self.degree)

    @property
    def exponents(self) -> np.ndarray:
        return exponents(self.degree)

    def _scaled(self, x):
        x = np.atleast_2d(np.asarray(x, dtype=float))
        return (x - self.centroid) / self.diameter

    def eval(self, x) -> np.ndarray:
        """Values at points ``x`` of shape (npts, 2); returns (npts, dim)."""
        s = self._scaled(x)
        ex = self.exponents
        return s[:, None, 0] ** ex[None, :, 0] * s[:, None, 1] ** ex[None, :, 1]

    def eval_grad(self, x) -> np.ndarray:
        """Gradients at points ``x``; returns (npts, dim, 2)."""
        s = self._scaled(x)
        ex = self.exponents
        px = s[:, None, 0] ** np.maximum(ex[None, :, 0] - 1, 0)
        py = s[:, None, 1] ** np.maximum(ex[None, :, 1] - 1, 0)
        qx = s[:, None, 0] ** ex[None, :, 0]
        qy = s[:, None, 1] ** ex[None, :, 1]
        gx = ex[None, :, 0] * px * qy
        gy = ex[None, :, 1] * qx * py
        return np.stack([gx, gy], axis=-1) / self.diameter


def eval_basis(basis: MonomialBasis, x) -> np.ndarray:
    return basis.eval(x)


def eval_grad(basis: MonomialBasis, x) -> np.ndarray:
    return basis.eval_grad(x)


@dataclass(frozen=True)
class QuadRule:
    points: np.ndarray
    weights: np.ndarray
    exactness_degree: int


def _npoints(exactness: int) -> int:
    if exactness < 0:
        raise ValueError("exactness must be nonnegative")
    return max(1, ceil((exactness + 1) / 2))


@lru_cache(maxsize=None)
def gauss_legendre(exactness: int) -> QuadRule:
    """Gauss-Legendre rule on [0, 1] with ceil((exactness+1)/2) nodes."""
    t, w = leggauss(_npoints(exactness))
    return QuadRule((t + 1.0) / 2.0, w / 2.0, exactness)


@lru_cache(maxsize=None)
def triangle_rule(exactness: int) -> QuadRule:
    """Collapsed (Duffy) Gauss rule on the reference triangle (0,0),(1,0),(0,1).

    The collapsed direction uses Gauss-Jacobi nodes with weight (1 - u), so
    the Jacobian is absorbed and all weights stay positive.
    """
    n = _npoints(exactness)
    tj, wj = roots_jacobi(n, 1.0, 0.0)
    u = (tj + 1.0) / 2.0
    wu = wj / 4.0
    leg = gauss_legendre(exactness)
    uu, vv = np.meshgrid(u, leg.points, indexing="ij")
    ww = np.outer(wu, leg.weights)
    pts = np.column_stack([uu.ravel(), ((1.0 - uu) * vv).ravel()])
    return QuadRule(pts, ww.ravel(), exactness)


def fan_rule(fan: np.ndarray, exactness: int) -> QuadRule:
    """Map the reference triangle rule onto every triangle of ``fan`` (nt, 3, 2)."""
    ref = triangle_rule(exactness)
    a = fan[:, 0, :]
    e1 = fan[:, 1, :] - a
    e2 = fan[:, 2, :] - a
    jac = np.abs(e1[:, 0] * e2[:, 1] - e1[:, 1] * e2[:, 0])
    pts = (a[:, None, :] + ref.points[None, :, 0, None] * e1[:, None, :]
           + ref.points[None, :, 1, None] * e2[:, None, :])
    w = jac[:, None] * ref.weights[None, :]
    return QuadRule(pts.reshape(-1, 2), w.ravel(), exactness)


def element_rule(geom, exactness: int) -> QuadRule:
    return fan_rule(geom.fan, exactness)


def integrate_element(geom, exactness: int, f) -> float:
    """Integrate ``f(x, y)`` over the element with a rule exact to ``exactness``."""
    rule = element_rule(geom, exactness)
    vals = f(rule.points[:, 0], rule.points[:, 1])
    return float(np.dot(rule.weights, np.broadcast_to(vals, rule.weights.shape)))


def edge_rule(a, b, exactness: int) -> QuadRule:
    """Gauss-Legendre rule on the segment from ``a`` to ``b`` (arc-length weights)."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    ref = gauss_legendre(exactness)
    pts = a + ref.points[:, None] * (b - a)
    return QuadRule(pts, ref.weights * np.hypot(*(b - a)), exactness)


def integrate_edge(edge, exactness: int, f) -> float:
    """Line integral of ``f(x, y)`` along ``edge = (a, b)``."""
    a, b = edge
    rule = edge_rule(a, b, exactness)
    vals = f(rule.points[:, 0], rule.points[:, 1])
    return float(np.dot(rule.weights, np.broadcast_to(vals, rule.weights.shape)))


def mass_matrix(basis: MonomialBasis, exactness: int | None = None) -> np.ndarray:
    """Gram matrix ``H_ij = (m_i, m_j)_E`` on ``basis.element``."""
    if exactness is None:
        exactness = 2 * basis.degree
    rule = element_rule(basis.element, exactness)
    m = basis.eval(rule.points)
    h = m.T @ (rule.weights[:, None] * m)
    return 0.5 * (h + h.T)


def grad_coefficients(degree: int, diameter: float) -> np.ndarray:
    """Matrices (2, N_{degree-1}, N_degree) mapping coefficients to gradient coefficients."""
    ex = exponents(degree)
    out = np.zeros((2, poly_dim(degree - 1), poly_dim(degree)))
    for b, (bx, by) in enumerate(ex):
        if bx:
            out[0, exponent_index((bx - 1, by)), b] = bx / diameter
        if by:
            out[1, exponent_index((bx, by - 1)), b] = by / diameter
    return out
