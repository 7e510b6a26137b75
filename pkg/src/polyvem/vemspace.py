"""Degrees of freedom and element projectors of the conforming virtual element space.

Local DoF ordering on an element with ``nv`` vertices::

    [vertex values (ring order)]
    [edge moments, edge i = ring vertex i -> i+1, orders 0..k-2]
    [cell moments, |alpha| <= k-2, monomial ordering]

Edge moments use the local coordinate ``s = (x - x_e) . t / h_e`` where the
tangent ``t`` points from the lower to the higher global vertex index.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .mesh import ElementGeometry, PolyMesh
from .polyquad import (MonomialBasis, element_rule, exponent_index, exponents,
                       gauss_legendre, poly_dim, triangle_rule)

logger = logging.getLogger(__name__)


class ProjectorError(np.linalg.LinAlgError):
    """A Gram system could not be solved; the element is degenerate."""


def n_local_dofs(n_vertices: int, k: int) -> int:
    return n_vertices * k + k * (k - 1) // 2


@dataclass(frozen=True, eq=False)
class DofMap:
    """Global numbering: vertices, then edge moments, then cell moments."""

    degree: int
    n_dofs: int
    n_vertex_dofs: int
    n_edge_dofs: int
    n_cell_dofs: int
    cell_dofs: tuple
    boundary: np.ndarray

    @property
    def interior(self) -> np.ndarray:
        return np.flatnonzero(~self.boundary)

    @property
    def n_interior(self) -> int:
        return int((~self.boundary).sum())


def build_dofmap(mesh: PolyMesh, k: int) -> DofMap:
    if k < 1:
        raise ValueError("degree k must be at least 1")
    ne_k = k - 1
    nc_k = k * (k - 1) // 2
    nv, ne, nc = mesh.n_vertices, mesh.n_edges, mesh.n_cells
    e_off = nv
    c_off = nv + ne * ne_k
    n = c_off + nc * nc_k

    cell_dofs = []
    for c, ring in enumerate(mesh.cells):
        edofs = (e_off + mesh.cell_edges[c][:, None] * ne_k + np.arange(ne_k)).ravel()
        cdofs = c_off + c * nc_k + np.arange(nc_k)
        local = np.concatenate([ring, edofs, cdofs]).astype(np.int64)
        local.setflags(write=False)
        cell_dofs.append(local)

    boundary = np.zeros(n, dtype=bool)
    boundary[:nv] = mesh.boundary_vertex
    if ne_k:
        boundary[e_off:c_off] = np.repeat(mesh.boundary_edge, ne_k)
    boundary.setflags(write=False)
    return DofMap(k, n, nv, ne * ne_k, nc * nc_k, tuple(cell_dofs), boundary)


@dataclass(frozen=True, eq=False)
class ElementProjectors:
    """Projector matrices acting on local DoF vectors.

    ``pinabla`` and ``pizero`` map DoFs to coefficients in the scaled
    monomial basis of degree k; ``pizero_grad`` has shape (2, N_{k-1}, ndof)
    and ``pizero_km1`` gives the L2 projection onto degree k-1.
    ``dof_of_poly`` evaluates the DoF functionals on each monomial.
    """

    degree: int
    basis: MonomialBasis
    gram: np.ndarray
    pinabla: np.ndarray
    pizero: np.ndarray
    pizero_km1: np.ndarray
    pizero_grad: np.ndarray
    dof_of_poly: np.ndarray

    @property
    def n_dofs(self) -> int:
        return self.pinabla.shape[1]


class ElementBatch:
    """Scaled geometry of elements sharing vertex and fan-triangle counts.

    Coordinates are ``(x - x_E) / h_E``; DoFs and monomial coefficients do
    not change under this map, so everything is built where arithmetic is
    well scaled and only the Gram matrix and gradients are rescaled at the end.
    """

    def __init__(self, geoms: list[ElementGeometry]):
        self.geoms = geoms
        self.cells = np.array([g.cell for g in geoms], dtype=np.int64)
        self.centroid = np.array([g.centroid for g in geoms]).reshape(-1, 2)
        self.diameter = np.array([g.diameter for g in geoms], dtype=float)
        h = self.diameter
        c = self.centroid
        self.vertices = (np.array([g.vertices for g in geoms]) - c[:, None]) / h[:, None, None]
        self.fan = (np.array([g.fan for g in geoms]) - c[:, None, None]) / h[:, None, None, None]
        self.area = np.array([g.area for g in geoms]) / h ** 2
        self.edge_lengths = np.array([g.edge_lengths for g in geoms]) / h[:, None]
        self.normals = np.array([g.normals for g in geoms])
        self.forward = np.array([g.edge_forward for g in geoms], dtype=bool)

    def __len__(self) -> int:
        return len(self.geoms)

    @property
    def n_vertices(self) -> int:
        return self.vertices.shape[1]

    def fan_rule(self, exactness: int) -> tuple[np.ndarray, np.ndarray]:
        """Quadrature points (E, Q, 2) and weights (E, Q) in scaled coordinates."""
        ref = triangle_rule(exactness)
        a = self.fan[:, :, 0]
        e1 = self.fan[:, :, 1] - a
        e2 = self.fan[:, :, 2] - a
        jac = np.abs(e1[..., 0] * e2[..., 1] - e1[..., 1] * e2[..., 0])
        pts = (a[:, :, None] + ref.points[None, None, :, 0, None] * e1[:, :, None]
               + ref.points[None, None, :, 1, None] * e2[:, :, None])
        w = jac[:, :, None] * ref.weights
        e = len(self)
        return pts.reshape(e, -1, 2), w.reshape(e, -1)


def monomials(points: np.ndarray, degree: int) -> np.ndarray:
    """Scaled monomials (centroid 0, diameter 1) at ``points`` (..., 2) -> (..., N)."""
    ex = exponents(degree)
    return points[..., 0, None] ** ex[:, 0] * points[..., 1, None] ** ex[:, 1]


def monomial_grads(points: np.ndarray, degree: int) -> np.ndarray:
    """Gradients of the scaled monomials, shape (..., N, 2)."""
    ex = exponents(degree)
    x = points[..., 0, None]
    y = points[..., 1, None]
    gx = ex[:, 0] * x ** np.maximum(ex[:, 0] - 1, 0) * y ** ex[:, 1]
    gy = ex[:, 1] * x ** ex[:, 0] * y ** np.maximum(ex[:, 1] - 1, 0)
    return np.stack([gx, gy], axis=-1)


def _moment_matrix(k: int, s_a: float, s_b: float) -> np.ndarray:
    """Rows map trace coefficients in s^j to [v(a), v(b), moments 0..k-2]."""
    j = np.arange(k + 1)
    q = np.empty((k + 1, k + 1))
    q[0] = s_a ** j
    q[1] = s_b ** j
    for a in range(k - 1):
        p = j + a + 1
        q[2 + a] = (0.5 ** p - (-0.5) ** p) / p
    return q


@lru_cache(maxsize=None)
def _trace_maps(k: int, exactness: int) -> np.ndarray:
    """Trace at the Gauss nodes from [v(vertex i), v(vertex i+1), moments].

    Index 0 is for an edge oriented along the ring, 1 for the reverse.
    """
    sq = gauss_legendre(exactness).points - 0.5
    vand = sq[:, None] ** np.arange(k + 1)
    maps = np.stack([vand @ np.linalg.inv(_moment_matrix(k, -0.5, 0.5)),
                     vand @ np.linalg.inv(_moment_matrix(k, 0.5, -0.5))])
    maps.setflags(write=False)
    return maps


def _edge_columns(nv: int, k: int) -> np.ndarray:
    """Local DoFs seen by the trace on each edge, shape (nv, k+1)."""
    i = np.arange(nv)[:, None]
    return np.hstack([i, (i + 1) % nv, nv + i * (k - 1) + np.arange(k - 1)])


def _solve(a: np.ndarray, b: np.ndarray, what: str, cells: np.ndarray) -> np.ndarray:
    """Batched dense solve with symmetric diagonal equilibration.

    Scaled monomials of different degrees differ in size by orders of
    magnitude; equilibrating first keeps the pivoting meaningful.
    """
    d = np.abs(np.diagonal(a, axis1=-2, axis2=-1))
    bad = ~np.all(np.isfinite(a), axis=(-2, -1)) | np.any(d <= 0, axis=-1)
    if bad.any():
        raise ProjectorError(f"singular {what} system on cell {int(cells[np.argmax(bad)])}")
    d = 1.0 / np.sqrt(d)
    scaled = a * d[..., :, None] * d[..., None, :]
    if logger.isEnabledFor(logging.DEBUG):
        for c, cond in zip(cells, np.linalg.cond(scaled)):
            logger.debug("cell %d %s condition %.3e", c, what, cond)
    try:
        x = np.linalg.solve(scaled, d[..., :, None] * b)
    except np.linalg.LinAlgError:
        for j in range(len(a)):
            try:
                np.linalg.solve(scaled[j], b[j])
            except np.linalg.LinAlgError:
                raise ProjectorError(f"singular {what} system on cell {int(cells[j])}") from None
        raise
    bad = ~np.all(np.isfinite(x), axis=(-2, -1))
    if bad.any():
        raise ProjectorError(f"singular {what} system on cell {int(cells[np.argmax(bad)])}")
    return d[..., :, None] * x


@dataclass(frozen=True, eq=False)
class ProjectorStack:
    """Projector matrices of a batch of elements, leading axis = element."""

    degree: int
    cells: np.ndarray
    centroid: np.ndarray
    diameter: np.ndarray
    gram: np.ndarray
    pinabla: np.ndarray
    pizero: np.ndarray
    pizero_km1: np.ndarray
    pizero_grad: np.ndarray
    dof_of_poly: np.ndarray

    def __len__(self) -> int:
        return len(self.cells)

    def element(self, j: int, geom: ElementGeometry | None = None) -> ElementProjectors:
        basis = MonomialBasis(self.degree, self.centroid[j], float(self.diameter[j]), geom)
        return ElementProjectors(self.degree, basis, self.gram[j], self.pinabla[j],
                                 self.pizero[j], self.pizero_km1[j], self.pizero_grad[j],
                                 self.dof_of_poly[j])


def projector_stack(batch: ElementBatch, k: int) -> ProjectorStack:
    """Build the projectors of every element in ``batch`` from DoFs only."""
    if k < 1:
        raise ValueError("degree k must be at least 1")
    e, nv = len(batch), batch.n_vertices
    ndof = n_local_dofs(nv, k)
    cell0 = nv * k  # first cell-moment DoF
    area = batch.area
    ex = exponents(k)
    nk, nk1, low = poly_dim(k), poly_dim(k - 1), poly_dim(k - 2)
    cells = batch.cells

    pts, w = batch.fan_rule(2 * k)
    mq = monomials(pts, k)
    gram = np.einsum("eqi,eq,eqj->eij", mq, w, mq)
    gram = 0.5 * (gram + np.swapaxes(gram, 1, 2))

    # edge quadrature; s runs from the lower to the higher global vertex id
    ref = gauss_legendre(2 * k)
    sq = ref.points - 0.5
    v = batch.vertices
    vn = np.roll(v, -1, axis=1)
    sign = np.where(batch.forward, 1.0, -1.0)
    epts = (0.5 * (v + vn))[:, :, None] + (sign[..., None, None] * sq[:, None]) * (vn - v)[:, :, None]
    ew = ref.weights * batch.edge_lengths[..., None]                       # (E, nv, q)
    tv = _trace_maps(k, 2 * k)[np.where(batch.forward, 0, 1)]             # (E, nv, q, k+1)
    cols = _edge_columns(nv, k)
    em = monomials(epts, k)                                                 # (E, nv, q, nk)

    # DoF functionals applied to each monomial
    dof_of_poly = np.empty((e, ndof, nk))
    dof_of_poly[:, :nv] = monomials(v, k)
    if k >= 2:
        sa = ref.weights * sq[None, :] ** np.arange(k - 1)[:, None]         # (k-1, q)
        dof_of_poly[:, nv:cell0] = np.einsum("aq,eiqn->eian", sa, em).reshape(e, -1, nk)
    dof_of_poly[:, cell0:] = gram[:, :low] / area[:, None, None]

    def cell_col(alpha) -> int:
        return cell0 + exponent_index(alpha)

    # H1 projection: (grad m_b, grad v) = -(v, lap m_b) + int_dE v dm_b/dn,
    # with the constant fixed by the boundary mean (k = 1) or cell mean
    rhs = np.zeros((e, nk, ndof))
    for b in range(1, nk):
        bx, by = ex[b]
        if bx >= 2:
            rhs[:, b, cell_col((bx - 2, by))] -= bx * (bx - 1) * area
        if by >= 2:
            rhs[:, b, cell_col((bx, by - 2))] -= by * (by - 1) * area
    dn = np.einsum("eiqnd,eid->eiqn", monomial_grads(epts, k), batch.normals)
    edge_b = np.einsum("eiqn,eiq,eiqc->einc", dn, ew, tv)
    for i in range(nv):
        rhs[:, 1:, cols[i]] += edge_b[:, i, 1:]
    if k == 1:
        mean = np.einsum("eiq,eiqc->eic", ew, tv) / batch.edge_lengths.sum(1)[:, None, None]
        for i in range(nv):
            rhs[:, 0, cols[i]] += mean[:, i]
    else:
        rhs[:, 0, cell0] = 1.0
    # G = B D: the monomial stiffness seen through the same functionals,
    # so polynomial reproduction does not depend on quadrature round-off
    pinabla = _solve(rhs @ dof_of_poly, rhs, "H1 projection", cells)

    # L2 projection via the enhancement: moments of degree k-1, k come from pinabla
    moments = gram @ pinabla
    moments[:, :low] = 0.0
    moments[:, np.arange(low), cell0 + np.arange(low)] = area[:, None]
    gram_dof = moments @ dof_of_poly
    pizero = _solve(gram_dof, moments, "L2 projection", cells)
    pizero_km1 = _solve(gram_dof[:, :nk1, :nk1], moments[:, :nk1], "L2 projection", cells)

    # gradient projection: (d_d v, m_a) = -(v, d_d m_a) + int_dE v m_a n_d
    grad_rhs = np.zeros((e, 2, nk1, ndof))
    ex1 = exponents(k - 1)
    for a in range(nk1):
        for d in range(2):
            if ex1[a, d] > 0:
                lower = list(ex1[a])
                lower[d] -= 1
                grad_rhs[:, d, a, cell_col(tuple(lower))] -= ex1[a, d] * area
    edge_m = np.einsum("eiqn,eiq,eiqc->einc", em[..., :nk1], ew, tv)
    for i in range(nv):
        for d in range(2):
            grad_rhs[:, d][..., cols[i]] += batch.normals[:, i, d, None, None] * edge_m[:, i]
    both = _solve(gram[:, :nk1, :nk1], np.concatenate([grad_rhs[:, 0], grad_rhs[:, 1]], axis=2),
                  "gradient projection", cells)
    pizero_grad = np.stack([both[..., :ndof], both[..., ndof:]], axis=1)

    h = batch.diameter
    return ProjectorStack(k, cells, batch.centroid, h, gram * h[:, None, None] ** 2,
                          pinabla, pizero, pizero_km1,
                          pizero_grad / h[:, None, None, None], dof_of_poly)


def compute_projectors(geom: ElementGeometry, k: int) -> ElementProjectors:
    """Assemble the projector matrices of one element from its DoFs only."""
    return projector_stack(ElementBatch([geom]), k).element(0, geom)


def group_elements(geoms: list[ElementGeometry]) -> list[list[ElementGeometry]]:
    """Split elements into groups with equal vertex and fan-triangle counts."""
    groups: dict[tuple[int, int], list[ElementGeometry]] = {}
    for g in geoms:
        groups.setdefault((g.n_vertices, len(g.fan)), []).append(g)
    return [groups[key] for key in sorted(groups)]


def _oriented_s(geom: ElementGeometry, i: int, points: np.ndarray) -> np.ndarray:
    nv = geom.n_vertices
    a = geom.vertices[i]
    b = geom.vertices[(i + 1) % nv]
    t = (b - a) if geom.edge_forward[i] else (a - b)
    h = geom.edge_lengths[i]
    return (points - 0.5 * (a + b)) @ t / h ** 2


def interpolate(f, geom: ElementGeometry, k: int, exactness: int | None = None) -> np.ndarray:
    """Local DoF vector of ``f(x, y)``: vertex values and scaled moments."""
    if exactness is None:
        exactness = 2 * k
    nv = geom.n_vertices
    v = geom.vertices
    out = np.empty(n_local_dofs(nv, k))
    out[:nv] = f(v[:, 0], v[:, 1])
    if k >= 2:
        ref = gauss_legendre(exactness)
        for i in range(nv):
            a, b = v[i], v[(i + 1) % nv]
            pts = a + ref.points[:, None] * (b - a)
            s = _oriented_s(geom, i, pts)
            fv = f(pts[:, 0], pts[:, 1])
            for m in range(k - 1):
                out[nv + i * (k - 1) + m] = np.dot(ref.weights, fv * s ** m)
        rule = element_rule(geom, exactness)
        basis = MonomialBasis(k - 2, geom.centroid, geom.diameter, geom)
        fv = f(rule.points[:, 0], rule.points[:, 1])
        out[nv * k:] = (rule.weights * fv) @ basis.eval(rule.points) / geom.area
    return out


def interpolate_global(f, mesh: PolyMesh, dofmap: DofMap, geoms=None) -> np.ndarray:
    """Global DoF vector of ``f``; shared DoFs are computed identically on both sides."""
    from .mesh import element_geometry

    u = np.empty(dofmap.n_dofs)
    for c in range(mesh.n_cells):
        g = geoms[c] if geoms is not None else element_geometry(mesh, c)
        u[dofmap.cell_dofs[c]] = interpolate(f, g, dofmap.degree)
    return u


def dump_projectors(projectors, directory) -> None:
    """Write one CSV per element with the stacked projector matrices."""
    from pathlib import Path

    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    for c, p in enumerate(projectors):
        blocks = [p.pinabla, p.pizero, p.pizero_grad[0], p.pizero_grad[1]]
        np.savetxt(d / f"element_{c:06d}.csv", np.vstack(blocks), delimiter=",", fmt="%.17g")
