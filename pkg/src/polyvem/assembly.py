"""Local VEM forms and global assembly with Dirichlet elimination.

Element data needed by every nonlinear iteration (projections evaluated at
quadrature nodes, stabilisation matrix, ...) is precomputed once per mesh
and stored in batches of elements sharing the same local sizes, so that each
assembly is a handful of vectorised contractions.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .mesh import ElementGeometry, PolyMesh, element_geometry
from .polyquad import poly_dim
from .vemspace import (DofMap, ElementBatch, ElementProjectors, ProjectorStack, build_dofmap,
                       group_elements, interpolate_global, monomials, projector_stack)

logger = logging.getLogger(__name__)

MODES = ("fixed_point", "newton")


class AssemblyError(ValueError):
    """Non-finite coefficient or inconsistent system dimensions."""


@dataclass(frozen=True, eq=False)
class ElementKernel:
    """Quadrature-level data of one element (or a stacked batch of them).

    Arrays carry a leading element axis when batched.
    """

    cells: np.ndarray      # (E,)
    dofs: np.ndarray       # (E, n) global DoF ids
    points: np.ndarray     # (E, nq, 2)
    weights: np.ndarray    # (E, nq)
    value: np.ndarray      # (E, nq, n)  pizero_k v at the nodes
    grad: np.ndarray       # (E, 2, nq, n) pizero_{k-1} grad v at the nodes
    lower: np.ndarray      # (E, nq, n)  pizero_{k-1} v at the nodes
    mean: np.ndarray       # (E, n)      pizero_0 v
    stab: np.ndarray       # (E, n, n)   (I - D pizero)^T (I - D pizero)

    def __len__(self) -> int:
        return len(self.cells)


def kernel_stack(batch: ElementBatch, proj: ProjectorStack, dofs,
                 exactness: int | None = None) -> ElementKernel:
    """Quadrature data of a batch of elements sharing local sizes."""
    k = proj.degree
    if exactness is None:
        exactness = 2 * k + 2
    pts, w = batch.fan_rule(exactness)
    mk = monomials(pts, k)
    mk1 = mk[..., :poly_dim(k - 1)]
    h = batch.diameter
    s = np.eye(proj.pinabla.shape[-1]) - proj.dof_of_poly @ proj.pizero
    return ElementKernel(
        cells=batch.cells,
        dofs=np.asarray(dofs, dtype=np.int64).reshape(len(batch), -1),
        points=batch.centroid[:, None] + h[:, None, None] * pts,
        weights=w * h[:, None] ** 2,
        value=mk @ proj.pizero,
        grad=np.stack([mk1 @ proj.pizero_grad[:, 0], mk1 @ proj.pizero_grad[:, 1]], axis=1),
        lower=mk1 @ proj.pizero_km1,
        mean=np.einsum("en,enm->em", proj.gram[:, 0], proj.pizero) / (batch.area * h ** 2)[:, None],
        stab=np.swapaxes(s, 1, 2) @ s,
    )


def element_kernel(proj: ElementProjectors, geom: ElementGeometry,
                   exactness: int | None = None, dofs=None) -> ElementKernel:
    """Kernel of a single element; ``dofs`` defaults to the local numbering."""
    stack = ProjectorStack(proj.degree, np.array([geom.cell]), proj.basis.centroid[None],
                           np.array([proj.basis.diameter]), proj.gram[None], proj.pinabla[None],
                           proj.pizero[None], proj.pizero_km1[None], proj.pizero_grad[None],
                           proj.dof_of_poly[None])
    if dofs is None:
        dofs = np.arange(proj.n_dofs)
    return kernel_stack(ElementBatch([geom]), stack, dofs, exactness)


def _checked(fun, t: np.ndarray, kernel: ElementKernel, where: str) -> np.ndarray:
    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        val = np.asarray(fun(t), dtype=float)
    val = np.broadcast_to(val, t.shape)
    bad = ~np.isfinite(val)
    if bad.any():
        idx = np.argwhere(bad)[0]
        cell = int(kernel.cells[idx[0]])
        if len(idx) > 1 and where == "node":
            pt = kernel.points[idx[0], idx[1]]
            loc = f"at point ({pt[0]:.6g}, {pt[1]:.6g})"
        else:
            loc = "at the cell mean"
        raise AssemblyError(
            f"coefficient is not finite in cell {cell} {loc}: "
            f"projected value {t[tuple(idx)]:.6g} gives {val[tuple(idx)]}")
    return val


def _quad_form(left: np.ndarray, w: np.ndarray, right: np.ndarray) -> np.ndarray:
    """sum_q left[e,q,i] w[e,q] right[e,q,j]."""
    return np.matmul((left * w[..., None]).transpose(0, 2, 1), right)


def batch_stiffness(kernel: ElementKernel, kappa, z: np.ndarray,
                    stabilize: bool = True) -> np.ndarray:
    """Local matrices of a_h^E(z; ., .) for every element of ``kernel``.

    ``z`` holds the local DoF vectors, shape (E, n).
    """
    u = np.einsum("eqn,en->eq", kernel.value, z)
    wk = kernel.weights * _checked(kappa, u, kernel, "node")
    out = _quad_form(kernel.grad[:, 0], wk, kernel.grad[:, 0])
    out += _quad_form(kernel.grad[:, 1], wk, kernel.grad[:, 1])
    if stabilize:
        c = np.einsum("en,en->e", kernel.mean, z)
        out += _checked(kappa, c, kernel, "mean")[:, None, None] * kernel.stab
    return out


def batch_newton(kernel: ElementKernel, kappa_u, z: np.ndarray,
                 stabilize: bool = True) -> np.ndarray:
    """Local matrices of b_h^E(z; delta, v), rows indexed by v, columns by delta."""
    u = np.einsum("eqn,en->eq", kernel.value, z)
    ku = _checked(kappa_u, u, kernel, "node")
    gz = np.einsum("edqn,en->edq", kernel.grad, z)
    out = _quad_form(kernel.grad[:, 0], kernel.weights * ku * gz[:, 0], kernel.value)
    out += _quad_form(kernel.grad[:, 1], kernel.weights * ku * gz[:, 1], kernel.value)
    if stabilize:
        c = np.einsum("en,en->e", kernel.mean, z)
        kc = _checked(kappa_u, c, kernel, "mean")
        sz = np.einsum("eij,ej->ei", kernel.stab, z)
        out += kc[:, None, None] * sz[:, :, None] * kernel.mean[:, None, :]
    return out


def batch_load(kernel: ElementKernel, f) -> np.ndarray:
    """Local vectors (f, pizero_{k-1} v)_E, equal to (pizero_{k-1} f, v)_E."""
    p = kernel.points
    fq = np.broadcast_to(np.asarray(f(p[..., 0], p[..., 1]), dtype=float), p.shape[:-1])
    return np.einsum("eqn,eq->en", kernel.lower, kernel.weights * fq)


def local_stiffness(proj: ElementProjectors, geom: ElementGeometry, kappa, z,
                    stabilize: bool = True) -> np.ndarray:
    kr = element_kernel(proj, geom)
    return batch_stiffness(kr, kappa, np.asarray(z, dtype=float)[None], stabilize)[0]


def local_newton(proj: ElementProjectors, geom: ElementGeometry, kappa_u, z,
                 stabilize: bool = True) -> np.ndarray:
    kr = element_kernel(proj, geom)
    return batch_newton(kr, kappa_u, np.asarray(z, dtype=float)[None], stabilize)[0]


def local_load(proj: ElementProjectors, geom: ElementGeometry, f, k: int | None = None) -> np.ndarray:
    if k is not None and k != proj.degree:
        raise ValueError("degree does not match the projectors")
    return batch_load(element_kernel(proj, geom), f)[0]


class Discretization:
    """Mesh, DoF map, projectors and batched element kernels for one degree.

    Parameters
    ----------
    mesh : PolyMesh
    degree : int
        Polynomial order k >= 1.
    exactness : int, optional
        Quadrature exactness of the nonlinear terms and loads; 2k+2 by default.
    """

    def __init__(self, mesh: PolyMesh, degree: int, exactness: int | None = None):
        self.mesh = mesh
        self.degree = degree
        self.exactness = 2 * degree + 2 if exactness is None else exactness
        self.dofmap: DofMap = build_dofmap(mesh, degree)
        self.geometries = [element_geometry(mesh, c) for c in range(mesh.n_cells)]
        self.batches = []
        self.stacks = []
        for group in group_elements(self.geometries):
            eb = ElementBatch(group)
            ps = projector_stack(eb, degree)
            dofs = np.array([self.dofmap.cell_dofs[c] for c in eb.cells])
            self.stacks.append(ps)
            self.batches.append(kernel_stack(eb, ps, dofs, self.exactness))
        rows, cols = [], []
        for b in self.batches:
            n = b.dofs.shape[1]
            rows.append(np.repeat(b.dofs, n, axis=1).ravel())
            cols.append(np.tile(b.dofs, (1, n)).ravel())
        self._rows = np.concatenate(rows)
        self._cols = np.concatenate(cols)
        self.interior = self.dofmap.interior
        self.boundary = np.flatnonzero(self.dofmap.boundary)

    @property
    def n_dofs(self) -> int:
        return self.dofmap.n_dofs

    def _sparse(self, blocks: list[np.ndarray]) -> sp.csr_matrix:
        data = np.concatenate([b.ravel() for b in blocks])
        n = self.n_dofs
        return sp.coo_matrix((data, (self._rows, self._cols)), shape=(n, n)).tocsr()

    def _local(self, z: np.ndarray) -> list[np.ndarray]:
        z = np.asarray(z, dtype=float)
        if z.shape != (self.n_dofs,):
            raise AssemblyError(
                f"dimension mismatch: got {z.shape}, expected ({self.n_dofs},)")
        return [z[b.dofs] for b in self.batches]

    def stiffness(self, kappa, z, stabilize: bool = True) -> sp.csr_matrix:
        zl = self._local(z)
        return self._sparse([batch_stiffness(b, kappa, x, stabilize)
                             for b, x in zip(self.batches, zl)])

    def newton_matrix(self, kappa_u, z, stabilize: bool = True) -> sp.csr_matrix:
        zl = self._local(z)
        return self._sparse([batch_newton(b, kappa_u, x, stabilize)
                             for b, x in zip(self.batches, zl)])

    def load(self, f) -> np.ndarray:
        out = np.zeros(self.n_dofs)
        for b in self.batches:
            np.add.at(out, b.dofs.ravel(), batch_load(b, f).ravel())
        return out

    def interpolate(self, f) -> np.ndarray:
        return interpolate_global(f, self.mesh, self.dofmap, self.geometries)

    def boundary_values(self, problem) -> np.ndarray:
        """Full-length vector carrying the interpolated Dirichlet datum on boundary DoFs."""
        g = np.zeros(self.n_dofs)
        if problem.boundary_g is not None:
            g[self.boundary] = self.interpolate(problem.boundary_g)[self.boundary]
        return g

    @property
    def projectors(self) -> list[ElementProjectors]:
        """Per-element projector matrices in cell order."""
        out = [None] * self.mesh.n_cells
        for ps in self.stacks:
            for j, c in enumerate(ps.cells):
                out[c] = ps.element(j, self.geometries[c])
        return out


def assemble_global(disc: Discretization, problem, z, mode: str = "fixed_point",
                    stabilize: bool = True):
    """Reduced system on the interior DoFs.

    ``fixed_point``: matrix sum_E a_h^E(z), rhs = load - A_IB g_B with the
    boundary values taken from ``z``.
    ``newton``: matrix sum_E (a_h^E + b_h^E)(z), rhs = (load - A(z) z)_I.
    """
    if mode not in MODES:
        raise ValueError(f"unknown mode {mode!r}")
    z = np.asarray(z, dtype=float)
    a = disc.stiffness(problem.kappa, z, stabilize)
    load = disc.load(problem.f)
    ii = disc.interior
    bb = disc.boundary
    if mode == "fixed_point":
        rhs = load[ii] - a[ii][:, bb] @ z[bb]
        return a[ii][:, ii], rhs
    jac = a + disc.newton_matrix(problem.kappa_u, z, stabilize)
    rhs = (load - a @ z)[ii]
    return jac[ii][:, ii], rhs


def dump_coo(matrix, path) -> None:
    """Write ``i j value`` lines of a sparse matrix."""
    m = sp.coo_matrix(matrix)
    order = np.lexsort((m.col, m.row))
    with open(path, "w") as fh:
        for i, j, v in zip(m.row[order], m.col[order], m.data[order]):
            fh.write(f"{int(i)} {int(j)} {float(v)!r}\n")
