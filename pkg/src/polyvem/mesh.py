"""Polygonal meshes of the plane: construction, generators, geometry and I/O."""
from __future__ import annotations

import itertools
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import NamedTuple, Sequence

import numpy as np
from scipy.spatial import Delaunay, cKDTree

logger = logging.getLogger(__name__)

MESH_KINDS = ("squares", "triangles", "random_quads", "voronoi")
LLOYD_ITERATIONS = 100
QUAD_PERTURBATION = 0.25


class MeshError(ValueError):
    """Invalid mesh topology, geometry or file contents."""


def _readonly(a: np.ndarray) -> np.ndarray:
    a.setflags(write=False)
    return a


def _signed_area(p: np.ndarray) -> float:
    x, y = p[:, 0], p[:, 1]
    return 0.5 * float(np.dot(x, np.roll(y, -1)) - np.dot(np.roll(x, -1), y))


@dataclass(frozen=True, eq=False)
class PolyMesh:
    """A conforming polygonal mesh with derived edge topology.

    Attributes
    ----------
    vertices : ndarray, shape (nv, 2)
    cells : tuple of int ndarrays
        Counter-clockwise vertex rings.
    edges : ndarray, shape (ne, 2)
        Unique vertex pairs, stored as (lower index, higher index), numbered
        in order of first appearance while walking the cells.
    edge_cells : ndarray, shape (ne, 2)
        Adjacent cells; the second entry is -1 on boundary edges.
    cell_edges : tuple of int ndarrays
        For each cell, the edge index of local edge ``i`` (from ring vertex
        ``i`` to ring vertex ``i + 1``).
    boundary_vertex, boundary_edge : bool ndarrays
    """

    vertices: np.ndarray
    cells: tuple
    edges: np.ndarray
    edge_cells: np.ndarray
    cell_edges: tuple
    boundary_vertex: np.ndarray
    boundary_edge: np.ndarray

    @property
    def n_vertices(self) -> int:
        return len(self.vertices)

    @property
    def n_cells(self) -> int:
        return len(self.cells)

    @property
    def n_edges(self) -> int:
        return len(self.edges)

    def cell_areas(self) -> np.ndarray:
        return np.array([_signed_area(self.vertices[c]) for c in self.cells])

    def h(self) -> float:
        """Largest element diameter."""
        return max(_diameter(self.vertices[c]) for c in self.cells)


def build_mesh(vertices, cells: Sequence[Sequence[int]]) -> PolyMesh:
    """Validate vertex rings and derive edge/boundary topology.

    Rings given clockwise are reversed.
    """
    verts = np.array(vertices, dtype=float)
    if verts.ndim != 2 or verts.shape[1] != 2:
        raise MeshError("vertices must have shape (nv, 2)")
    nv = len(verts)
    if nv:
        span = np.ptp(verts, axis=0)
        tol = 1e-12 * max(float(np.hypot(*span)), 1e-300)
        pairs = cKDTree(verts).query_pairs(tol)
        if pairs:
            i, j = min(pairs)
            raise MeshError(f"coincident vertices {i} and {j}")

    rings = []
    for c, ring in enumerate(cells):
        ring = np.array(ring, dtype=np.int64)
        if len(ring) < 3:
            raise MeshError(f"cell {c} has fewer than 3 vertices")
        if ring.min() < 0 or ring.max() >= nv:
            raise MeshError(f"out-of-range index in cell {c}")
        if len(np.unique(ring)) != len(ring):
            raise MeshError(f"cell {c} has a repeated vertex")
        area = _signed_area(verts[ring])
        scale = _diameter(verts[ring]) ** 2
        if abs(area) <= 1e-14 * scale:
            raise MeshError(f"zero-area cell {c}")
        if area < 0:
            ring = ring[::-1].copy()
        rings.append(_readonly(ring))

    edge_index: dict[tuple[int, int], int] = {}
    edge_list = []
    adj: list[list[int]] = []
    cell_edges = []
    for c, ring in enumerate(rings):
        local = np.empty(len(ring), dtype=np.int64)
        for i, (a, b) in enumerate(zip(ring, np.roll(ring, -1))):
            key = (int(a), int(b)) if a < b else (int(b), int(a))
            e = edge_index.get(key)
            if e is None:
                e = edge_index[key] = len(edge_list)
                edge_list.append(key)
                adj.append([c])
            else:
                adj[e].append(c)
                if len(adj[e]) > 2:
                    raise MeshError(f"edge {key} shared by more than two cells")
            local[i] = e
        cell_edges.append(_readonly(local))

    edges = np.array(edge_list, dtype=np.int64).reshape(-1, 2)
    edge_cells = np.array([a + [-1] * (2 - len(a)) for a in adj], dtype=np.int64).reshape(-1, 2)
    boundary_edge = edge_cells[:, 1] < 0
    boundary_vertex = np.zeros(nv, dtype=bool)
    boundary_vertex[edges[boundary_edge].ravel()] = True
    return PolyMesh(
        _readonly(verts), tuple(rings), _readonly(edges), _readonly(edge_cells),
        tuple(cell_edges), _readonly(boundary_vertex), _readonly(boundary_edge),
    )


# -- geometry -----------------------------------------------------------------

def _diameter(p: np.ndarray) -> float:
    d = p[:, None, :] - p[None, :, :]
    return float(np.sqrt((d ** 2).sum(-1).max()))


class Edge(NamedTuple):
    endpoints: tuple
    length: float
    normal: np.ndarray


@dataclass(frozen=True, eq=False)
class ElementGeometry:
    """Everything the projectors and quadrature need about one polygon.

    ``edge_forward[i]`` is True when local edge ``i`` runs from the lower to
    the higher global vertex index; edge moments are oriented that way so
    neighbouring elements agree.
    """

    cell: int
    vertices: np.ndarray
    vertex_ids: np.ndarray
    area: float
    centroid: np.ndarray
    diameter: float
    edge_lengths: np.ndarray
    normals: np.ndarray
    edge_forward: np.ndarray
    fan: np.ndarray

    @property
    def n_vertices(self) -> int:
        return len(self.vertices)

    @property
    def edges(self) -> list[Edge]:
        p = self.vertices
        q = np.roll(p, -1, axis=0)
        return [Edge((p[i], q[i]), float(self.edge_lengths[i]), self.normals[i])
                for i in range(len(p))]

    @property
    def perimeter(self) -> float:
        return float(self.edge_lengths.sum())


def _ear_clip(p: np.ndarray) -> list[tuple[int, int, int]]:
    idx = list(range(len(p)))
    tris = []

    def cross(a, b, c):
        return (p[b, 0] - p[a, 0]) * (p[c, 1] - p[a, 1]) - (p[b, 1] - p[a, 1]) * (p[c, 0] - p[a, 0])

    def inside(q, a, b, c):
        return cross(a, b, q) >= 0 and cross(b, c, q) >= 0 and cross(c, a, q) >= 0

    guard = 0
    while len(idx) > 3:
        n = len(idx)
        for i in range(n):
            a, b, c = idx[i - 1], idx[i], idx[(i + 1) % n]
            if cross(a, b, c) <= 0:
                continue
            if any(inside(q, a, b, c) for q in idx if q not in (a, b, c)):
                continue
            tris.append((a, b, c))
            del idx[i]
            break
        else:
            raise MeshError("ear clipping failed; polygon is not simple")
        guard += 1
        if guard > len(p):
            raise MeshError("ear clipping failed; polygon is not simple")
    tris.append(tuple(idx))
    return tris


def polygon_geometry(points, vertex_ids=None, cell: int = -1) -> ElementGeometry:
    """Geometry of a single counter-clockwise polygon."""
    p = np.array(points, dtype=float)
    if vertex_ids is None:
        vertex_ids = np.arange(len(p))
    vertex_ids = np.asarray(vertex_ids, dtype=np.int64)
    x, y = p[:, 0], p[:, 1]
    xn, yn = np.roll(x, -1), np.roll(y, -1)
    cr = x * yn - xn * y
    area = 0.5 * cr.sum()
    if area <= 0:
        raise MeshError(f"cell {cell} is not counter-clockwise or has zero area")
    centroid = np.array([((x + xn) * cr).sum(), ((y + yn) * cr).sum()]) / (6.0 * area)

    d = np.roll(p, -1, axis=0) - p
    lengths = np.hypot(d[:, 0], d[:, 1])
    normals = np.column_stack([d[:, 1], -d[:, 0]]) / lengths[:, None]
    forward = vertex_ids < np.roll(vertex_ids, -1)

    q = np.roll(p, -1, axis=0)
    fan_area = 0.5 * ((p[:, 0] - centroid[0]) * (q[:, 1] - centroid[1])
                      - (p[:, 1] - centroid[1]) * (q[:, 0] - centroid[0]))
    if np.all(fan_area > 1e-12 * area):
        fan = np.stack([np.broadcast_to(centroid, p.shape), p, q], axis=1)
    else:
        fan = np.array([[p[a], p[b], p[c]] for a, b, c in _ear_clip(p)])

    return ElementGeometry(
        cell=cell, vertices=_readonly(p), vertex_ids=_readonly(vertex_ids),
        area=float(area), centroid=_readonly(centroid), diameter=_diameter(p),
        edge_lengths=_readonly(lengths), normals=_readonly(normals),
        edge_forward=_readonly(forward), fan=_readonly(np.ascontiguousarray(fan)),
    )


def element_geometry(mesh: PolyMesh, cell: int) -> ElementGeometry:
    ring = mesh.cells[cell]
    return polygon_geometry(mesh.vertices[ring], ring, cell)


# -- regularity ---------------------------------------------------------------

@dataclass(frozen=True)
class RegularityReport:
    min_edge_ratio: float
    min_star_ratio: float
    nonconvex_cells: int


def is_convex(p: np.ndarray, tol: float = 1e-12) -> bool:
    d = np.roll(p, -1, axis=0) - p
    dn = np.roll(d, -1, axis=0)
    cr = d[:, 0] * dn[:, 1] - d[:, 1] * dn[:, 0]
    scale = float((np.hypot(d[:, 0], d[:, 1]) ** 2).max())
    return bool(np.all(cr >= -tol * scale))


def inradius(p: np.ndarray) -> float:
    """Radius of the largest disc inside a convex polygon.

    Enumerates triples of edge lines, takes the point equidistant from the
    three, and keeps the largest radius that is feasible for every edge.
    """
    d = np.roll(p, -1, axis=0) - p
    ln = np.hypot(d[:, 0], d[:, 1])
    n = np.column_stack([d[:, 1], -d[:, 0]]) / ln[:, None]
    c = (n * p).sum(1)
    scale = _diameter(p)
    best = 0.0
    for tri in itertools.combinations(range(len(p)), 3):
        tri = list(tri)
        # n_i . x + r = c_i
        a = np.column_stack([n[tri], np.ones(3)])
        if abs(np.linalg.det(a)) < 1e-12:
            continue
        x0, y0, r = np.linalg.solve(a, c[tri])
        if r <= best:
            continue
        dist = c - n @ np.array([x0, y0])
        if np.all(dist >= r - 1e-12 * scale):
            best = r
    return float(best)


def regularity_report(mesh: PolyMesh) -> RegularityReport:
    edge_ratio = np.inf
    star_ratio = np.inf
    nonconvex = 0
    for ring in mesh.cells:
        p = mesh.vertices[ring]
        h = _diameter(p)
        ln = np.hypot(*(np.roll(p, -1, axis=0) - p).T)
        edge_ratio = min(edge_ratio, float(ln.min()) / h)
        if is_convex(p):
            star_ratio = min(star_ratio, inradius(p) / h)
        else:
            nonconvex += 1
    return RegularityReport(float(edge_ratio), float(star_ratio), nonconvex)


# -- generators ---------------------------------------------------------------

def _grid(n: int) -> np.ndarray:
    t = np.arange(n + 1) / n
    xx, yy = np.meshgrid(t, t)
    return np.column_stack([xx.ravel(), yy.ravel()])


def _squares_cells(n: int) -> list[list[int]]:
    cells = []
    for j in range(n):
        for i in range(n):
            v = j * (n + 1) + i
            cells.append([v, v + 1, v + n + 2, v + n + 1])
    return cells


def _triangle_cells(n: int) -> list[list[int]]:
    cells = []
    for a, b, c, d in _squares_cells(n):
        cells.append([a, b, c])
        cells.append([a, c, d])
    return cells


def _perturbed_grid(n: int, rng: np.random.Generator) -> np.ndarray:
    pts = _grid(n)
    interior = (pts > 0).all(1) & (pts < 1).all(1)
    m = int(interior.sum())
    r = QUAD_PERTURBATION / n * np.sqrt(rng.random(m))
    theta = 2 * np.pi * rng.random(m)
    pts[interior] += np.column_stack([r * np.cos(theta), r * np.sin(theta)])
    return pts


def _voronoi_cells(seeds: np.ndarray, margin: float):
    """Voronoi cells of ``seeds`` clipped to the unit square.

    Seeds within ``margin`` of a side are mirrored across it. A mirrored seed
    only ever cuts the part of a cell lying outside the square, so a cell
    whose vertices all land inside the square is exactly the clipped cell.
    Cells are read off the Delaunay triangulation: the vertices of the cell
    of ``p`` are the circumcentres of the triangles around ``p``.

    Returns (circumcentres, ring triangle ids, ring lengths), or None when
    the margin was too thin.
    """
    parts = [seeds]
    for axis in (0, 1):
        for side in (0.0, 1.0):
            m = seeds[np.abs(seeds[:, axis] - side) < margin].copy()
            m[:, axis] = 2 * side - m[:, axis]
            parts.append(m)
    pts = np.vstack(parts)
    n = len(seeds)
    tri = Delaunay(pts)
    if (tri.convex_hull < n).any():
        return None
    simp = tri.simplices
    a, b, c = pts[simp[:, 0]], pts[simp[:, 1]], pts[simp[:, 2]]
    ab, ac = b - a, c - a
    d = 2 * (ab[:, 0] * ac[:, 1] - ab[:, 1] * ac[:, 0])
    ab2, ac2 = (ab ** 2).sum(1), (ac ** 2).sum(1)
    cc = a + np.column_stack([ac[:, 1] * ab2 - ab[:, 1] * ac2,
                              ab[:, 0] * ac2 - ac[:, 0] * ab2]) / d[:, None]

    owner = simp.ravel()
    tid = np.repeat(np.arange(len(simp)), 3)
    sel = owner < n
    owner, tid = owner[sel], tid[sel]
    rel = cc[tid] - seeds[owner]
    order = np.lexsort((np.arctan2(rel[:, 1], rel[:, 0]), owner))
    owner, tid = owner[order], tid[order]
    used = cc[tid]
    if used.min() < -1e-9 or used.max() > 1 + 1e-9:
        return None
    lens = np.bincount(owner, minlength=n)
    return cc, tid, lens


def _clipped_voronoi(seeds: np.ndarray):
    margin = 4.0 / np.sqrt(len(seeds))
    while True:
        out = _voronoi_cells(seeds, margin)
        if out is not None:
            return out
        if margin >= 1.0:
            raise MeshError("failed to clip Voronoi diagram to the unit square")
        margin = min(1.0, 2 * margin)


def _centroids(cc: np.ndarray, tid: np.ndarray, lens: np.ndarray) -> np.ndarray:
    start = np.concatenate([[0], np.cumsum(lens)[:-1]])
    nxt = np.arange(len(tid)) + 1
    nxt[start + lens - 1] = start
    p = cc[tid]
    q = p[nxt]
    cr = p[:, 0] * q[:, 1] - q[:, 0] * p[:, 1]
    cell = np.repeat(np.arange(len(lens)), lens)
    a = np.bincount(cell, cr) / 2
    cx = np.bincount(cell, (p[:, 0] + q[:, 0]) * cr) / (6 * a)
    cy = np.bincount(cell, (p[:, 1] + q[:, 1]) * cr) / (6 * a)
    return np.column_stack([cx, cy])


def _voronoi_mesh(n: int, rng: np.random.Generator) -> PolyMesh:
    seeds = rng.random((n * n, 2))
    for _ in range(LLOYD_ITERATIONS):
        seeds = _centroids(*_clipped_voronoi(seeds))
    cc, tid, lens = _clipped_voronoi(seeds)

    used, inverse = np.unique(tid, return_inverse=True)
    pts = cc[used].copy()
    tol = 1e-10
    pts[np.abs(pts) < tol] = 0.0
    pts[np.abs(pts - 1) < tol] = 1.0
    # circumcentres of cocircular seed groups coincide; merge them
    parent = np.arange(len(pts))

    def root(i):
        while parent[i] != i:
            i = parent[i]
        return i

    for i, j in sorted(cKDTree(pts).query_pairs(1e-9)):
        ri, rj = root(i), root(j)
        if ri != rj:
            parent[max(ri, rj)] = min(ri, rj)
    parent = np.array([root(i) for i in range(len(pts))])
    keep = np.unique(parent)
    renum = np.full(len(pts), -1)
    renum[keep] = np.arange(len(keep))
    flat = renum[parent][inverse]

    cells = []
    for ring in np.split(flat, np.cumsum(lens)[:-1]):
        ring = ring.tolist()
        cells.append([v for i, v in enumerate(ring) if v != ring[i - 1]])
    return build_mesh(pts[keep], cells)


def generate(kind: str, n: int, seed: int = 0) -> PolyMesh:
    """Mesh of the unit square from one of the four families.

    ``squares`` and ``triangles`` are uniform n-by-n grids (triangles split
    along the main diagonal); ``random_quads`` perturbs interior grid
    vertices by at most 0.25/n; ``voronoi`` relaxes n*n random seeds with
    Lloyd iterations and keeps the clipped Voronoi cells.
    """
    if n < 1:
        raise MeshError("n must be at least 1")
    if kind == "squares":
        return build_mesh(_grid(n), _squares_cells(n))
    if kind == "triangles":
        return build_mesh(_grid(n), _triangle_cells(n))
    rng = np.random.default_rng(seed)
    if kind in ("random_quads", "quads"):
        return build_mesh(_perturbed_grid(n, rng), _squares_cells(n))
    if kind == "voronoi":
        return _voronoi_mesh(n, rng)
    raise MeshError(f"unknown mesh kind {kind!r}")


# -- I/O ----------------------------------------------------------------------

def write_mesh(mesh: PolyMesh, path) -> None:
    """Write the plain-text ``.pmesh`` format."""
    lines = [f"{mesh.n_vertices} {mesh.n_cells}"]
    lines += [f"{x!r} {y!r}" for x, y in mesh.vertices.tolist()]
    lines += [" ".join(map(str, [len(c), *c.tolist()])) for c in mesh.cells]
    Path(path).write_text("\n".join(lines) + "\n")


def read_mesh(path) -> PolyMesh:
    text = Path(path).read_text()
    lines = [ln for ln in text.splitlines() if ln.strip()]
    if not lines:
        raise MeshError("missing header")
    head = lines[0].split()
    try:
        nv, nc = (int(t) for t in head)
    except ValueError:
        raise MeshError(f"malformed header: {lines[0]!r}") from None
    if nv < 0 or nc < 0:
        raise MeshError(f"malformed header: {lines[0]!r}")

    body = lines[1:]
    if len(body) < nv or any(len(ln.split()) != 2 for ln in body[:nv]):
        raise MeshError("vertex count mismatch")
    try:
        verts = [[float(t) for t in ln.split()] for ln in body[:nv]]
    except ValueError as exc:
        raise MeshError(f"parse failure in vertex block: {exc}") from None

    cell_lines = body[nv:]
    if len(cell_lines) != nc:
        raise MeshError("cell count mismatch")
    cells = []
    for lineno, ln in enumerate(cell_lines, start=nv + 2):
        try:
            tok = [int(t) for t in ln.split()]
        except ValueError:
            raise MeshError(f"parse failure at line {lineno}") from None
        if not tok or tok[0] != len(tok) - 1:
            raise MeshError(f"parse failure at line {lineno}: ring length")
        cells.append(tok[1:])
    return build_mesh(np.array(verts).reshape(-1, 2), cells)
