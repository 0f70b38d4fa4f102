"""Conforming triangulations: representation, adjacency, vertex patches,
mesh metrics, the plain-text mesh format, and the built-in mesh families
used by the experiment harness.

A :class:`Mesh` is immutable after construction and safe to share between
threads.  All triangles are stored with counterclockwise vertex order.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import (
    DegenerateTriangle,
    InvalidParameter,
    NonConformingMesh,
    ParseError,
    UnknownTriangle,
    UnknownVertex,
)

#: Relative area threshold below which a triangle counts as degenerate.
DEGENERACY_THRESHOLD = 1e-14


def _signed_area(p0, p1, p2):
    return 0.5 * ((p1[0] - p0[0]) * (p2[1] - p0[1]) - (p2[0] - p0[0]) * (p1[1] - p0[1]))


class Mesh:
    """Conforming triangulation of a polygonal domain.

    Parameters
    ----------
    vertices : (nv, 2) array_like
        Vertex coordinates.
    triangles : (nt, 3) array_like
        Vertex-index triples.  Orientation is normalized to
        counterclockwise; the input order is otherwise preserved.

    Attributes
    ----------
    vertices : (nv, 2) ndarray
    triangles : (nt, 3) ndarray
    edges : (ne, 2) ndarray
        Vertex pairs with ``edges[e, 0] < edges[e, 1]``.
    edge_tris : list of tuple
        Incident triangle ids per edge (length 1 or 2).
    tri_edges : (nt, 3) ndarray
        ``tri_edges[t, i]`` is the edge opposite local vertex ``i``.
    neighbors : (nt, 3) ndarray
        Neighbor triangle across the edge opposite local vertex ``i``
        (-1 on the boundary).
    boundary_edge, boundary_vertex : bool ndarrays
    area, diameter, inradius : (nt,) ndarrays
        ``inradius`` is the diameter of the largest inscribed ball,
        ``4 |K| / perimeter``.
    """

    def __init__(self, vertices, triangles):
        v = np.ascontiguousarray(np.asarray(vertices, dtype=float))
        t = np.ascontiguousarray(np.asarray(triangles, dtype=np.int64))
        if v.ndim != 2 or v.shape[1] != 2:
            raise NonConformingMesh("vertices must be an (nv, 2) array")
        if t.ndim != 2 or t.shape[1] != 3:
            raise NonConformingMesh("triangles must be an (nt, 3) array")
        if t.size and (t.min() < 0 or t.max() >= len(v)):
            raise NonConformingMesh("triangle vertex index out of range")
        if len(t) == 0:
            raise NonConformingMesh("mesh has no triangles")

        # normalize to counterclockwise order, reject degenerate triangles
        t = t.copy()
        for k in range(len(t)):
            i, j, l = t[k]
            if len({int(i), int(j), int(l)}) < 3:
                raise NonConformingMesh(f"triangle {k} has repeated vertices")
            a = _signed_area(v[i], v[j], v[l])
            h = max(
                np.linalg.norm(v[j] - v[i]),
                np.linalg.norm(v[l] - v[j]),
                np.linalg.norm(v[i] - v[l]),
            )
            if abs(a) <= DEGENERACY_THRESHOLD * h * h:
                raise DegenerateTriangle(f"triangle {k} has area {a:.3e} (h={h:.3e})")
            if a < 0:
                t[k, 1], t[k, 2] = t[k, 2], t[k, 1]

        self.vertices = v
        self.triangles = t
        self._build_adjacency()
        self._build_metrics()
        self._validate_conformity()
        self._patch_cache: dict[int, VertexPatch] = {}
        for arr in (self.vertices, self.triangles, self.edges, self.tri_edges,
                    self.neighbors, self.boundary_edge, self.boundary_vertex,
                    self.area, self.diameter, self.inradius):
            arr.setflags(write=False)

    # -- construction helpers -------------------------------------------------

    def _build_adjacency(self):
        edge_map: dict[tuple[int, int], int] = {}
        edges = []
        edge_tris: list[list[int]] = []
        nt = len(self.triangles)
        tri_edges = np.empty((nt, 3), dtype=np.int64)
        for k in range(nt):
            tri = self.triangles[k]
            for i in range(3):
                a, b = int(tri[(i + 1) % 3]), int(tri[(i + 2) % 3])
                key = (a, b) if a < b else (b, a)
                e = edge_map.get(key)
                if e is None:
                    e = len(edges)
                    edge_map[key] = e
                    edges.append(key)
                    edge_tris.append([])
                edge_tris[e].append(k)
                tri_edges[k, i] = e
        for e, tris in enumerate(edge_tris):
            if len(tris) > 2:
                raise NonConformingMesh(
                    f"edge {edges[e]} shared by {len(tris)} triangles: {tris}"
                )
        self.edges = np.array(edges, dtype=np.int64).reshape(-1, 2)
        self.edge_tris = [tuple(tris) for tris in edge_tris]
        self.tri_edges = tri_edges

        neighbors = np.full((nt, 3), -1, dtype=np.int64)
        for k in range(nt):
            for i in range(3):
                tris = self.edge_tris[self.tri_edges[k, i]]
                if len(tris) == 2:
                    neighbors[k, i] = tris[0] if tris[1] == k else tris[1]
        self.neighbors = neighbors

        self.boundary_edge = np.array(
            [len(tris) == 1 for tris in self.edge_tris], dtype=bool
        )
        bv = np.zeros(len(self.vertices), dtype=bool)
        for e in np.nonzero(self.boundary_edge)[0]:
            bv[self.edges[e]] = True
        self.boundary_vertex = bv

        incidence: list[list[int]] = [[] for _ in range(len(self.vertices))]
        for k in range(nt):
            for vid in self.triangles[k]:
                incidence[int(vid)].append(k)
        self.vertex_tris = [tuple(lst) for lst in incidence]

    def _build_metrics(self):
        v, t = self.vertices, self.triangles
        p0, p1, p2 = v[t[:, 0]], v[t[:, 1]], v[t[:, 2]]
        e0 = np.linalg.norm(p2 - p1, axis=1)
        e1 = np.linalg.norm(p0 - p2, axis=1)
        e2 = np.linalg.norm(p1 - p0, axis=1)
        cross = (p1[:, 0] - p0[:, 0]) * (p2[:, 1] - p0[:, 1]) - (
            p2[:, 0] - p0[:, 0]
        ) * (p1[:, 1] - p0[:, 1])
        self.area = 0.5 * cross  # positive after normalization
        self.diameter = np.maximum(e0, np.maximum(e1, e2))
        # diameter of the largest inscribed ball
        self.inradius = 4.0 * self.area / (e0 + e1 + e2)

    def _validate_conformity(self):
        # no isolated vertices
        for z, tris in enumerate(self.vertex_tris):
            if not tris:
                raise NonConformingMesh(f"vertex {z} belongs to no triangle")
        # no duplicated triangles (these fool the per-edge incidence counts)
        seen: dict[tuple[int, ...], int] = {}
        for k in range(self.n_triangles):
            key = tuple(sorted(int(v) for v in self.triangles[k]))
            if key in seen:
                raise NonConformingMesh(
                    f"triangles {seen[key]} and {k} use the same vertices"
                )
            seen[key] = k
        # no hanging vertices: a vertex inside the open interior of an edge
        v = self.vertices
        for e, (a, b) in enumerate(self.edges):
            pa, pb = v[a], v[b]
            d = pb - pa
            L2 = float(d @ d)
            for z in range(len(v)):
                if z == a or z == b:
                    continue
                w = v[z] - pa
                s = float(w @ d) / L2
                if s <= 1e-12 or s >= 1.0 - 1e-12:
                    continue
                dist2 = float(w @ w) - s * s * L2
                if dist2 < 1e-24 * L2:
                    raise NonConformingMesh(
                        f"vertex {z} hangs on edge {(int(a), int(b))}"
                    )
        # vertex fans are validated lazily by patch(): non-manifold vertices
        # (bowties) are legal for pure adjacency queries

    # -- patches ---------------------------------------------------------------

    def _walk_patch(self, z):
        """Order the triangles around ``z`` counterclockwise.

        Interior patches start at the triangle whose first spoke has minimal
        polar angle; boundary patches start at the clockwise-most boundary
        spoke so the sweep covers the whole open fan.
        """
        tris = self.vertex_tris[z]
        # first/second spoke endpoints in CCW triangle order
        first = {}
        second = {}
        for k in tris:
            tri = [int(x) for x in self.triangles[k]]
            i = tri.index(z)
            a, b = tri[(i + 1) % 3], tri[(i + 2) % 3]
            if a in first:
                raise NonConformingMesh(
                    f"non-manifold fan at vertex {z}: spoke {a} reused"
                )
            first[a] = k
            second[k] = b
        if self.boundary_vertex[z]:
            # clockwise-most boundary spoke: first of some triangle, second of none
            ends = set(second.values())
            starts = [a for a in first if a not in ends]
            if len(starts) != 1:
                raise NonConformingMesh(f"vertex {z}: boundary fan is not a chain")
            cur = starts[0]
        else:
            def polar(a):
                d = self.vertices[a] - self.vertices[z]
                return math.atan2(d[1], d[0]) % (2 * math.pi)

            cur = min(first, key=polar)
        start = cur
        order = []
        seen = set()
        for _ in range(len(tris)):
            k = first.get(cur)
            if k is None or k in seen:
                raise NonConformingMesh(f"vertex {z}: fan is disconnected")
            order.append(k)
            seen.add(k)
            cur = second[k]
        if not self.boundary_vertex[z] and cur != start:
            raise NonConformingMesh(f"vertex {z}: interior fan does not close")
        return order

    def patch(self, z: int) -> "VertexPatch":
        """Counterclockwise-ordered vertex patch around vertex ``z``."""
        if not 0 <= z < len(self.vertices):
            raise UnknownVertex(f"vertex {z} not in mesh")
        cached = self._patch_cache.get(z)
        if cached is not None:
            return cached
        order = self._walk_patch(z)
        angles = []
        for k in order:
            tri = [int(x) for x in self.triangles[k]]
            i = tri.index(z)
            ea = self.vertices[tri[(i + 1) % 3]] - self.vertices[z]
            eb = self.vertices[tri[(i + 2) % 3]] - self.vertices[z]
            angles.append(
                math.atan2(ea[0] * eb[1] - ea[1] * eb[0], float(ea @ eb))
            )
        patch = VertexPatch(
            vertex=z,
            triangles=tuple(order),
            angles=tuple(angles),
            width=float(self.diameter[list(order)].max()),
            on_boundary=bool(self.boundary_vertex[z]),
        )
        self._patch_cache[z] = patch
        return patch

    # -- queries ---------------------------------------------------------------

    @property
    def n_vertices(self):
        return len(self.vertices)

    @property
    def n_triangles(self):
        return len(self.triangles)

    @property
    def domain_area(self):
        return float(self.area.sum())

    @property
    def mesh_width(self):
        """Global mesh width (max triangle diameter)."""
        return float(self.diameter.max())

    def triangle_vertices(self, k: int) -> np.ndarray:
        """(3, 2) coordinates of triangle ``k``."""
        if not 0 <= k < self.n_triangles:
            raise UnknownTriangle(f"triangle {k} not in mesh")
        return self.vertices[self.triangles[k]]

    def local_index(self, k: int, z: int) -> int:
        """Local index (0..2) of vertex ``z`` in triangle ``k``."""
        tri = [int(x) for x in self.triangles[k]]
        if z not in tri:
            raise UnknownVertex(f"vertex {z} not in triangle {k}")
        return tri.index(z)


@dataclass(frozen=True)
class VertexPatch:
    """Counterclockwise fan of triangles around a vertex.

    ``triangles[j]`` carries the angle ``angles[j]`` at the center vertex;
    consecutive triangles share a spoke edge, and for interior vertices the
    fan closes cyclically.
    """

    vertex: int
    triangles: tuple[int, ...]
    angles: tuple[float, ...]
    width: float
    on_boundary: bool

    @property
    def size(self) -> int:
        return len(self.triangles)


def vertex_patch(mesh: Mesh, z: int) -> VertexPatch:
    """Vertex patch of ``z`` with deterministic counterclockwise ordering."""
    return mesh.patch(z)


def shape_regularity(mesh: Mesh) -> float:
    """max_K h_K / rho_K with rho_K the inscribed-ball diameter."""
    return float((mesh.diameter / mesh.inradius).max())


def triangle_neighborhood(mesh: Mesh, k: int) -> set[int]:
    """All triangles sharing at least a vertex with triangle ``k`` (incl. k)."""
    if not 0 <= k < mesh.n_triangles:
        raise UnknownTriangle(f"triangle {k} not in mesh")
    out: set[int] = set()
    for z in mesh.triangles[k]:
        out.update(mesh.vertex_tris[int(z)])
    return out


# -- plain v1 text format ------------------------------------------------------


def parse_mesh(text: str) -> Mesh:
    """Parse the ``plain v1`` mesh format.

    Line 1 holds ``nv nt``; then nv lines ``x y``; then nt lines ``i j k``
    with 0-based vertex indices.  ``#`` starts a comment.
    """
    rows = []
    for line in text.splitlines():
        body = line.split("#", 1)[0].strip()
        if body:
            rows.append(body.split())
    if not rows:
        raise ParseError("empty mesh file")
    header = rows[0]
    if len(header) != 2:
        raise ParseError(f"expected 'nv nt' header, got {' '.join(header)!r}")
    try:
        nv, nt = int(header[0]), int(header[1])
    except ValueError as exc:
        raise ParseError(f"bad header: {exc}") from None
    if len(rows) != 1 + nv + nt:
        raise ParseError(
            f"expected {1 + nv + nt} data lines, found {len(rows)}"
        )
    try:
        vertices = np.array([[float(c) for c in rows[1 + i]] for i in range(nv)])
        triangles = np.array(
            [[int(c) for c in rows[1 + nv + i]] for i in range(nt)]
        )
    except ValueError as exc:
        raise ParseError(f"bad number: {exc}") from None
    if nv and vertices.shape != (nv, 2):
        raise ParseError("vertex lines must hold exactly two coordinates")
    if nt and triangles.shape != (nt, 3):
        raise ParseError("triangle lines must hold exactly three indices")
    return Mesh(vertices, triangles)


def serialize_mesh(mesh: Mesh) -> str:
    """Serialize to the ``plain v1`` format with 17 significant digits."""
    lines = [f"{mesh.n_vertices} {mesh.n_triangles}"]
    for x, y in mesh.vertices:
        lines.append(f"{x:.17g} {y:.17g}")
    for i, j, k in mesh.triangles:
        lines.append(f"{i} {j} {k}")
    return "\n".join(lines) + "\n"


# -- built-in families ---------------------------------------------------------


def generate_family(kind: str, n: int, t: float | None = None) -> Mesh:
    """Built-in experiment meshes on the unit square.

    ``structured-square``: 2 n^2 triangles, all diagonals in the same
    direction; the two corners covered by a single triangle are
    super-critical.  ``crisscross``: 4 n^2 triangles, every cell center is an
    interior singular vertex with four triangles.  ``perturbed-crisscross``:
    cell centers displaced by ``t * cell / 4`` in the +x direction, which
    moves the centers' singularity measure away from zero monotonically
    in ``t``.
    """
    if n < 1:
        raise InvalidParameter(f"n must be >= 1, got {n}")
    if kind == "structured-square":
        return _structured_square(n)
    if kind == "crisscross":
        return _crisscross(n, 0.0)
    if kind == "perturbed-crisscross":
        if t is None:
            raise InvalidParameter("perturbed-crisscross requires t")
        if not 0.0 <= t <= 1.0:
            raise InvalidParameter(f"t must be in [0, 1], got {t}")
        return _crisscross(n, float(t))
    raise InvalidParameter(f"unknown family kind {kind!r}")


def _grid_vertices(n):
    xs = np.linspace(0.0, 1.0, n + 1)
    vid = lambda i, j: j * (n + 1) + i
    verts = [(xs[i], xs[j]) for j in range(n + 1) for i in range(n + 1)]
    return np.array(verts), vid


def _structured_square(n):
    verts, vid = _grid_vertices(n)
    tris = []
    for j in range(n):
        for i in range(n):
            v00, v10 = vid(i, j), vid(i + 1, j)
            v01, v11 = vid(i, j + 1), vid(i + 1, j + 1)
            tris.append((v00, v10, v11))
            tris.append((v00, v11, v01))
    return Mesh(verts, tris)


def _crisscross(n, t):
    verts, vid = _grid_vertices(n)
    verts = list(map(tuple, verts))
    cell = 1.0 / n
    tris = []
    for j in range(n):
        for i in range(n):
            cx = (i + 0.5) * cell + t * cell / 4.0
            cy = (j + 0.5) * cell
            c = len(verts)
            verts.append((cx, cy))
            v00, v10 = vid(i, j), vid(i + 1, j)
            v01, v11 = vid(i, j + 1), vid(i + 1, j + 1)
            tris.append((v00, v10, c))
            tris.append((v10, v11, c))
            tris.append((v11, v01, c))
            tris.append((v01, v00, c))
    return Mesh(np.array(verts), tris)


def cell_centers(mesh: Mesh, n: int) -> list[int]:
    """Vertex ids of the n^2 cell centers of a (perturbed) crisscross mesh."""
    first = (n + 1) * (n + 1)
    if mesh.n_vertices != first + n * n:
        raise InvalidParameter("mesh is not a crisscross family member")
    return list(range(first, mesh.n_vertices))
