"""Singularity measure, critical vertex sets, companion triangles, Robinson
classification, extended regions, and the overlap constant.

The singularity measure of a vertex looks at sums of consecutive fan angles:
a vertex is singular exactly when every pair of consecutive angles sums to a
multiple of pi (spoke edges pairwise collinear).  Constraining the pressure
at such vertices is what makes the Scott-Vogelius element stable, and
near-singular vertices are captured by the eta-relaxed sets.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np
from shapely.geometry import Point, Polygon
from shapely.ops import unary_union

from .errors import (
    AllVerticesCritical,
    InvalidParameter,
    MissingCompanion,
)
from .mesh import Mesh, VertexPatch, triangle_neighborhood, vertex_patch

#: Threshold below which a floating-point Theta counts as exactly singular.
SINGULAR_EPS = 1e-12


def theta(patch: VertexPatch) -> float:
    """Local singularity measure: max |sin(theta_i + theta_(i+1))|.

    Interior vertices use all cyclic consecutive pairs, boundary vertices the
    open chain of pairs; a boundary vertex with a single triangle measures 0.
    """
    angles = patch.angles
    n = len(angles)
    if patch.on_boundary:
        if n == 1:
            return 0.0
        pairs = [(angles[i], angles[i + 1]) for i in range(n - 1)]
    else:
        pairs = [(angles[i], angles[(i + 1) % n]) for i in range(n)]
    return max(abs(math.sin(a + b)) for a, b in pairs)


def critical_sets(mesh: Mesh, eta: float) -> tuple[list[int], list[int]]:
    """Eta-critical vertices and their super-critical subset.

    Returns ``(C, SC)`` with ``C = {z : Theta(z) <= eta}`` and
    ``SC = {z in C : N_z in {1, 3}}``.  At ``eta = 0`` the membership test
    uses the floating-point tolerance :data:`SINGULAR_EPS`.
    """
    if not 0.0 <= eta <= 1.0:
        raise InvalidParameter(f"eta must be in [0, 1], got {eta}")
    # the floating-point floor keeps C(0) subset of C(eta) for tiny eta
    bound = max(eta, SINGULAR_EPS)
    crit = []
    super_crit = []
    for z in range(mesh.n_vertices):
        patch = vertex_patch(mesh, z)
        if theta(patch) <= bound:
            crit.append(z)
            if patch.size in (1, 3):
                super_crit.append(z)
    return crit, super_crit


def theta_min(mesh: Mesh, eta: float = 0.0) -> float:
    """Global singularity measure: min Theta over vertices outside C(eta)."""
    crit, _ = critical_sets(mesh, eta)
    excluded = set(crit)
    values = [
        theta(vertex_patch(mesh, z))
        for z in range(mesh.n_vertices)
        if z not in excluded
    ]
    if not values:
        raise AllVerticesCritical(f"every vertex is eta-critical at eta={eta}")
    return min(values)


def companions(mesh: Mesh, z: int) -> tuple[int, int]:
    """Companion pair (K_z, K_z') of a super-critical vertex.

    ``K_z`` is the first patch triangle when the patch has one triangle and
    the middle one when it has three.  ``K_z'`` is an edge-neighbor of
    ``K_z`` outside the patch, preferring the neighbor across the edge of
    ``K_z`` opposite ``z``; if that edge lies on the boundary, the qualifying
    neighbor with the smallest triangle id is taken.
    """
    patch = vertex_patch(mesh, z)
    if patch.size not in (1, 3):
        raise InvalidParameter(
            f"vertex {z} has {patch.size} triangles; companions need 1 or 3"
        )
    kz = patch.triangles[0] if patch.size == 1 else patch.triangles[1]
    in_patch = set(patch.triangles)
    loc = mesh.local_index(kz, z)
    opposite = int(mesh.neighbors[kz, loc])
    if opposite >= 0 and opposite not in in_patch:
        return kz, opposite
    candidates = sorted(
        int(nb)
        for nb in mesh.neighbors[kz]
        if nb >= 0 and int(nb) not in in_patch
    )
    if not candidates:
        raise MissingCompanion(
            f"triangle {kz} of vertex {z} has no edge-neighbor outside the patch"
        )
    return kz, candidates[0]


def robinson_classify(mesh: Mesh, eta: float) -> dict[int, bool]:
    """Robinson flag for every super-critical vertex of C(eta).

    A super-critical vertex is Robinson when its extended patch
    ``T*_z = T_z + {K_z'}`` meets no other super-critical extended patch and
    the extended region contains no further eta-critical vertex.
    """
    crit, super_crit = critical_sets(mesh, eta)
    crit_set = set(crit)
    star: dict[int, set[int]] = {}
    for z in super_crit:
        kz, kzp = companions(mesh, z)
        star[z] = set(vertex_patch(mesh, z).triangles) | {kzp}
    flags: dict[int, bool] = {}
    for z in super_crit:
        isolated = all(
            not (star[z] & star[y]) for y in super_crit if y != z
        )
        region_vertices = {
            int(v) for kt in star[z] for v in mesh.triangles[kt]
        }
        clean = region_vertices & crit_set <= {z}
        flags[z] = bool(isolated and clean)
    return flags


def _min_area_enclosing_triangle(points: np.ndarray) -> np.ndarray:
    """Small enclosing triangle by brute force over candidate support lines.

    Candidates are the hull edge directions (flush sides) plus, for every
    pair of non-parallel flush sides, a closing side perpendicular to their
    angle bisector; the smallest candidate containing the hull wins.  For
    parallel-edge hulls (e.g. two triangles forming a parallelogram) the
    bisector closure recovers the exact optimum.  Diagnostic use only.
    """
    hull = Polygon(points).convex_hull
    coords = np.asarray(hull.exterior.coords[:-1])
    nh = len(coords)
    normals = []
    for i in range(nh):
        d = coords[(i + 1) % nh] - coords[i]
        norm = np.linalg.norm(d)
        if norm < 1e-15:
            continue
        d = d / norm
        normals.append(np.array([-d[1], d[0]]))
    candidates = []
    for a in range(len(normals)):
        for b in range(a + 1, len(normals)):
            for c in range(b + 1, len(normals)):
                candidates.append((normals[a], normals[b], normals[c]))
            # closing side perpendicular to the bisector of the two normals
            s = normals[a] + normals[b]
            if np.linalg.norm(s) > 1e-12:
                candidates.append((normals[a], normals[b], -s / np.linalg.norm(s)))
    best = None
    best_area = math.inf
    for triple in candidates:
        tri = _support_triangle(coords, triple)
        if tri is None:
            continue
        area = abs(
            0.5
            * (
                (tri[1, 0] - tri[0, 0]) * (tri[2, 1] - tri[0, 1])
                - (tri[2, 0] - tri[0, 0]) * (tri[1, 1] - tri[0, 1])
            )
        )
        if area < best_area and Polygon(tri).buffer(1e-9 * math.sqrt(area)).contains(
            hull
        ):
            best_area = area
            best = tri
    if best is None:
        # fully degenerate hull: circumscribe an equilateral triangle
        cx, cy = coords.mean(axis=0)
        r = 1.01 * max(np.max(np.linalg.norm(coords - [cx, cy], axis=1)), 1e-300)
        best = np.array(
            [
                [cx + 2 * r, cy],
                [cx - r, cy + r * math.sqrt(3.0)],
                [cx - r, cy - r * math.sqrt(3.0)],
            ]
        )
    return best


def _support_triangle(coords, normal_triple):
    lines = []
    for n in normal_triple:
        # outward support line: shift to the extreme point along n
        offsets = coords @ n
        lines.append((n, offsets.max()))
    tri = []
    for i in range(3):
        (n1, c1), (n2, c2) = lines[i], lines[(i + 1) % 3]
        det = n1[0] * n2[1] - n1[1] * n2[0]
        if abs(det) < 1e-12:
            return None
        x = (c1 * n2[1] - c2 * n1[1]) / det
        y = (n1[0] * c2 - n2[0] * c1) / det
        tri.append((x, y))
    return np.asarray(tri)


@dataclass
class ExtendedRegion:
    """Region around a super-critical vertex used for overlap accounting."""

    vertex: int
    companion: tuple[int, int]
    triangles: tuple[int, ...]  # omega(K_z) union omega(K_z')
    ext_triangles: tuple[np.ndarray, np.ndarray]  # K_z^ext, K_z'^ext
    delta: float  # max dist(ext vertex, companion)/h, diagnostic

    def polygon(self, mesh: Mesh) -> Polygon:
        parts = [Polygon(mesh.triangle_vertices(k)) for k in self.triangles]
        parts += [Polygon(t) for t in self.ext_triangles]
        return unary_union(parts)


def extended_regions_and_overlap(
    mesh: Mesh, eta: float
) -> tuple[dict[int, ExtendedRegion], int]:
    """Extended regions of the super-critical vertices and the overlap count.

    The region of z is the union of the triangle neighborhoods of K_z and
    K_z' together with the two extension triangles (K_z itself and the
    minimal triangle containing K_z and K_z').  The overlap constant is the
    maximal number of super-critical regions meeting any single one with
    positive area.
    """
    _, super_crit = critical_sets(mesh, eta)
    regions: dict[int, ExtendedRegion] = {}
    for z in super_crit:
        kz, kzp = companions(mesh, z)
        tris = tuple(
            sorted(triangle_neighborhood(mesh, kz) | triangle_neighborhood(mesh, kzp))
        )
        kz_ext = mesh.triangle_vertices(kz)
        union_pts = np.vstack(
            [mesh.triangle_vertices(kz), mesh.triangle_vertices(kzp)]
        )
        kzp_ext = _min_area_enclosing_triangle(union_pts)
        # diagnostic delta: farthest extension-triangle vertex from K_z',
        # relative to the companion diameter
        hk = float(mesh.diameter[kzp])
        comp_poly = Polygon(mesh.triangle_vertices(kzp))
        delta = max(comp_poly.distance(Point(p)) for p in kzp_ext) / hk
        regions[z] = ExtendedRegion(
            vertex=z,
            companion=(kz, kzp),
            triangles=tris,
            ext_triangles=(kz_ext, kzp_ext),
            delta=float(delta),
        )
    if not regions:
        return regions, 0
    polys = {z: reg.polygon(mesh) for z, reg in regions.items()}
    h_t = float(mesh.diameter.max())
    thresh = 1e-12 * h_t * h_t
    c_ov = 0
    for z in regions:
        count = sum(
            1 for y in regions if polys[z].intersection(polys[y]).area > thresh
        )
        c_ov = max(c_ov, count)
    return regions, c_ov


#: Boundary patches may have 1..3 triangles, interior critical patches 4;
#: anything else is outside the four near-singular configurations.
_EXPECTED_INTERIOR_N = 4
_EXPECTED_BOUNDARY_N = (1, 2, 3)


@dataclass
class CriticalityReport:
    """Per-mesh criticality diagnostics (JSON-serializable).

    The extended-region descriptors are kept on the object only; the JSON
    payload carries the summary quantities.
    """

    eta: float
    theta: dict[int, float]
    theta_min: float | None
    critical: list[int]
    supercritical: list[int]
    robinson: dict[int, bool]
    companions: dict[int, tuple[int, int]]
    c_ov: int
    regions: dict[int, ExtendedRegion] = field(default_factory=dict)
    warnings: list[str] = field(default_factory=list)

    def to_json(self) -> str:
        payload = {
            "eta": self.eta,
            "theta": {str(z): v for z, v in self.theta.items()},
            "theta_min": self.theta_min,
            "critical": list(self.critical),
            "supercritical": list(self.supercritical),
            "robinson": {str(z): bool(v) for z, v in self.robinson.items()},
            "companions": {str(z): list(kk) for z, kk in self.companions.items()},
            "C_ov": self.c_ov,
            "warnings": list(self.warnings),
        }
        return json.dumps(payload, indent=2, sort_keys=True)


def criticality_report(mesh: Mesh, eta: float) -> CriticalityReport:
    """Full criticality analysis of a mesh at a given eta."""
    crit, super_crit = critical_sets(mesh, eta)
    thetas = {z: theta(vertex_patch(mesh, z)) for z in range(mesh.n_vertices)}
    try:
        tmin = theta_min(mesh, eta)
    except AllVerticesCritical:
        tmin = None
    warnings = []
    for z in crit:
        patch = vertex_patch(mesh, z)
        if patch.on_boundary:
            if patch.size not in _EXPECTED_BOUNDARY_N:
                warnings.append(
                    f"vertex {z}: boundary eta-critical patch with "
                    f"{patch.size} triangles is outside the four "
                    "near-singular configurations"
                )
        elif patch.size != _EXPECTED_INTERIOR_N:
            warnings.append(
                f"vertex {z}: interior eta-critical patch with "
                f"{patch.size} triangles is outside the four "
                "near-singular configurations"
            )
    comp: dict[int, tuple[int, int]] = {}
    robinson: dict[int, bool] = {}
    regions: dict[int, ExtendedRegion] = {}
    c_ov = 0
    try:
        robinson = robinson_classify(mesh, eta)
        comp = {z: companions(mesh, z) for z in super_crit}
        regions, c_ov = extended_regions_and_overlap(mesh, eta)
    except MissingCompanion as exc:
        warnings.append(str(exc))
    return CriticalityReport(
        eta=eta,
        theta=thetas,
        theta_min=tmin,
        critical=crit,
        supercritical=super_crit,
        robinson=robinson,
        companions=comp,
        c_ov=c_ov,
        regions=regions,
        warnings=warnings,
    )
