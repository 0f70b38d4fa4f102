"""Constrained broken pressure spaces and their correction machinery.

The reduced space imposes the alternating-trace constraint at every
eta-critical vertex (plus the global mean); the modified space re-injects
the lost approximation power at super-critical vertices through local
correction functionals built from the critical functions.  Explicit basis
matrices (null spaces of the constraint rows) make dimensions, projections,
Riesz representatives, and orthogonal complements directly computable.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg
import scipy.sparse as sp

from .criticality import critical_sets, robinson_classify
from .errors import (
    InvalidParameter,
    NotRobinson,
    SingularGram,
)
from .mesh import Mesh, VertexPatch, vertex_patch
from .polynomials import (
    BrokenPolynomial,
    TriangleBasis,
    critical_function,
    mean_value_zero,
    quadrature,
)

#: Relative singular-value threshold for the numerical rank of constraints.
RANK_TOL = 1e-10


def functional_Atz(q: BrokenPolynomial, patch: VertexPatch) -> float:
    """Alternating sum of per-triangle traces at the patch center.

    ``sum_ell (-1)^ell q|_(K_ell)(z)`` over the counterclockwise patch
    numbering (1-based).
    """
    z = patch.vertex
    total = 0.0
    for ell0, kt in enumerate(patch.triangles):
        sign = -1.0 if ell0 % 2 == 0 else 1.0
        total += sign * q.eval_at_vertex(kt, z)
    return total


# -- correction functionals ------------------------------------------------------


@dataclass
class CorrectionFunctional:
    """Per-vertex linear functionals f_z driving the pressure modification.

    ``f_z(q) = J_z(q|_(K_z')^ext) - J_z(q|_(K_z)^ext)``, with J_z either the
    point evaluation at z normalized by the critical function, or the
    weighted integral against the extended critical function over the whole
    companion triangle.  Each functional is stored as a coefficient vector
    over the broken modal basis, so applications are dot products.
    """

    mesh: Mesh
    k: int
    variant: str
    vertices: list[int]
    companions: dict[int, tuple[int, int]]
    criticals: dict[int, BrokenPolynomial]
    rows: sp.csr_matrix  # (n_vertices, N) functional coefficient vectors
    norms: dict[int, float] = field(default_factory=dict)  # recorded C_{f_z}

    def index(self, z: int) -> int:
        return self.vertices.index(z)

    def apply_flat(self, flat: np.ndarray) -> np.ndarray:
        """All f_z values of a stacked coefficient vector."""
        return self.rows @ flat

    def apply(self, q: BrokenPolynomial) -> dict[int, float]:
        vals = self.apply_flat(q.flat())
        return {z: float(vals[i]) for i, z in enumerate(self.vertices)}


def correction_functional(
    mesh: Mesh, k: int, eta: float, variant: str = "point"
) -> CorrectionFunctional:
    """Build the f_z functionals for every super-critical vertex of C(eta)."""
    if variant not in ("point", "weighted"):
        raise InvalidParameter(f"unknown functional variant {variant!r}")
    _, super_crit = critical_sets(mesh, eta)
    from .criticality import companions as find_companions

    basis = TriangleBasis(k - 1)
    nm = basis.n_modes
    n_coeff = mesh.n_triangles * nm
    comp: dict[int, tuple[int, int]] = {}
    crits: dict[int, BrokenPolynomial] = {}
    rows = sp.lil_matrix((len(super_crit), n_coeff))
    for i, z in enumerate(super_crit):
        kz, kzp = find_companions(mesh, z)
        comp[z] = (kz, kzp)
        b = critical_function(mesh, z, k)
        crits[z] = b
        if variant == "point":
            row = _point_row(mesh, basis, z, kz, kzp, b)
        else:
            row = _weighted_row(mesh, basis, k, z, kz, kzp, b)
        rows[i, kz * nm : (kz + 1) * nm] = row[0]
        rows[i, kzp * nm : (kzp + 1) * nm] = row[1]
    return CorrectionFunctional(
        mesh=mesh,
        k=k,
        variant=variant,
        vertices=list(super_crit),
        companions=comp,
        criticals=crits,
        rows=rows.tocsr(),
    )


def _basis_values_at(mesh, basis, kt, points):
    """Orthonormal basis values of triangle kt at physical points (extended)."""
    from .polynomials import barycentric

    tri = mesh.triangle_vertices(kt)
    lam = np.atleast_2d(barycentric(tri, points))
    return basis.eval_raw(lam) * basis.scale(float(mesh.area[kt]))


def _point_row(mesh, basis, z, kz, kzp, b):
    zpt = mesh.vertices[z]
    denom = b.eval_at_vertex(kz, z)
    phi_kzp = _basis_values_at(mesh, basis, kzp, zpt[None, :])[0]
    phi_kz = _basis_values_at(mesh, basis, kz, zpt[None, :])[0]
    return (-phi_kz / denom, phi_kzp / denom)


def _weighted_row(mesh, basis, k, z, kz, kzp, b):
    # weight region S'_z is the whole companion triangle K_z'
    rule = quadrature(2 * (k - 1))
    tri = mesh.triangle_vertices(kzp)
    xq = rule.points @ tri
    area = float(mesh.area[kzp])
    bext = b.eval_on(kz, xq)
    denom = area * float(rule.weights @ (bext * bext))
    phi_kzp = _basis_values_at(mesh, basis, kzp, xq)
    phi_kz = _basis_values_at(mesh, basis, kz, xq)
    w = rule.weights * bext
    return (-area * (w @ phi_kz) / denom, area * (w @ phi_kzp) / denom)


def f_z(q: BrokenPolynomial, func: CorrectionFunctional, z: int) -> float:
    """Evaluate the correction functional of vertex z on a broken polynomial."""
    i = func.index(z)
    return float((func.rows[i] @ q.flat())[0])


# -- pressure space bases --------------------------------------------------------


class PressureSpaceBasis:
    """Explicit basis of a broken pressure space as a sparse matrix.

    The ``matrix`` maps reduced coordinates to stacked modal coefficients;
    its columns are the basis functions.  Kinds: ``full-mean-zero`` (only
    the global mean constrained), ``reduced`` (trace constraints at all
    eta-critical vertices), ``modified`` (image of the reduced basis under
    the correction injection), ``complement`` (orthogonal complement of the
    modified space in the mean-zero broken space).
    """

    def __init__(
        self,
        mesh: Mesh,
        k: int,
        eta: float,
        kind: str,
        matrix: sp.csc_matrix,
        constrained: list[int],
        corrected: list[int] | None = None,
        rank_deficient: bool = False,
        functional: CorrectionFunctional | None = None,
    ):
        self.mesh = mesh
        self.k = k
        self.degree = k - 1
        self.eta = eta
        self.kind = kind
        self.matrix = matrix.tocsc()
        self.constrained = list(constrained)
        self.corrected = list(corrected or [])
        self.rank_deficient = rank_deficient
        self.functional = functional
        self._gram = None
        self._gram_lu = None

    @property
    def dim(self) -> int:
        return self.matrix.shape[1]

    @property
    def n_coeff(self) -> int:
        return self.matrix.shape[0]

    def gram(self) -> sp.csc_matrix:
        """Reduced mass matrix B^T B (identity iff columns orthonormal)."""
        if self._gram is None:
            self._gram = (self.matrix.T @ self.matrix).tocsc()
        return self._gram

    def gram_solve(self, rhs: np.ndarray) -> np.ndarray:
        if self._gram_lu is None:
            try:
                self._gram_lu = sp.linalg.splu(self.gram())
            except RuntimeError as exc:
                raise SingularGram(f"gram factorization failed: {exc}") from None
        sol = self._gram_lu.solve(np.asarray(rhs, dtype=float))
        if not np.all(np.isfinite(sol)):
            raise SingularGram("gram solve produced non-finite values")
        return sol

    def expand(self, coords: np.ndarray) -> BrokenPolynomial:
        flat = self.matrix @ np.asarray(coords, dtype=float)
        return BrokenPolynomial.from_flat(self.mesh, self.degree, flat)

    def project_coords(self, q: BrokenPolynomial) -> np.ndarray:
        """Coordinates of the L2 projection of q onto the space."""
        return self.gram_solve(self.matrix.T @ q.flat())

    def column(self, j: int) -> BrokenPolynomial:
        return BrokenPolynomial.from_flat(
            self.mesh, self.degree, self.matrix[:, j].toarray().ravel()
        )

    def dense(self) -> np.ndarray:
        return self.matrix.toarray()

    def diagnostics(self) -> dict:
        info = {
            "kind": self.kind,
            "k": self.k,
            "eta": self.eta,
            "dim": self.dim,
            "n_coeff": self.n_coeff,
            "constrained": list(self.constrained),
            "corrected": list(self.corrected),
            "rank_deficient": self.rank_deficient,
        }
        if self.functional is not None and self.functional.norms:
            cfz = {str(z): v for z, v in self.functional.norms.items()}
            info["C_fz"] = cfz
            info["C_f"] = 1.0 + sum(self.functional.norms.values())
        return info

    def diagnostics_json(self) -> str:
        return json.dumps(self.diagnostics(), indent=2, sort_keys=True)


def _constraint_rows(mesh: Mesh, k: int, vertices: list[int]) -> np.ndarray:
    """Dense constraint matrix: one trace row per vertex plus the mean row."""
    basis = TriangleBasis(k - 1)
    nm = basis.n_modes
    n_coeff = mesh.n_triangles * nm
    C = np.zeros((len(vertices) + 1, n_coeff))
    for r, z in enumerate(vertices):
        patch = vertex_patch(mesh, z)
        for ell0, kt in enumerate(patch.triangles):
            sign = -1.0 if ell0 % 2 == 0 else 1.0
            lam = np.zeros((1, 3))
            lam[0, mesh.local_index(kt, z)] = 1.0
            row = sign * basis.eval_raw(lam)[0] * basis.scale(float(mesh.area[kt]))
            C[r, kt * nm : (kt + 1) * nm] = row
    C[-1, 0::nm] = np.sqrt(mesh.area)
    return C


def _nullspace(C: np.ndarray) -> tuple[sp.csc_matrix, bool]:
    """Sparse null-space basis of a short fat matrix via pivoted QR."""
    r, n = C.shape
    _, R, perm = scipy.linalg.qr(C, mode="economic", pivoting=True)
    diag = np.abs(np.diag(R))
    tol = RANK_TOL * diag[0] if diag.size else 0.0
    rank = int(np.sum(diag > tol))
    rank_deficient = rank < min(r, n)
    piv = perm[:rank]
    free = perm[rank:]
    m = n - rank
    if rank:
        W = scipy.linalg.solve_triangular(R[:rank, :rank], R[:rank, rank:])
    else:
        W = np.zeros((0, m))
    rows = np.concatenate([free, np.repeat(piv, m)])
    cols = np.concatenate([np.arange(m), np.tile(np.arange(m), rank)])
    vals = np.concatenate([np.ones(m), -W.ravel()])
    mask = vals != 0.0
    basis = sp.coo_matrix(
        (vals[mask], (rows[mask], cols[mask])), shape=(n, m)
    ).tocsc()
    return basis, rank_deficient


def build_full_space(mesh: Mesh, k: int) -> PressureSpaceBasis:
    """Mean-zero broken pressure space with no vertex constraints."""
    C = _constraint_rows(mesh, k, [])
    matrix, rank_deficient = _nullspace(C)
    return PressureSpaceBasis(
        mesh, k, 0.0, "full-mean-zero", matrix, [], rank_deficient=rank_deficient
    )


def build_reduced_space(mesh: Mesh, k: int, eta: float) -> PressureSpaceBasis:
    """Reduced pressure space: traces constrained at every eta-critical vertex."""
    if k < 1:
        raise InvalidParameter("pressure spaces need k >= 1")
    crit, _ = critical_sets(mesh, eta)
    C = _constraint_rows(mesh, k, crit)
    matrix, rank_deficient = _nullspace(C)
    return PressureSpaceBasis(
        mesh, k, eta, "reduced", matrix, crit, rank_deficient=rank_deficient
    )


def inject_modified(
    space: PressureSpaceBasis, func: CorrectionFunctional
) -> PressureSpaceBasis:
    """Image of the reduced basis under q -> q + sum_z f_z(q) (b_z)_mvz."""
    if space.kind != "reduced":
        raise InvalidParameter("inject_modified expects a reduced space")
    if not func.vertices:
        return PressureSpaceBasis(
            space.mesh,
            space.k,
            space.eta,
            "modified",
            space.matrix.copy(),
            space.constrained,
            corrected=[],
            rank_deficient=space.rank_deficient,
            functional=func,
        )
    bmvz = np.column_stack(
        [mean_value_zero(func.criticals[z]).flat() for z in func.vertices]
    )
    F = np.asarray((func.rows @ space.matrix).todense())
    matrix = space.matrix + sp.csc_matrix(bmvz) @ sp.csc_matrix(F)
    return PressureSpaceBasis(
        space.mesh,
        space.k,
        space.eta,
        "modified",
        matrix.tocsc(),
        space.constrained,
        corrected=list(func.vertices),
        rank_deficient=space.rank_deficient,
        functional=func,
    )


def riesz_representative(
    space: PressureSpaceBasis, z: int, func: CorrectionFunctional
) -> BrokenPolynomial:
    """Riesz representative of f_z in the reduced space.

    The returned broken polynomial lies in the space and satisfies
    ``(phi, q)_L2 = f_z(q)`` for every member q.
    """
    if space.kind not in ("reduced", "full-mean-zero"):
        raise InvalidParameter("riesz_representative expects a reduced space")
    if z not in func.vertices:
        raise InvalidParameter(f"vertex {z} is not super-critical here")
    rhs = (func.rows[func.index(z)] @ space.matrix).toarray().ravel()
    coords = space.gram_solve(rhs)
    return space.expand(coords)


def record_functional_norms(
    space: PressureSpaceBasis, func: CorrectionFunctional
) -> dict[int, float]:
    """Operator norms C_{f_z} of the functionals over the reduced space.

    ``C_{f_z} = ||f_z||_op * ||b_z||_L2``, the constant in the continuity
    bound of f_z; the Riesz representative realizes the operator norm.
    """
    norms = {}
    for z in func.vertices:
        phi = riesz_representative(space, z, func)
        norms[z] = phi.l2_norm() * func.criticals[z].l2_norm()
    func.norms.update(norms)
    return norms


def complement_basis(
    mesh: Mesh, k: int, eta: float, func: CorrectionFunctional
) -> PressureSpaceBasis:
    """Basis of the orthogonal complement of the modified space.

    Columns are the critical functions of the even (non-super-critical)
    eta-critical vertices followed by the corrected directions
    ``phi_z = riesz_z - ||b_z||^(-2) [ (b_z)_mvz + sum_y (mean(b_z), b_y) riesz_y ]``
    for the super-critical vertices.
    """
    flags = robinson_classify(mesh, eta)
    not_rob = [z for z, ok in flags.items() if not ok]
    if not_rob:
        raise NotRobinson(f"super-critical vertices {not_rob} are not Robinson")
    crit, super_crit = critical_sets(mesh, eta)
    reduced = build_reduced_space(mesh, k, eta)
    cols = []
    order = []
    for z in crit:
        if z not in super_crit:
            cols.append(critical_function(mesh, z, k).flat())
            order.append(z)
    riesz = {z: riesz_representative(reduced, z, func) for z in super_crit}
    for z in super_crit:
        b = func.criticals[z]
        bnorm2 = b.l2_norm() ** 2
        bbar = b.mean()
        correction = mean_value_zero(b).flat().copy()
        for y in super_crit:
            pairing = bbar * func.criticals[y].integral()
            correction += pairing * riesz[y].flat()
        cols.append(riesz[z].flat() - correction / bnorm2)
        order.append(z)
    if cols:
        matrix = sp.csc_matrix(np.column_stack(cols))
    else:
        nm = TriangleBasis(k - 1).n_modes
        matrix = sp.csc_matrix((mesh.n_triangles * nm, 0))
    out = PressureSpaceBasis(
        mesh,
        k,
        eta,
        "complement",
        matrix,
        crit,
        corrected=list(super_crit),
        functional=func,
    )
    out.complement_order = order
    return out


def decompose_against(
    space: PressureSpaceBasis,
    q: BrokenPolynomial,
    complement: PressureSpaceBasis | None = None,
):
    """L2-orthogonal split of q into its projection onto the space and the
    coefficients of the residual in the complement directions.

    For a reduced space the canonical complement directions are the critical
    functions (mean-zero normalized at super-critical vertices); a modified
    space uses its stored correction functionals to build the complement.
    """
    coords = space.project_coords(q)
    projection = space.expand(coords)
    residual = q - projection
    if complement is None:
        complement = _canonical_complement(space)
    if complement.dim == 0:
        return projection, {}
    rhs = complement.matrix.T @ residual.flat()
    cc = complement.gram_solve(rhs)
    order = getattr(complement, "complement_order", list(range(complement.dim)))
    return projection, {z: float(c) for z, c in zip(order, cc)}


def _canonical_complement(space: PressureSpaceBasis) -> PressureSpaceBasis:
    mesh, k, eta = space.mesh, space.k, space.eta
    if space.kind == "modified":
        if space.functional is None:
            raise InvalidParameter("modified space lost its functionals")
        return complement_basis(mesh, k, eta, space.functional)
    crit, super_crit = critical_sets(mesh, eta)
    cols = []
    order = []
    for z in crit:
        b = critical_function(mesh, z, k)
        cols.append((mean_value_zero(b) if z in super_crit else b).flat())
        order.append(z)
    if cols:
        matrix = sp.csc_matrix(np.column_stack(cols))
    else:
        nm = TriangleBasis(k - 1).n_modes
        matrix = sp.csc_matrix((mesh.n_triangles * nm, 0))
    out = PressureSpaceBasis(
        mesh, k, eta, "complement", matrix, crit, corrected=list(super_crit)
    )
    out.complement_order = order
    return out
