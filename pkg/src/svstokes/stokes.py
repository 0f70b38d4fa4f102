"""Taylor-style continuous velocity space, saddle-point assembly and solve,
pressure post-processing, divergence diagnostics, and numerical inf-sup
estimation for any pressure-space basis.
"""

from __future__ import annotations

import io
import json
import warnings
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
import scipy.linalg
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .errors import InvalidParameter, SingularSystem
from .mesh import Mesh, vertex_patch
from .polynomials import (
    BrokenPolynomial,
    TriangleBasis,
    barycentric_gradients,
    quadrature,
)
from .pressure import CorrectionFunctional, PressureSpaceBasis, functional_Atz
from .polynomials import mean_value_zero


# -- reference element data ------------------------------------------------------


@lru_cache(maxsize=None)
class _ReferenceElement:
    """Lagrange element of degree k on the principal lattice.

    The nodal basis is expressed in the raw modal basis through the inverse
    generalized Vandermonde, which is triangle-independent in barycentric
    coordinates.
    """

    def __init__(self, k: int):
        self.k = k
        self.multi = [
            (a, b, k - a - b) for a in range(k, -1, -1) for b in range(k - a, -1, -1)
        ]
        self.lattice = np.array(self.multi, dtype=float) / k
        self.n_nodes = len(self.multi)
        basis = TriangleBasis(k)
        V = basis.eval_raw(self.lattice)
        self.coeff = np.linalg.inv(V)  # modal -> nodal
        self.basis = basis

    def values(self, lam) -> np.ndarray:
        """Nodal basis values at barycentric points, (npts, n_nodes)."""
        return self.basis.eval_raw(lam) @ self.coeff

    def grads(self, lam) -> np.ndarray:
        """Barycentric gradients of the nodal basis, (npts, n_nodes, 3)."""
        g = self.basis.grad_raw(lam)
        return np.einsum("pmv,mn->pnv", g, self.coeff)


@dataclass
class VelocitySpace:
    """Continuous vector Lagrange space of degree k with boundary dofs removed.

    Nodes on the principal lattice are shared across edges, which enforces
    continuity; each interior node carries an (x, y) dof pair.
    """

    mesh: Mesh
    k: int
    nodes: np.ndarray  # (n_nodes, 2)
    tri_nodes: np.ndarray  # (nt, nlat)
    node_boundary: np.ndarray  # bool
    node_dof: np.ndarray  # (n_nodes,) interior index or -1

    @property
    def n_dofs(self) -> int:
        return 2 * int((self.node_dof >= 0).sum())

    def dof_pair(self, node: int) -> tuple[int, int]:
        i = int(self.node_dof[node])
        return (2 * i, 2 * i + 1) if i >= 0 else (-1, -1)


def velocity_space(mesh: Mesh, k: int) -> VelocitySpace:
    if k < 1:
        raise InvalidParameter("velocity degree must be >= 1")
    ref = _ReferenceElement(k)
    key_to_id: dict = {}
    coords: list[np.ndarray] = []
    boundary: list[bool] = []
    tri_nodes = np.empty((mesh.n_triangles, ref.n_nodes), dtype=np.int64)

    def node_id(key, xy, on_boundary):
        nid = key_to_id.get(key)
        if nid is None:
            nid = len(coords)
            key_to_id[key] = nid
            coords.append(xy)
            boundary.append(on_boundary)
        return nid

    for t in range(mesh.n_triangles):
        tri = [int(v) for v in mesh.triangles[t]]
        pts = mesh.triangle_vertices(t)
        for local, (a, b, c) in enumerate(ref.multi):
            xy = (a * pts[0] + b * pts[1] + c * pts[2]) / k
            if a == k:
                key = ("v", tri[0])
                on_b = bool(mesh.boundary_vertex[tri[0]])
            elif b == k:
                key = ("v", tri[1])
                on_b = bool(mesh.boundary_vertex[tri[1]])
            elif c == k:
                key = ("v", tri[2])
                on_b = bool(mesh.boundary_vertex[tri[2]])
            elif c == 0:
                key, on_b = _edge_key(mesh, t, tri[0], tri[1], b, k)
            elif a == 0:
                key, on_b = _edge_key(mesh, t, tri[1], tri[2], c, k)
            elif b == 0:
                key, on_b = _edge_key(mesh, t, tri[2], tri[0], a, k)
            else:
                key, on_b = ("t", t, a, b), False
            tri_nodes[t, local] = node_id(key, xy, on_b)

    node_boundary = np.array(boundary, dtype=bool)
    node_dof = np.full(len(coords), -1, dtype=np.int64)
    node_dof[~node_boundary] = np.arange(int((~node_boundary).sum()))
    return VelocitySpace(
        mesh=mesh,
        k=k,
        nodes=np.array(coords),
        tri_nodes=tri_nodes,
        node_boundary=node_boundary,
        node_dof=node_dof,
    )


def _edge_key(mesh, t, va, vb, toward_b, k):
    """Canonical edge-node key: steps counted from the smaller vertex id."""
    for e in mesh.tri_edges[t]:
        ea, eb = mesh.edges[e]
        if {int(ea), int(eb)} == {va, vb}:
            step = toward_b if int(ea) == va else k - toward_b
            return ("e", int(e), step), bool(mesh.boundary_edge[e])
    raise AssertionError("edge not found")  # unreachable on a valid mesh


# -- assembly --------------------------------------------------------------------


@dataclass
class AssembledStokes:
    """Matrices of the discrete saddle problem over a pressure-space basis."""

    A: sp.csr_matrix  # velocity stiffness (grad u, grad v)
    B: sp.csr_matrix  # (div u, q) in reduced pressure coordinates
    gram_h1: sp.csr_matrix  # full H1 inner product of the velocity space
    mass_p: sp.csc_matrix  # reduced pressure Gram
    D: sp.csr_matrix  # velocity dofs -> broken modal coefficients of div
    velocity: VelocitySpace
    space: PressureSpaceBasis


def assemble(mesh: Mesh, k: int, space: PressureSpaceBasis) -> AssembledStokes:
    """Assemble stiffness, H1 Gram, divergence coupling, and pressure mass."""
    if space.degree != k - 1:
        raise InvalidParameter("pressure degree must be k - 1")
    vs = velocity_space(mesh, k)
    ref = _ReferenceElement(k)
    rule = quadrature(2 * k)
    Nq = ref.values(rule.points)  # (nq, nl)
    dN = ref.grads(rule.points)  # (nq, nl, 3)
    pbasis = TriangleBasis(k - 1)
    Pq = pbasis.eval_raw(rule.points)  # (nq, nmp)
    nl = ref.n_nodes
    nmp = pbasis.n_modes
    w = rule.weights

    rows_a, cols_a, vals_a, vals_m = [], [], [], []
    rows_d, cols_d, vals_d = [], [], []
    for t in range(mesh.n_triangles):
        area = float(mesh.area[t])
        grads = barycentric_gradients(mesh.triangle_vertices(t))  # (3, 2)
        Gx = dN @ grads[:, 0]  # (nq, nl)
        Gy = dN @ grads[:, 1]
        S = area * (Gx.T @ (w[:, None] * Gx) + Gy.T @ (w[:, None] * Gy))
        M = area * (Nq.T @ (w[:, None] * Nq))
        scale = pbasis.scale(area)
        Dx = area * (Pq.T @ (w[:, None] * Gx)) * scale[:, None]  # (nmp, nl)
        Dy = area * (Pq.T @ (w[:, None] * Gy)) * scale[:, None]

        nodes = vs.tri_nodes[t]
        dofs = np.array([vs.dof_pair(n) for n in nodes])  # (nl, 2)
        for c in range(2):
            d_c = dofs[:, c]
            keep = d_c >= 0
            idx = np.nonzero(keep)[0]
            if idx.size:
                dd = d_c[idx]
                rows_a.append(np.repeat(dd, idx.size))
                cols_a.append(np.tile(dd, idx.size))
                vals_a.append(S[np.ix_(idx, idx)].ravel())
                vals_m.append(M[np.ix_(idx, idx)].ravel())
                block = Dx if c == 0 else Dy
                rows_d.append(
                    np.repeat(t * nmp + np.arange(nmp), idx.size)
                )
                cols_d.append(np.tile(dd, nmp))
                vals_d.append(block[:, idx].ravel())

    ndof = vs.n_dofs
    A = sp.coo_matrix(
        (np.concatenate(vals_a), (np.concatenate(rows_a), np.concatenate(cols_a))),
        shape=(ndof, ndof),
    ).tocsr()
    Mv = sp.coo_matrix(
        (np.concatenate(vals_m), (np.concatenate(rows_a), np.concatenate(cols_a))),
        shape=(ndof, ndof),
    ).tocsr()
    D = sp.coo_matrix(
        (np.concatenate(vals_d), (np.concatenate(rows_d), np.concatenate(cols_d))),
        shape=(mesh.n_triangles * nmp, ndof),
    ).tocsr()
    B = (space.matrix.T @ D).tocsr()
    return AssembledStokes(
        A=A,
        B=B,
        gram_h1=(A + Mv).tocsr(),
        mass_p=space.gram(),
        D=D,
        velocity=vs,
        space=space,
    )


def assemble_rhs(vs: VelocitySpace, f, quad_degree: int | None = None) -> np.ndarray:
    """Load vector F_i = int f . v_i by quadrature (default exactness 2k + 2)."""
    mesh, k = vs.mesh, vs.k
    rule = quadrature(2 * k + 2 if quad_degree is None else quad_degree)
    ref = _ReferenceElement(k)
    Nq = ref.values(rule.points)
    w = rule.weights
    F = np.zeros(vs.n_dofs)
    for t in range(mesh.n_triangles):
        tri = mesh.triangle_vertices(t)
        xq = rule.points @ tri
        fv = np.asarray(f(xq), dtype=float)  # (nq, 2)
        area = float(mesh.area[t])
        loc = area * (Nq.T @ (w[:, None] * fv))  # (nl, 2)
        for local, n in enumerate(vs.tri_nodes[t]):
            dx, dy = vs.dof_pair(int(n))
            if dx >= 0:
                F[dx] += loc[local, 0]
                F[dy] += loc[local, 1]
    return F


# -- solve -----------------------------------------------------------------------


@dataclass
class StokesSolution:
    """Velocity coefficients, broken pressure, and solve metadata."""

    mesh: Mesh
    k: int
    velocity: VelocitySpace
    space: PressureSpaceBasis
    u: np.ndarray
    p_coords: np.ndarray
    p: BrokenPolynomial
    div: BrokenPolynomial
    residual: float
    stats: dict = field(default_factory=dict)

    def grad_norm(self) -> float:
        """||grad u_S|| from the assembled stiffness (stored at solve time)."""
        return float(self.stats.get("grad_norm", np.nan))


def solve_stokes(
    mesh: Mesh,
    k: int,
    space: PressureSpaceBasis,
    f,
    quad_degree: int | None = None,
) -> StokesSolution:
    """Solve the discrete saddle problem over the given pressure basis.

    Raises :class:`SingularSystem` when the factorization fails or the
    relative residual is large, which is the numerical signature of a
    vanishing inf-sup constant (unconstrained singular vertices).
    """
    asm = assemble(mesh, k, space)
    F = assemble_rhs(asm.velocity, f, quad_degree)
    ndof, m = asm.A.shape[0], asm.B.shape[0]
    K = sp.bmat([[asm.A, -asm.B.T], [asm.B, None]], format="csc")
    rhs = np.concatenate([F, np.zeros(m)])
    with warnings.catch_warnings():
        warnings.simplefilter("error", spla.MatrixRankWarning)
        try:
            lu = spla.splu(K)
        except (RuntimeError, spla.MatrixRankWarning) as exc:
            raise SingularSystem(
                f"saddle factorization failed ({exc}); "
                "likely unconstrained singular vertices at eta=0",
                smallest_sv=_smallest_sv(K),
            ) from None
    pivots = np.abs(lu.U.diagonal())
    if pivots.min() <= 1e-12 * pivots.max():
        raise SingularSystem(
            f"saddle matrix is numerically rank deficient "
            f"(pivot ratio {pivots.min() / pivots.max():.2e}); "
            "likely unconstrained singular vertices at eta=0",
            smallest_sv=_smallest_sv(K),
        )
    x = lu.solve(rhs)
    if not np.all(np.isfinite(x)):
        raise SingularSystem(
            "saddle solve produced non-finite values; "
            "likely unconstrained singular vertices at eta=0",
            smallest_sv=_smallest_sv(K),
        )
    scale = 1.0 + float(np.linalg.norm(rhs))
    residual = float(np.linalg.norm(K @ x - rhs)) / scale
    if residual > 1e-9:
        raise SingularSystem(
            f"saddle residual {residual:.2e} exceeds tolerance; "
            "likely unconstrained singular vertices at eta=0",
            smallest_sv=_smallest_sv(K),
        )
    u = x[:ndof]
    p_coords = x[ndof:]
    p = space.expand(p_coords)
    div = BrokenPolynomial.from_flat(mesh, k - 1, asm.D @ u)
    stats = {
        "n_velocity_dofs": ndof,
        "n_pressure_dofs": m,
        "residual": residual,
        "grad_norm": float(np.sqrt(max(u @ (asm.A @ u), 0.0))),
    }
    return StokesSolution(
        mesh=mesh,
        k=k,
        velocity=asm.velocity,
        space=space,
        u=u,
        p_coords=p_coords,
        p=p,
        div=div,
        residual=residual,
        stats=stats,
    )


def _smallest_sv(K: sp.spmatrix) -> float | None:
    if K.shape[0] > 2500:
        return None
    return float(np.linalg.svd(K.toarray(), compute_uv=False)[-1])


def postprocess_pressure(
    sol: StokesSolution, space: PressureSpaceBasis, func: CorrectionFunctional
) -> BrokenPolynomial:
    """p* = p + sum_z f_z(p) (b_z)_mvz over the super-critical vertices."""
    if space.kind != "reduced":
        raise InvalidParameter("postprocessing applies to reduced-space solves")
    p = sol.p
    for z, val in func.apply(p).items():
        p = p + val * mean_value_zero(func.criticals[z])
    return p


def divergence_norm(sol: StokesSolution) -> float:
    """||div u_S||_L2 (exact: coefficient norm in the orthonormal basis)."""
    return sol.div.l2_norm()


def div_broken(mesh: Mesh, k: int, vs: VelocitySpace, u: np.ndarray) -> BrokenPolynomial:
    """Divergence of a velocity coefficient vector as a broken polynomial."""
    ref = _ReferenceElement(k)
    rule = quadrature(2 * (k - 1))
    dN = ref.grads(rule.points)
    pbasis = TriangleBasis(k - 1)
    Pq = pbasis.eval_raw(rule.points)
    w = rule.weights
    coeffs = np.zeros((mesh.n_triangles, pbasis.n_modes))
    for t in range(mesh.n_triangles):
        area = float(mesh.area[t])
        grads = barycentric_gradients(mesh.triangle_vertices(t))
        Gx = dN @ grads[:, 0]
        Gy = dN @ grads[:, 1]
        ux, uy = _local_dofs(vs, t, u)
        div_q = Gx @ ux + Gy @ uy
        coeffs[t] = area * ((w * div_q) @ Pq) * pbasis.scale(area)
    return BrokenPolynomial(mesh, k - 1, coeffs)


def _local_dofs(vs: VelocitySpace, t: int, u: np.ndarray):
    nodes = vs.tri_nodes[t]
    ux = np.zeros(len(nodes))
    uy = np.zeros(len(nodes))
    for i, n in enumerate(nodes):
        dx, dy = vs.dof_pair(int(n))
        if dx >= 0:
            ux[i] = u[dx]
            uy[i] = u[dy]
    return ux, uy


def atz_div(mesh: Mesh, k: int, vs: VelocitySpace, u: np.ndarray, z: int) -> float:
    """Alternating sum of div traces at vertex z for a velocity field."""
    q = div_broken(mesh, k, vs, u)
    return functional_Atz(q, vertex_patch(mesh, z))


# -- inf-sup estimation ----------------------------------------------------------

#: Dense-eigenproblem guard for the inf-sup estimator.
INFSUP_DENSE_LIMIT = 4000


def infsup_estimate(
    mesh: Mesh, k: int, space: PressureSpaceBasis, return_spectrum: bool = False
):
    """Discrete inf-sup constant by a generalized eigenvalue reduction.

    beta^2 is the smallest eigenvalue of B G^-1 B^T against the pressure
    Gram, with G the full H1 velocity inner product.
    """
    if space.dim > INFSUP_DENSE_LIMIT:
        raise InvalidParameter(
            f"inf-sup estimation is desk-scale only (dim {space.dim})"
        )
    asm = assemble(mesh, k, space)
    G = asm.gram_h1.tocsc()
    lu = spla.splu(G)
    Bt = asm.B.T.toarray()
    S = asm.B @ lu.solve(Bt)
    Mp = asm.mass_p.toarray()
    eigs = scipy.linalg.eigh(S, Mp, eigvals_only=True)
    lam_min, lam_max = float(eigs[0]), float(eigs[-1])
    beta = float(np.sqrt(max(lam_min, 0.0)))
    if return_spectrum:
        return beta, lam_min, lam_max
    return beta


# -- velocity field evaluation ----------------------------------------------------


def velocity_values(vs: VelocitySpace, u: np.ndarray, t: int, lam) -> np.ndarray:
    """Velocity vector values on triangle t at barycentric points, (npts, 2)."""
    ref = _ReferenceElement(vs.k)
    N = ref.values(np.atleast_2d(lam))
    ux, uy = _local_dofs(vs, t, u)
    return np.column_stack([N @ ux, N @ uy])


def velocity_gradients(vs: VelocitySpace, u: np.ndarray, t: int, lam) -> np.ndarray:
    """Velocity Jacobians on triangle t at barycentric points, (npts, 2, 2)."""
    ref = _ReferenceElement(vs.k)
    dN = ref.grads(np.atleast_2d(lam))
    grads = barycentric_gradients(vs.mesh.triangle_vertices(t))
    Gx = dN @ grads[:, 0]
    Gy = dN @ grads[:, 1]
    ux, uy = _local_dofs(vs, t, u)
    out = np.empty((Gx.shape[0], 2, 2))
    out[:, 0, 0] = Gx @ ux
    out[:, 0, 1] = Gy @ ux
    out[:, 1, 0] = Gx @ uy
    out[:, 1, 1] = Gy @ uy
    return out


# -- export ----------------------------------------------------------------------


def solution_csv(sol: StokesSolution) -> str:
    """Vertex-sampled velocity and pressure (pressure: mean of vertex traces)."""
    mesh = sol.mesh
    buf = io.StringIO()
    buf.write("vertex,x,y,ux,uy,p\n")
    for z in range(mesh.n_vertices):
        xy = mesh.vertices[z]
        patch = vertex_patch(mesh, z)
        uv = np.zeros(2)
        node = _vertex_node(sol.velocity, z)
        if node is not None:
            dx, dy = sol.velocity.dof_pair(node)
            if dx >= 0:
                uv = np.array([sol.u[dx], sol.u[dy]])
        traces = [sol.p.eval_at_vertex(kt, z) for kt in patch.triangles]
        pz = float(np.mean(traces))
        buf.write(
            f"{z},{xy[0]:.17g},{xy[1]:.17g},{uv[0]:.17g},{uv[1]:.17g},{pz:.17g}\n"
        )
    return buf.getvalue()


def _vertex_node(vs: VelocitySpace, z: int):
    t_list = vs.mesh.vertex_tris[z]
    if not t_list:
        return None
    t = t_list[0]
    local = vs.mesh.local_index(t, z)
    k = vs.k
    ref = _ReferenceElement(k)
    target = [(k, 0, 0), (0, k, 0), (0, 0, k)][local]
    idx = ref.multi.index(target)
    return int(vs.tri_nodes[t, idx])


def solution_json(sol: StokesSolution, beta: float | None = None) -> str:
    payload = {
        "k": sol.k,
        "eta": sol.space.eta,
        "pressure_kind": sol.space.kind,
        "n_velocity_dofs": sol.stats["n_velocity_dofs"],
        "n_pressure_dofs": sol.stats["n_pressure_dofs"],
        "residual": sol.residual,
        "grad_u_norm": sol.grad_norm(),
        "div_u_norm": divergence_norm(sol),
        "pressure_mean": sol.p.mean(),
        "beta": beta,
    }
    return json.dumps(payload, indent=2, sort_keys=True)
