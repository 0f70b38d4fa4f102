"""Polynomial machinery on triangles.

Jacobi and Chebyshev evaluation by three-term recurrences, barycentric
coordinates, a per-triangle L2-orthonormal modal basis, simplex quadrature,
broken polynomials, the critical functions attached to mesh vertices,
mean-value normalization, analytic extension by evaluation, and the
chord-stretched triangle neighborhoods used to probe the extension bound.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .errors import DegenerateTriangle, InvalidParameter
from .mesh import Mesh, vertex_patch

# -- classical one-dimensional polynomials --------------------------------------


def jacobi_eval(n: int, x, alpha: float = 0.0, beta: float = 2.0):
    """Jacobi polynomial P_n^(alpha,beta)(x) via the three-term recurrence."""
    if n < 0:
        raise InvalidParameter("jacobi degree must be >= 0")
    x = np.asarray(x, dtype=float)
    p_prev = np.ones_like(x)
    if n == 0:
        return p_prev
    a, b = alpha, beta
    p = (a + 1) + (a + b + 2) * (x - 1) / 2
    for m in range(2, n + 1):
        c1 = 2 * m * (m + a + b) * (2 * m + a + b - 2)
        c2 = (2 * m + a + b - 1) * (a * a - b * b)
        c3 = (2 * m + a + b - 1) * (2 * m + a + b) * (2 * m + a + b - 2)
        c4 = 2 * (m + a - 1) * (m + b - 1) * (2 * m + a + b)
        p, p_prev = ((c2 + c3 * x) * p - c4 * p_prev) / c1, p
    return p


def jacobi_deriv(n: int, x, alpha: float = 0.0, beta: float = 0.0):
    """d/dx P_n^(alpha,beta)(x)."""
    if n == 0:
        return np.zeros_like(np.asarray(x, dtype=float))
    return 0.5 * (n + alpha + beta + 1) * jacobi_eval(n - 1, x, alpha + 1, beta + 1)


def chebyshev_eval(k: int, y):
    """Chebyshev polynomial of the first kind T_k(y) by recurrence."""
    if k < 0:
        raise InvalidParameter("chebyshev degree must be >= 0")
    y = np.asarray(y, dtype=float)
    t_prev = np.ones_like(y)
    if k == 0:
        return t_prev
    t = y.copy()
    for _ in range(k - 1):
        t, t_prev = 2 * y * t - t_prev, t
    return t


def gamma_k(k: int, lam: float) -> float:
    """Growth bound min{(2^k+1)/2 (1+lam)^k, exp(lam k^2/2)} for T_k(1+lam)."""
    if lam < 0:
        raise InvalidParameter("lambda must be >= 0")
    return min((2.0**k + 1) / 2.0 * (1.0 + lam) ** k, math.exp(lam * k * k / 2.0))


# -- barycentric coordinates -----------------------------------------------------


def barycentric(tri: np.ndarray, points) -> np.ndarray:
    """Affine barycentric coordinates of ``points`` w.r.t. triangle ``tri``.

    ``tri`` is a (3, 2) vertex array.  Works for points outside the triangle
    (coordinates may be negative but always sum to 1), which realizes the
    analytic extension of per-triangle polynomials.
    """
    tri = np.asarray(tri, dtype=float)
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    M = np.column_stack([tri[1] - tri[0], tri[2] - tri[0]])
    det = M[0, 0] * M[1, 1] - M[0, 1] * M[1, 0]
    h2 = max(np.sum((tri[1] - tri[0]) ** 2), np.sum((tri[2] - tri[0]) ** 2))
    if abs(det) <= 2 * 1e-14 * h2:
        raise DegenerateTriangle("cannot invert affine map of a degenerate triangle")
    Minv = np.array([[M[1, 1], -M[0, 1]], [-M[1, 0], M[0, 0]]]) / det
    uv = (pts - tri[0]) @ Minv.T
    lam = np.empty((len(pts), 3))
    lam[:, 1] = uv[:, 0]
    lam[:, 2] = uv[:, 1]
    lam[:, 0] = 1.0 - uv[:, 0] - uv[:, 1]
    return lam if np.asarray(points).ndim == 2 else lam[0]


def barycentric_gradients(tri: np.ndarray) -> np.ndarray:
    """(3, 2) array of the constant gradients of the barycentric coordinates."""
    tri = np.asarray(tri, dtype=float)
    M = np.column_stack([tri[1] - tri[0], tri[2] - tri[0]])
    det = M[0, 0] * M[1, 1] - M[0, 1] * M[1, 0]
    Minv = np.array([[M[1, 1], -M[0, 1]], [-M[1, 0], M[0, 0]]]) / det
    g = np.empty((3, 2))
    g[1] = Minv[0]
    g[2] = Minv[1]
    g[0] = -g[1] - g[2]
    return g


# -- quadrature ------------------------------------------------------------------


@dataclass(frozen=True)
class QuadratureRule:
    """Quadrature on the reference triangle in barycentric coordinates.

    Weights are area-normalized (they sum to one); the integral of f over a
    physical triangle K is ``|K| * sum(w_i f(x_i))``.
    """

    points: np.ndarray  # (nq, 3) barycentric
    weights: np.ndarray  # (nq,), sum 1
    degree: int


@lru_cache(maxsize=None)
def quadrature(degree: int) -> QuadratureRule:
    """Collapsed tensor Gauss rule exact for polynomials up to ``degree``."""
    if degree < 0:
        raise InvalidParameter("quadrature degree must be >= 0")
    m = (degree + 2 + 1) // 2  # ceil((degree+2)/2)
    x, w = np.polynomial.legendre.leggauss(m)
    u = 0.5 * (x + 1.0)
    wu = 0.5 * w
    U, V = np.meshgrid(u, u, indexing="ij")
    WU, WV = np.meshgrid(wu, wu, indexing="ij")
    lam2 = (U * (1.0 - V)).ravel()
    lam3 = V.ravel()
    lam1 = 1.0 - lam2 - lam3
    wt = (WU * WV * (1.0 - V)).ravel()
    wt = wt / wt.sum()
    pts = np.column_stack([lam1, lam2, lam3])
    pts.setflags(write=False)
    wt.setflags(write=False)
    return QuadratureRule(points=pts, weights=wt, degree=degree)


# -- modal basis -----------------------------------------------------------------


def _scaled_legendre(i_max, x, t, with_deriv=False):
    """S_i(x, t) = t^i P_i(x/t) for i = 0..i_max via the scaled recurrence.

    Polynomial in (x, t); safe at t = 0.  Optionally returns dS/dx and dS/dt.
    """
    shape = np.broadcast(x, t).shape
    S = np.empty((i_max + 1,) + shape)
    S[0] = 1.0
    if i_max >= 1:
        S[1] = x
    for n in range(1, i_max):
        S[n + 1] = ((2 * n + 1) * x * S[n] - n * t * t * S[n - 1]) / (n + 1)
    if not with_deriv:
        return S
    Sx = np.zeros_like(S)
    St = np.zeros_like(S)
    if i_max >= 1:
        Sx[1] = 1.0
    for n in range(1, i_max):
        Sx[n + 1] = ((2 * n + 1) * (S[n] + x * Sx[n]) - n * t * t * Sx[n - 1]) / (n + 1)
        St[n + 1] = ((2 * n + 1) * x * St[n] - n * (2 * t * S[n - 1] + t * t * St[n - 1])) / (n + 1)
    return S, Sx, St


def triangle_modes(degree: int) -> list[tuple[int, int]]:
    """Mode indices (i, j), i + j <= degree, ordered by total degree."""
    return [(i, d - i) for d in range(degree + 1) for i in range(d + 1)]


@lru_cache(maxsize=None)
class TriangleBasis:
    """Dubiner-type modal basis on the triangle in barycentric coordinates.

    The raw modes ``D_(i,j) = S_i(l2 - l1, l1 + l2) P_j^(2i+1,0)(2 l3 - 1)``
    are mutually L2-orthogonal on any triangle; dividing by
    ``sqrt(|K| * ref_norm2)`` makes them orthonormal on K.  Evaluation and
    differentiation avoid the collapsed-coordinate singularity, so values
    and gradients are well defined on the closed triangle (vertices
    included) and, by affine extension, on all of R^2.
    """

    def __init__(self, degree: int):
        self.degree = degree
        self.modes = triangle_modes(degree)
        self.n_modes = len(self.modes)
        rule = quadrature(2 * degree)
        vals = self.eval_raw(rule.points)
        self.ref_norm2 = rule.weights @ (vals * vals)  # (1/|K|) int_K D^2

    def eval_raw(self, lam) -> np.ndarray:
        """Raw mode values, shape (npts, n_modes)."""
        lam = np.atleast_2d(np.asarray(lam, dtype=float))
        x = lam[:, 1] - lam[:, 0]
        t = lam[:, 0] + lam[:, 1]
        u = 2.0 * lam[:, 2] - 1.0
        S = _scaled_legendre(self.degree, x, t)
        out = np.empty((lam.shape[0], self.n_modes))
        for m, (i, j) in enumerate(self.modes):
            out[:, m] = S[i] * jacobi_eval(j, u, 2 * i + 1, 0)
        return out

    def grad_raw(self, lam) -> np.ndarray:
        """Raw mode barycentric gradients, shape (npts, n_modes, 3)."""
        lam = np.atleast_2d(np.asarray(lam, dtype=float))
        x = lam[:, 1] - lam[:, 0]
        t = lam[:, 0] + lam[:, 1]
        u = 2.0 * lam[:, 2] - 1.0
        S, Sx, St = _scaled_legendre(self.degree, x, t, with_deriv=True)
        out = np.empty((lam.shape[0], self.n_modes, 3))
        for m, (i, j) in enumerate(self.modes):
            G = jacobi_eval(j, u, 2 * i + 1, 0)
            dG = jacobi_deriv(j, u, 2 * i + 1, 0)
            out[:, m, 0] = (-Sx[i] + St[i]) * G
            out[:, m, 1] = (Sx[i] + St[i]) * G
            out[:, m, 2] = 2.0 * S[i] * dG
        return out

    def scale(self, area: float) -> np.ndarray:
        """Per-mode factors turning raw modes into an L2(K)-orthonormal basis."""
        return 1.0 / np.sqrt(area * self.ref_norm2)


# -- broken polynomials ----------------------------------------------------------


class BrokenPolynomial:
    """Element of P_d(T): per-triangle polynomial in the orthonormal modal basis.

    The squared global L2 norm is the squared Euclidean norm of the stacked
    coefficient array.  Instances are immutable.
    """

    __slots__ = ("mesh", "degree", "coeffs", "_basis")

    def __init__(self, mesh: Mesh, degree: int, coeffs: np.ndarray):
        basis = TriangleBasis(degree)
        coeffs = np.asarray(coeffs, dtype=float)
        if coeffs.shape != (mesh.n_triangles, basis.n_modes):
            raise InvalidParameter(
                f"coefficient array must have shape "
                f"{(mesh.n_triangles, basis.n_modes)}, got {coeffs.shape}"
            )
        self.mesh = mesh
        self.degree = degree
        self.coeffs = coeffs.copy()
        self.coeffs.setflags(write=False)
        self._basis = basis

    # construction ---------------------------------------------------------

    @classmethod
    def zero(cls, mesh: Mesh, degree: int) -> "BrokenPolynomial":
        nm = TriangleBasis(degree).n_modes
        return cls(mesh, degree, np.zeros((mesh.n_triangles, nm)))

    @classmethod
    def constant(cls, mesh: Mesh, degree: int, value: float) -> "BrokenPolynomial":
        nm = TriangleBasis(degree).n_modes
        coeffs = np.zeros((mesh.n_triangles, nm))
        coeffs[:, 0] = value * np.sqrt(mesh.area)
        return cls(mesh, degree, coeffs)

    @classmethod
    def from_flat(cls, mesh: Mesh, degree: int, flat: np.ndarray) -> "BrokenPolynomial":
        nm = TriangleBasis(degree).n_modes
        return cls(mesh, degree, np.asarray(flat, float).reshape(mesh.n_triangles, nm))

    @classmethod
    def project(cls, mesh: Mesh, degree: int, f, quad_degree: int | None = None):
        """Per-triangle L2 projection of the callable ``f(points) -> values``."""
        rule = quadrature(2 * degree if quad_degree is None else quad_degree)
        basis = TriangleBasis(degree)
        raw = basis.eval_raw(rule.points)
        coeffs = np.empty((mesh.n_triangles, basis.n_modes))
        for k in range(mesh.n_triangles):
            tri = mesh.triangle_vertices(k)
            xy = rule.points @ tri
            fv = np.asarray(f(xy), dtype=float)
            area = float(mesh.area[k])
            coeffs[k] = area * ((rule.weights * fv) @ raw) * basis.scale(area)
        return cls(mesh, degree, coeffs)

    # evaluation -----------------------------------------------------------

    def eval_on(self, k: int, points) -> np.ndarray:
        """Evaluate the block of triangle ``k`` at ``points`` (2,) or (n, 2).

        Points outside the triangle are admitted: barycentric coordinates
        extend affinely, which evaluates the unique polynomial extension of
        the block.
        """
        tri = self.mesh.triangle_vertices(k)
        lam = np.atleast_2d(barycentric(tri, points))
        vals = self._basis.eval_raw(lam) @ (
            self.coeffs[k] * self._basis.scale(float(self.mesh.area[k]))
        )
        return vals if np.asarray(points).ndim == 2 else float(vals[0])

    def eval_at_vertex(self, k: int, z: int) -> float:
        """Trace of the block of triangle ``k`` at mesh vertex ``z``."""
        loc = self.mesh.local_index(k, z)
        lam = np.zeros(3)
        lam[loc] = 1.0
        vals = self._basis.eval_raw(lam[None, :]) @ (
            self.coeffs[k] * self._basis.scale(float(self.mesh.area[k]))
        )
        return float(vals[0])

    # norms / integrals ----------------------------------------------------

    def l2_norm(self) -> float:
        return float(np.linalg.norm(self.coeffs))

    def l2_norm_on(self, k: int) -> float:
        return float(np.linalg.norm(self.coeffs[k]))

    def integral(self) -> float:
        """Integral over the whole domain (constant modes only contribute)."""
        return float(np.sqrt(self.mesh.area) @ self.coeffs[:, 0])

    def integral_on(self, k: int) -> float:
        return float(np.sqrt(self.mesh.area[k]) * self.coeffs[k, 0])

    def mean(self) -> float:
        return self.integral() / self.mesh.domain_area

    def inner(self, other: "BrokenPolynomial") -> float:
        return float(np.sum(self.coeffs * other.coeffs))

    # arithmetic -----------------------------------------------------------

    def _like(self, coeffs) -> "BrokenPolynomial":
        return BrokenPolynomial(self.mesh, self.degree, coeffs)

    def __add__(self, other):
        return self._like(self.coeffs + other.coeffs)

    def __sub__(self, other):
        return self._like(self.coeffs - other.coeffs)

    def __mul__(self, scalar: float):
        return self._like(self.coeffs * float(scalar))

    __rmul__ = __mul__

    def flat(self) -> np.ndarray:
        return self.coeffs.ravel()


def mean_value_zero(q: BrokenPolynomial) -> BrokenPolynomial:
    """Subtract the integral mean: q - (1/|Omega|) int q."""
    qbar = q.mean()
    coeffs = q.coeffs.copy()
    coeffs[:, 0] -= qbar * np.sqrt(q.mesh.area)
    return BrokenPolynomial(q.mesh, q.degree, coeffs)


def extension_eval(q: BrokenPolynomial, k: int, point) -> float:
    """Value at ``point`` of the analytic extension of the block on triangle k."""
    return q.eval_on(k, np.asarray(point, dtype=float))


# -- critical functions ----------------------------------------------------------


def critical_function(mesh: Mesh, z: int, k: int) -> BrokenPolynomial:
    """Critical function of degree k-1 attached to vertex ``z``.

    Supported on the vertex patch; on the ell-th patch triangle (1-based,
    counterclockwise) it equals
    ``(-1)^(k-1+ell) / |K_ell| * P_(k-1)^(0,2)(1 - 2 lam_z)``.
    """
    if k < 1:
        raise InvalidParameter("critical functions need k >= 1")
    patch = vertex_patch(mesh, z)
    degree = k - 1
    basis = TriangleBasis(degree)
    rule = quadrature(2 * degree)
    raw = basis.eval_raw(rule.points)
    coeffs = np.zeros((mesh.n_triangles, basis.n_modes))
    for ell0, kt in enumerate(patch.triangles):
        sign = -1.0 if (k + ell0) % 2 else 1.0  # (-1)^(k-1+ell), ell = ell0+1
        area = float(mesh.area[kt])
        lam_z = rule.points[:, mesh.local_index(kt, z)]
        vals = (sign / area) * jacobi_eval(degree, 1.0 - 2.0 * lam_z, 0.0, 2.0)
        coeffs[kt] = area * ((rule.weights * vals) @ raw) * basis.scale(area)
    return BrokenPolynomial(mesh, degree, coeffs)


# -- chord-stretched neighborhoods K_lambda --------------------------------------


def _chord(tri: np.ndarray, alpha: float):
    """Chord of the line through the centroid at angle alpha.

    Returns (midpoint M_alpha, exit point y_alpha) of the intersection with
    the closed triangle.
    """
    tri = np.asarray(tri, dtype=float)
    if abs(_tri_area(tri)) <= 0.0:
        raise DegenerateTriangle("chord of a degenerate triangle")
    center = tri.mean(axis=0)
    d = np.array([math.cos(alpha), math.sin(alpha)])
    params = []
    for i in range(3):
        p, qv = tri[i], tri[(i + 1) % 3]
        e = qv - p
        den = d[0] * e[1] - d[1] * e[0]
        if abs(den) < 1e-15:
            continue
        w = p - center
        s = (w[0] * e[1] - w[1] * e[0]) / den
        u = (w[0] * d[1] - w[1] * d[0]) / den
        if -1e-12 <= u <= 1.0 + 1e-12:
            params.append(s)
    if not params:
        raise DegenerateTriangle("no chord intersection found")
    s_plus = max(params)
    s_minus = min(params)
    y_alpha = center + s_plus * d
    midpoint = center + 0.5 * (s_plus + s_minus) * d
    return midpoint, y_alpha


def _tri_area(tri):
    return 0.5 * (
        (tri[1, 0] - tri[0, 0]) * (tri[2, 1] - tri[0, 1])
        - (tri[2, 0] - tri[0, 0]) * (tri[1, 1] - tri[0, 1])
    )


def k_lambda_point(tri: np.ndarray, alpha: float, lam: float) -> np.ndarray:
    """Boundary point M_alpha + (1 + lam) (y_alpha - M_alpha) of K_lambda."""
    if lam < 0:
        raise InvalidParameter("lambda must be >= 0")
    midpoint, y_alpha = _chord(tri, alpha)
    return midpoint + (1.0 + lam) * (y_alpha - midpoint)


def k_lambda_diam(tri: np.ndarray, lam: float, samples: int = 720) -> float:
    """Diameter of K_lambda from a dense boundary sample.

    The exact vertex directions are added to the uniform angle grid so that
    the corners of K (the diameter-extremal points at lam = 0) are hit.
    """
    tri = np.asarray(tri, dtype=float)
    center = tri.mean(axis=0)
    alphas = 2.0 * math.pi * np.arange(samples) / samples
    corner = [math.atan2(*(v - center)[::-1]) for v in tri]
    alphas = np.concatenate([alphas, np.asarray(corner)])
    pts = np.array([k_lambda_point(tri, float(a), lam) for a in alphas])
    diff = pts[:, None, :] - pts[None, :, :]
    return float(np.sqrt((diff**2).sum(axis=2)).max())
