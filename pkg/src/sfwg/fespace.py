"""Polynomial bases on cells and edges, quadrature, and the global DOF map.

Cell spaces use scaled, centroid-centered monomials ((x-xc)/h_T)^a
((y-yc)/h_T)^b so local mass matrices stay bounded under refinement. Edge
spaces use Legendre polynomials in the arc-length parameter s in [-1, 1]
(s = -1 at the lower-indexed endpoint), making edge projections diagonal
solves.

Global DOF ordering: all cell-interior blocks first (cell-major), then all
edge-trace blocks, then all edge-normal blocks.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from functools import lru_cache

import numpy as np
from numpy.polynomial.legendre import leggauss, legvander

MAX_TRIANGLE_EXACTNESS = 30
MAX_EDGE_EXACTNESS = 60


def dim_pk(degree):
    """Dimension of the 2D polynomial space of total degree <= degree."""
    return (degree + 1) * (degree + 2) // 2


@lru_cache(maxsize=None)
def monomial_exponents(degree):
    """Exponent pairs (a, b), ordered by total degree then a descending."""
    return tuple((d - i, i) for d in range(degree + 1) for i in range(d + 1))


# ---------------------------------------------------------------------------
# bases
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class CellBasis:
    """Scaled monomial basis of P_degree on one cell."""

    cell: int
    degree: int
    centroid: np.ndarray
    scale: float

    @property
    def dim(self):
        return dim_pk(self.degree)

    def eval(self, points):
        """Values, gradients and Laplacians of every basis function.

        Returns arrays of shape (npts, dim), (npts, dim, 2), (npts, dim).
        Evaluation is valid anywhere; callers restrict to the cell.
        """
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        npts = pts.shape[0]
        d = self.degree
        xi = (pts[:, 0] - self.centroid[0]) / self.scale
        eta = (pts[:, 1] - self.centroid[1]) / self.scale
        px = np.ones((npts, d + 1))
        py = np.ones((npts, d + 1))
        for m in range(1, d + 1):
            px[:, m] = px[:, m - 1] * xi
            py[:, m] = py[:, m - 1] * eta
        exps = monomial_exponents(d)
        vals = np.empty((npts, len(exps)))
        grads = np.zeros((npts, len(exps), 2))
        laps = np.zeros((npts, len(exps)))
        inv_h = 1.0 / self.scale
        inv_h2 = inv_h * inv_h
        for i, (a, b) in enumerate(exps):
            vals[:, i] = px[:, a] * py[:, b]
            if a:
                grads[:, i, 0] = a * px[:, a - 1] * py[:, b] * inv_h
            if b:
                grads[:, i, 1] = b * px[:, a] * py[:, b - 1] * inv_h
            if a >= 2:
                laps[:, i] += a * (a - 1) * px[:, a - 2] * py[:, b] * inv_h2
            if b >= 2:
                laps[:, i] += b * (b - 1) * px[:, a] * py[:, b - 2] * inv_h2
        return vals, grads, laps


def cell_basis(mesh, cell, degree):
    return CellBasis(cell, degree, mesh.cell_centroids[cell],
                     float(mesh.cell_diameters[cell]))


def eval_cell_basis(basis, points):
    """Evaluate (values, gradients, laplacians) of a cell basis at points."""
    return basis.eval(points)


@dataclass(frozen=True)
class EdgeBasis:
    """Legendre basis of P_degree on one edge, parameterized on [-1, 1]."""

    edge: int
    degree: int
    start: np.ndarray
    end: np.ndarray
    length: float

    @property
    def dim(self):
        return self.degree + 1

    def eval(self, s):
        """Legendre values P_0..P_degree at parameter values s."""
        return legvander(np.asarray(s, dtype=float), self.degree)

    def point(self, s):
        s = np.asarray(s, dtype=float)[..., None]
        return self.start + 0.5 * (s + 1.0) * (self.end - self.start)

    def mass_diagonal(self):
        """Edge mass matrix diagonal: L / (2m + 1)."""
        return self.length / (2.0 * np.arange(self.degree + 1) + 1.0)


def edge_basis(mesh, edge, degree):
    p, q = mesh.edge_endpoints(edge)
    return EdgeBasis(edge, degree, p, q, float(mesh.edge_lengths[edge]))


# ---------------------------------------------------------------------------
# quadrature
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class QuadratureRule:
    """Points and weights; `s` holds the [-1,1] abscissae for edge rules."""

    points: np.ndarray
    weights: np.ndarray
    exactness: int
    s: np.ndarray | None = None


class QuadratureError(ValueError):
    """Unsupported exactness degree or invalid quadrature input."""


@lru_cache(maxsize=None)
def _gauss_01(npts):
    x, w = leggauss(npts)
    return 0.5 * (x + 1.0), 0.5 * w


@lru_cache(maxsize=None)
def _triangle_moment(a, b):
    # Exact moment of x^a y^b over the unit right triangle.
    num = 1
    for i in range(1, a + 1):
        num *= i
    for i in range(1, b + 1):
        num *= i
    den = 1
    for i in range(1, a + b + 3):
        den *= i
    return Fraction(num, den)


@lru_cache(maxsize=None)
def _reference_triangle_rule(exactness):
    """Collapsed tensor-Gauss rule on the unit right triangle.

    The collapse map x=u, y=v(1-u) carries Jacobian (1-u), which raises the
    u-degree by one; (exactness+3)//2 Gauss points per direction keep the
    rule exact.
    """
    if not 1 <= exactness <= MAX_TRIANGLE_EXACTNESS:
        raise QuadratureError(
            f"triangle exactness {exactness} outside [1, {MAX_TRIANGLE_EXACTNESS}]")
    m = (exactness + 3) // 2
    u, wu = _gauss_01(m)
    v, wv = _gauss_01(m)
    U, V = np.meshgrid(u, v, indexing="ij")
    W = np.outer(wu, wv) * (1.0 - U)
    pts = np.column_stack([U.ravel(), (V * (1.0 - U)).ravel()])
    wts = W.ravel()
    _verify_triangle_rule(pts, wts, exactness)
    return pts, wts


def _verify_triangle_rule(pts, wts, exactness):
    for a, b in monomial_exponents(exactness):
        approx = float(wts @ (pts[:, 0] ** a * pts[:, 1] ** b))
        exact = float(_triangle_moment(a, b))
        if abs(approx - exact) > 1e-13 * max(1.0, abs(exact)):
            raise QuadratureError(
                f"triangle rule failed moment check for x^{a} y^{b}")


def triangle_quadrature(exactness, vertices=None):
    """Rule exact to `exactness` on the reference or a physical triangle."""
    pts, wts = _reference_triangle_rule(exactness)
    if vertices is None:
        return QuadratureRule(pts.copy(), wts.copy(), exactness)
    v = np.asarray(vertices, dtype=float)
    B = np.column_stack([v[1] - v[0], v[2] - v[0]])
    det = B[0, 0] * B[1, 1] - B[0, 1] * B[1, 0]
    if det <= 0.0:
        raise QuadratureError("triangle vertices must be counter-clockwise")
    return QuadratureRule(v[0] + pts @ B.T, wts * det, exactness)


def polygon_quadrature(vertices, exactness):
    """Fan-triangulated rule from the centroid of a convex polygon."""
    v = np.asarray(vertices, dtype=float)
    p = len(v)
    if p < 3:
        raise QuadratureError("polygon needs at least 3 vertices")
    e = np.roll(v, -1, axis=0) - v
    cross = e[:, 0] * np.roll(e[:, 1], -1) - e[:, 1] * np.roll(e[:, 0], -1)
    scale = float(np.abs(e).max()) ** 2
    if np.any(cross < -1e-12 * scale):
        raise QuadratureError("polygon is not convex")
    x, y = v[:, 0], v[:, 1]
    xn, yn = np.roll(x, -1), np.roll(y, -1)
    cr = x * yn - xn * y
    area2 = cr.sum()
    if area2 <= 0.0:
        raise QuadratureError("polygon must be counter-clockwise")
    cx = ((x + xn) * cr).sum() / (3.0 * area2)
    cy = ((y + yn) * cr).sum() / (3.0 * area2)
    centroid = np.array([cx, cy])
    parts_p = []
    parts_w = []
    for i in range(p):
        tri = np.array([centroid, v[i], v[(i + 1) % p]])
        rule = triangle_quadrature(exactness, tri)
        parts_p.append(rule.points)
        parts_w.append(rule.weights)
    return QuadratureRule(np.vstack(parts_p), np.concatenate(parts_w), exactness)


def cell_quadrature(mesh, cell, exactness):
    """Quadrature on a mesh cell; direct map for triangles, fan otherwise."""
    verts = mesh.cell_vertices(cell)
    if len(verts) == 3:
        return triangle_quadrature(exactness, verts)
    return polygon_quadrature(verts, exactness)


@lru_cache(maxsize=None)
def _gauss_m11(npts):
    s, w = leggauss(npts)
    # even-moment self check against 2/(m+1)
    for m in range(0, 2 * npts - 1, 2):
        approx = float(w @ s ** m)
        exact = 2.0 / (m + 1)
        if abs(approx - exact) > 1e-13 * max(1.0, exact):
            raise QuadratureError(f"Gauss rule failed moment check for s^{m}")
    return s, w


def edge_quadrature(exactness, endpoints=None):
    """Gauss-Legendre rule on [-1, 1], optionally mapped to a physical edge.

    When `endpoints` (a pair of 2D points) is given, `points` are physical
    and the weights include the length Jacobian; the reference abscissae stay
    available in `s` for edge-basis evaluation.
    """
    if not 1 <= exactness <= MAX_EDGE_EXACTNESS:
        raise QuadratureError(
            f"edge exactness {exactness} outside [1, {MAX_EDGE_EXACTNESS}]")
    npts = exactness // 2 + 1
    s, w = _gauss_m11(npts)
    if endpoints is None:
        return QuadratureRule(s.copy(), w.copy(), exactness, s=s.copy())
    p, q = (np.asarray(endpoints[0], float), np.asarray(endpoints[1], float))
    length = float(np.hypot(*(q - p)))
    pts = p + 0.5 * (s[:, None] + 1.0) * (q - p)
    return QuadratureRule(pts, w * (0.5 * length), exactness, s=s.copy())


@dataclass(frozen=True)
class QuadratureConfig:
    """Exactness overrides; None picks the defaults.

    Defaults: cell rules exact to 2j (P_j mass), edge rules to k+j+1
    (P_j x P_k edge couplings), load/projection rules to k+12 so data
    integration error stays below discretization error.
    """

    cell_exactness: int | None = None
    edge_exactness: int | None = None
    load_exactness: int | None = None

    def cell(self, k, j):
        return self.cell_exactness if self.cell_exactness is not None else 2 * j

    def edge(self, k, j):
        return self.edge_exactness if self.edge_exactness is not None else k + j + 1

    def load(self, k):
        return self.load_exactness if self.load_exactness is not None else k + 12


# ---------------------------------------------------------------------------
# DOF map and weak functions
# ---------------------------------------------------------------------------


class DofMap:
    """Global indexing of the three weak-function DOF families.

    Interior blocks hold P_k coefficients per cell, trace blocks k+1 Legendre
    coefficients per edge, normal blocks k coefficients per edge. Boundary
    DOFs are exactly the trace and normal DOFs of boundary edges.
    """

    def __init__(self, mesh, k):
        if k < 2:
            raise ValueError("polynomial degree k must be >= 2")
        self.mesh = mesh
        self.k = k
        self.cell_block = dim_pk(k)
        self.trace_block = k + 1
        self.normal_block = k
        ncells, nedges = mesh.num_cells, mesh.num_edges
        self.trace_offset = ncells * self.cell_block
        self.normal_offset = self.trace_offset + nedges * self.trace_block
        self.total_dofs = self.normal_offset + nedges * self.normal_block

        bdry = []
        for e in mesh.boundary_edges:
            bdry.extend(range(*self._trace_range(e)))
            bdry.extend(range(*self._normal_range(e)))
        self.boundary_dofs = np.array(sorted(bdry), dtype=int)
        mask = np.ones(self.total_dofs, dtype=bool)
        mask[self.boundary_dofs] = False
        self.free_dofs = np.nonzero(mask)[0]

    def _trace_range(self, e):
        start = self.trace_offset + e * self.trace_block
        return start, start + self.trace_block

    def _normal_range(self, e):
        start = self.normal_offset + e * self.normal_block
        return start, start + self.normal_block

    def cell_slice(self, c):
        return slice(c * self.cell_block, (c + 1) * self.cell_block)

    def trace_slice(self, e):
        return slice(*self._trace_range(e))

    def normal_slice(self, e):
        return slice(*self._normal_range(e))

    def cell_dofs(self, c):
        """Global indices of the local weak DOFs of cell c.

        Layout matches the local weak-Laplacian columns: interior block,
        then one trace block per edge, then one normal block per edge, edges
        in ring order.
        """
        idx = list(range(c * self.cell_block, (c + 1) * self.cell_block))
        for e in self.mesh.cell_edges[c]:
            idx.extend(range(*self._trace_range(e)))
        for e in self.mesh.cell_edges[c]:
            idx.extend(range(*self._normal_range(e)))
        return np.array(idx, dtype=int)


def build_dofmap(mesh, k):
    return DofMap(mesh, k)


@dataclass
class WeakFunction:
    """Coefficient vector over the weak-function DOF families."""

    dofmap: DofMap
    coeffs: np.ndarray

    @classmethod
    def zeros(cls, dofmap):
        return cls(dofmap, np.zeros(dofmap.total_dofs))

    def copy(self):
        return WeakFunction(self.dofmap, self.coeffs.copy())

    def interior(self, cell):
        return self.coeffs[self.dofmap.cell_slice(cell)]

    def trace(self, edge):
        return self.coeffs[self.dofmap.trace_slice(edge)]

    def normal(self, edge):
        return self.coeffs[self.dofmap.normal_slice(edge)]

    def boundary_magnitude(self):
        """Largest boundary DOF, zero for members of the zero-trace subspace."""
        if len(self.dofmap.boundary_dofs) == 0:
            return 0.0
        return float(np.abs(self.coeffs[self.dofmap.boundary_dofs]).max())

    def __add__(self, other):
        self._check_compatible(other)
        return WeakFunction(self.dofmap, self.coeffs + other.coeffs)

    def __sub__(self, other):
        self._check_compatible(other)
        return WeakFunction(self.dofmap, self.coeffs - other.coeffs)

    def __mul__(self, alpha):
        return WeakFunction(self.dofmap, self.coeffs * float(alpha))

    __rmul__ = __mul__

    def __neg__(self):
        return WeakFunction(self.dofmap, -self.coeffs)

    def _check_compatible(self, other):
        if other.dofmap is not self.dofmap:
            raise ValueError("weak functions live on different DOF maps")
