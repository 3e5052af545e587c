"""Gauss-Lobatto-Legendre (GLL) bases and the trilinear hexahedron map.

Provides 1D GLL nodes/weights/differentiation matrices, Lagrange basis
evaluation at arbitrary points, and the trilinear reference-to-physical
map with Jacobians used by every other module.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .errors import GeometryError

MAX_DEGREE = 12

# Reference corners: bottom quad counter-clockwise viewed from +z, then
# the top quad in the same rotational order.
REF_CORNERS = np.array(
    [
        [-1.0, -1.0, -1.0],
        [+1.0, -1.0, -1.0],
        [+1.0, +1.0, -1.0],
        [-1.0, +1.0, -1.0],
        [-1.0, -1.0, +1.0],
        [+1.0, -1.0, +1.0],
        [+1.0, +1.0, +1.0],
        [-1.0, +1.0, +1.0],
    ]
)

# Local faces 0:-x 1:+x 2:-y 3:+y 4:-z 5:+z.  Corner order follows the
# right-hand rule so the implied normal points outward.
FACE_CORNERS = (
    (0, 4, 7, 3),
    (1, 2, 6, 5),
    (0, 1, 5, 4),
    (3, 7, 6, 2),
    (0, 3, 2, 1),
    (4, 5, 6, 7),
)

# (reference axis, side) of each local face.
FACE_AXIS = ((0, -1), (0, +1), (1, -1), (1, +1), (2, -1), (2, +1))


@dataclass(frozen=True)
class Basis1D:
    """1D GLL collocation basis of a given degree.

    nodes include the endpoints -1 and +1; deriv_matrix[i, j] is the
    derivative of the j-th Lagrange cardinal function at node i.
    """

    degree: int
    nodes: np.ndarray
    weights: np.ndarray
    deriv_matrix: np.ndarray

    @property
    def n(self) -> int:
        return self.degree + 1


def _legendre_and_deriv(p: int, x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Evaluate P_p and P'_p by the three-term recurrence."""
    x = np.asarray(x, dtype=float)
    if p == 0:
        return np.ones_like(x), np.zeros_like(x)
    pm1 = np.ones_like(x)
    pk = x.copy()
    for k in range(1, p):
        pm1, pk = pk, ((2 * k + 1) * x * pk - k * pm1) / (k + 1)
    dp = p * (x * pk - pm1) / (x * x - 1.0 + np.where(np.abs(x) == 1.0, np.inf, 0.0))
    # endpoints: P'_p(+-1) = (+-1)^(p-1) * p(p+1)/2
    ends = np.abs(x) == 1.0
    if np.any(ends):
        dp = np.where(ends, np.sign(x) ** (p - 1) * p * (p + 1) / 2.0, dp)
    return pk, dp


@lru_cache(maxsize=None)
def gll(p: int) -> Basis1D:
    """GLL nodes, weights and differentiation matrix for degree p.

    Nodes are the roots of (1-x^2) P'_p(x), found by Newton iteration
    from Chebyshev-Lobatto initial guesses; weights are
    2 / (p (p+1) P_p(x_i)^2).  Quadrature is exact through degree 2p-1.
    """
    if not 1 <= p <= MAX_DEGREE:
        raise ValueError(f"polynomial degree {p} outside supported range 1..{MAX_DEGREE}")
    x = -np.cos(np.pi * np.arange(p + 1) / p)
    # Newton on q = (1-x^2) P'_p; by the Legendre ODE, q' = -p(p+1) P_p.
    for _ in range(100):
        pk, dp = _legendre_and_deriv(p, x)
        dx = (1.0 - x * x) * dp / (p * (p + 1) * pk)
        x = x + dx
        if np.max(np.abs(dx)) < 1e-15:
            break
    x[0], x[-1] = -1.0, 1.0
    x = 0.5 * (x - x[::-1])  # enforce symmetry about 0
    pk, _ = _legendre_and_deriv(p, x)
    w = 2.0 / (p * (p + 1) * pk * pk)
    return Basis1D(p, x, w, _diff_matrix(x))


def _bary_weights(nodes: np.ndarray) -> np.ndarray:
    diff = nodes[:, None] - nodes[None, :]
    np.fill_diagonal(diff, 1.0)
    return 1.0 / np.prod(diff, axis=1)


def _diff_matrix(nodes: np.ndarray) -> np.ndarray:
    """Collocation differentiation matrix from barycentric weights.

    Diagonal entries are the negated row sums, which makes D annihilate
    constants exactly.
    """
    b = _bary_weights(nodes)
    n = len(nodes)
    d = np.zeros((n, n))
    for i in range(n):
        for j in range(n):
            if i != j:
                d[i, j] = (b[j] / b[i]) / (nodes[i] - nodes[j])
        d[i, i] = -np.sum(d[i, :])
    return d


def lagrange_eval(nodes: np.ndarray, x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Values and first derivatives of all Lagrange cardinals at points x.

    Returns (vals, ders), each of shape (len(x), len(nodes)).  Uses a
    Legendre-Vandermonde change of basis, stable through degree 12.
    """
    from numpy.polynomial import legendre as L

    nodes = np.asarray(nodes, dtype=float)
    x = np.atleast_1d(np.asarray(x, dtype=float))
    p = len(nodes) - 1
    a = L.legvander(nodes, p)
    v = L.legvander(x, p)
    dv = np.zeros_like(v)
    eye = np.eye(p + 1)
    for k in range(p + 1):
        dv[:, k] = L.legval(x, L.legder(eye[k]))
    coeff = np.linalg.inv(a)
    return v @ coeff, dv @ coeff


def tensor_nodes(basis: Basis1D) -> np.ndarray:
    """Reference coordinates of the 3D tensor GLL grid, shape (n^3, 3).

    Flat index is i*n^2 + j*n + k for (xi_i, eta_j, zeta_k).
    """
    g = np.meshgrid(basis.nodes, basis.nodes, basis.nodes, indexing="ij")
    return np.stack(g, axis=-1).reshape(-1, 3)


def tensor_weights(basis: Basis1D) -> np.ndarray:
    """3D quadrature weights matching :func:`tensor_nodes`."""
    w = basis.weights
    return np.einsum("i,j,k->ijk", w, w, w).ravel()


def face_node_indices(basis: Basis1D, local_face: int) -> np.ndarray:
    """Flat tensor-grid indices of the nodes lying on a local face."""
    n = basis.n
    idx = np.arange(n**3).reshape(n, n, n)
    axis, side = FACE_AXIS[local_face]
    sl = [slice(None)] * 3
    sl[axis] = 0 if side < 0 else n - 1
    return idx[tuple(sl)].ravel()


def trilinear_shape(ref: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Trilinear shape functions and their reference gradients.

    ref has shape (..., 3); returns N (..., 8) and dN (..., 8, 3).
    """
    ref = np.asarray(ref, dtype=float)
    r = REF_CORNERS  # (8, 3)
    one = 1.0 + ref[..., None, :] * r  # (..., 8, 3)
    n = 0.125 * one[..., 0] * one[..., 1] * one[..., 2]
    dn = np.empty(one.shape)
    dn[..., 0] = 0.125 * r[:, 0] * one[..., 1] * one[..., 2]
    dn[..., 1] = 0.125 * r[:, 1] * one[..., 0] * one[..., 2]
    dn[..., 2] = 0.125 * r[:, 2] * one[..., 0] * one[..., 1]
    return n, dn


def map_to_physical(corners: np.ndarray, ref: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Map reference points to physical space.

    corners: (8, 3) element corner coordinates; ref: (..., 3) points in
    [-1, 1]^3.  Returns (x, J) with x (..., 3) and J (..., 3, 3), where
    J[i, r] = dx_i/dxi_r is the exact derivative of the trilinear map.
    """
    n, dn = trilinear_shape(ref)
    x = n @ corners
    j = np.einsum("...ar,ai->...ir", dn, corners)
    return x, j


def invert_map(
    corners: np.ndarray, x: np.ndarray, diameter: float | None = None, max_iter: int = 50
) -> tuple[np.ndarray, bool]:
    """Newton inversion of the trilinear map for a single physical point.

    Returns (ref, converged).  Residual tolerance is 1e-12 times the
    element diameter.
    """
    if diameter is None:
        d = corners[:, None, :] - corners[None, :, :]
        diameter = float(np.sqrt((d * d).sum(-1).max()))
    tol = 1e-12 * diameter
    ref = np.zeros(3)
    for _ in range(max_iter):
        xm, j = map_to_physical(corners, ref)
        res = x - xm
        if np.linalg.norm(res) < tol:
            return ref, True
        try:
            ref = ref + np.linalg.solve(j, res)
        except np.linalg.LinAlgError:
            return ref, False
    return ref, False


@dataclass(frozen=True)
class ElementGeometry:
    """Trilinear-map geometry tabulated at the element's GLL grid."""

    coords: np.ndarray  # (q, 3) physical node positions
    jac: np.ndarray  # (q, 3, 3)
    det: np.ndarray  # (q,)
    inv: np.ndarray  # (q, 3, 3), rows are grad xi_r


def element_geometry(corners: np.ndarray, basis: Basis1D, element_id: int | None = None) -> ElementGeometry:
    """Geometry at the tensor GLL nodes; raises on non-positive Jacobian."""
    ref = tensor_nodes(basis)
    x, j = map_to_physical(corners, ref)
    det = np.linalg.det(j)
    if np.any(det <= 0.0):
        tag = "" if element_id is None else f" in element {element_id}"
        raise GeometryError(f"non-positive Jacobian determinant{tag} (min {det.min():.3e})")
    return ElementGeometry(x, j, det, np.linalg.inv(j))
