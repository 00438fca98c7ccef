"""Bogner-Fox-Schmit bicubic Hermite element on square cells.

Each node carries four degrees of freedom ``(u, u_x, u_y, u_xy)`` stored as
true physical derivatives; the element shape functions carry the
``cell_side`` powers. All four DOFs of boundary nodes are eliminated, which
realizes the clamped condition ``u = du/dn = 0``.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .mesh import RectMesh

__all__ = [
    "DERIVS", "hermite_basis", "shape_functions", "element_eval",
    "FeSpace", "ProductLayout", "build_space", "prolongation", "evaluate",
    "evaluate_many", "interpolate",
]

DERIVS = ("val", "dx", "dy", "dxx", "dyy", "dxy")
CONSTRAINED = -1

# reference corners, counterclockwise from the lower-left one
_CORNERS = ((0, 0), (1, 0), (1, 1), (0, 1))
# (x-factor is slope, y-factor is slope) for dof kinds u, u_x, u_y, u_xy
_KINDS = ((0, 0), (1, 0), (0, 1), (1, 1))
# derivative orders (in xi, in eta) for every entry of DERIVS
_ORDERS = {"val": (0, 0), "dx": (1, 0), "dy": (0, 1),
           "dxx": (2, 0), "dyy": (0, 2), "dxy": (1, 1)}


def hermite_basis(t, derivative_order: int = 0) -> np.ndarray:
    """Cubic Hermite functions on [0, 1] in the order
    (value at 0, slope at 0, value at 1, slope at 1).

    ``t`` may be a scalar or an array; the result has shape ``(4,) + t.shape``.
    """
    t = np.asarray(t, dtype=float)
    if derivative_order == 0:
        return np.array([1 - 3 * t**2 + 2 * t**3, t - 2 * t**2 + t**3,
                         3 * t**2 - 2 * t**3, -t**2 + t**3])
    if derivative_order == 1:
        return np.array([-6 * t + 6 * t**2, 1 - 4 * t + 3 * t**2,
                         6 * t - 6 * t**2, -2 * t + 3 * t**2])
    if derivative_order == 2:
        return np.array([-6 + 12 * t, -4 + 6 * t, 6 - 12 * t, -2 + 6 * t])
    raise ValueError("derivative_order must be 0, 1 or 2")


def shape_functions(xi, eta, side: float, derivs=DERIVS) -> dict[str, np.ndarray]:
    """Physical shape-function values at reference points.

    Returns ``{deriv: array (16, npts)}``; local dof ``4*corner + kind``.
    """
    xi = np.atleast_1d(np.asarray(xi, dtype=float))
    eta = np.atleast_1d(np.asarray(eta, dtype=float))
    hx = [hermite_basis(xi, d) for d in range(3)]
    hy = [hermite_basis(eta, d) for d in range(3)]
    out = {}
    for name in derivs:
        ox, oy = _ORDERS[name]
        vals = np.empty((16, xi.size))
        for c, (a, b) in enumerate(_CORNERS):
            for k, (sx, sy) in enumerate(_KINDS):
                fx = hx[ox][2 * a + sx]
                fy = hy[oy][2 * b + sy]
                scale = side ** (sx + sy - ox - oy)
                vals[4 * c + k] = scale * fx * fy
        out[name] = vals
    return out


def element_eval(side: float, local_dof: int, point, deriv: str = "val") -> float:
    """Single shape function (or derivative) of a cell with the given side."""
    xi, eta = point
    return float(shape_functions(xi, eta, side, (deriv,))[deriv][local_dof, 0])


@dataclass(frozen=True, eq=False)
class FeSpace:
    """Clamped BFS space on a mesh.

    ``free_map[node, kind]`` is the global free index or ``-1`` for
    eliminated DOFs; ``cell_dofs[c, 4*corner + kind]`` is the same map laid
    out per cell.
    """

    mesh: RectMesh
    free_map: np.ndarray
    n_free: int

    dofs_per_node = 4

    @property
    def cell_dofs(self) -> np.ndarray:
        return self.free_map[self.mesh.cells].reshape(self.mesh.n_cells, 16)

    def layout(self) -> "ProductLayout":
        return ProductLayout(self)


@dataclass(frozen=True)
class ProductLayout:
    """Coefficient layout of ``S^h x S^h``: u-block first, then w-block."""

    scalar_space: FeSpace

    @property
    def n_free(self) -> int:
        return self.scalar_space.n_free

    @property
    def total_dim(self) -> int:
        return 2 * self.scalar_space.n_free

    @property
    def u_slice(self) -> slice:
        return slice(0, self.n_free)

    @property
    def w_slice(self) -> slice:
        return slice(self.n_free, 2 * self.n_free)

    def split(self, x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        x = np.asarray(x)
        if x.shape[0] != self.total_dim:
            raise ValueError(f"expected length {self.total_dim}, got {x.shape[0]}")
        return x[self.u_slice], x[self.w_slice]

    def join(self, u: np.ndarray, w: np.ndarray) -> np.ndarray:
        return np.concatenate([u, w])


def build_space(mesh: RectMesh) -> FeSpace:
    free_map = np.full((mesh.n_nodes, 4), CONSTRAINED, dtype=np.int64)
    interior = mesh.interior_nodes
    free_map[interior] = np.arange(4 * len(interior)).reshape(-1, 4)
    return FeSpace(mesh, free_map, 4 * len(interior))


def _node_data(space: FeSpace, coeffs: np.ndarray) -> np.ndarray:
    """Expand free coefficients to (n_nodes, 4) nodal data with zeros."""
    full = np.zeros((space.mesh.n_nodes, 4), dtype=np.result_type(coeffs, float))
    mask = space.free_map >= 0
    full[mask] = coeffs[space.free_map[mask]]
    return full


def evaluate_many(space: FeSpace, coeffs, points, deriv: str = "val") -> np.ndarray:
    """Evaluate an FE function (or derivative) at several points."""
    coeffs = np.asarray(coeffs)
    if coeffs.shape[0] != space.n_free:
        raise ValueError(f"expected {space.n_free} coefficients, got {coeffs.shape[0]}")
    nodal = _node_data(space, coeffs)
    mesh = space.mesh
    points = np.atleast_2d(np.asarray(points, dtype=float))
    out = np.empty(len(points), dtype=nodal.dtype)
    for p, pt in enumerate(points):
        cell, xi, eta = mesh.locate(pt)
        phi = shape_functions(xi, eta, mesh.cell_side, (deriv,))[deriv][:, 0]
        out[p] = phi @ nodal[mesh.cells[cell]].reshape(16)
    return out


def evaluate(space: FeSpace, coeffs, point, deriv: str = "val"):
    """Evaluate an FE function at one point; ``ValueError`` outside the domain."""
    return evaluate_many(space, coeffs, [point], deriv)[0]


def interpolate(space: FeSpace, f, fx, fy, fxy) -> np.ndarray:
    """Hermite interpolant: free coefficients from nodal data of ``f``.

    The callables take ``(x, y)`` arrays. Boundary data is dropped, so the
    result is exact only for functions clamped on the boundary.
    """
    xy = space.mesh.nodes
    data = np.stack([g(xy[:, 0], xy[:, 1]) for g in (f, fx, fy, fxy)], axis=1)
    out = np.zeros(space.n_free, dtype=data.dtype)
    mask = space.free_map >= 0
    out[space.free_map[mask]] = data[mask]
    return out


def prolongation(coarse: FeSpace, fine: FeSpace) -> sp.csr_matrix:
    """Exact injection of the coarse BFS space into its uniform refinement.

    Row ``(fine node, kind)`` holds the Hermite datum of each coarse basis
    function at that fine node, so ``P @ c`` represents the same function.
    """
    cm, fm = coarse.mesh, fine.mesh
    if fm.parent is not cm:
        raise ValueError("fine space is not the uniform refinement of the coarse space")
    # each fine node sits at a half-integer reference position of some coarse cell
    rows, cols, vals = [], [], []
    cell_dofs = coarse.cell_dofs
    cache = {}
    for node in fm.interior_nodes:
        i, j = fm.lattice[node]
        cell, xi, eta = cm.locate((i / fm.divisions, j / fm.divisions))
        key = (xi, eta)
        if key not in cache:
            sf = shape_functions(xi, eta, cm.cell_side, ("val", "dx", "dy", "dxy"))
            cache[key] = np.stack([sf[d][:, 0] for d in ("val", "dx", "dy", "dxy")])
        block = cache[key]
        cdofs = cell_dofs[cell]
        keep = cdofs >= 0
        for kind in range(4):
            r = fine.free_map[node, kind]
            v = block[kind, keep]
            nz = v != 0.0
            rows.extend([r] * int(nz.sum()))
            cols.extend(cdofs[keep][nz])
            vals.extend(v[nz])
    P = sp.coo_matrix((vals, (rows, cols)), shape=(fine.n_free, coarse.n_free))
    return P.tocsr()
