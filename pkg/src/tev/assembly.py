"""Sparse assembly of the transmission-eigenvalue pencil ``A x = lambda B x``.

On ``S^h x S^h`` with unknowns ``(u, w)`` and tests ``(v, z)``::

    A = [[K, 0], [0, M]]          K_ij = int 1/(n-1) lap(phi_j) lap(phi_i)
    B = [[B_uu, -M_c], [M, 0]]    M_c  = int n/(n-1) phi_j phi_i

``B_uu`` is the product-rule expansion of
``(grad(u/(n-1)), grad v) + (grad u, grad(n v/(n-1)))``.
Rows index test functions, columns trial functions.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .bfs import FeSpace, ProductLayout, shape_functions
from .mesh import Domain

__all__ = [
    "RefractionField", "ConditionC1Error", "FormMatrices", "gauss_rule",
    "assemble_A", "assemble_B", "assemble_forms", "element_integrals",
]

DEFAULT_QUAD_ORDER = 5


class ConditionC1Error(ValueError):
    """Refraction index not bounded below by 1 + delta on the domain."""


@dataclass(frozen=True)
class RefractionField:
    """``n(x) = a + b1*x1 + b2*x2``; a constant field has ``b1 = b2 = 0``."""

    a: float
    b1: float = 0.0
    b2: float = 0.0

    @classmethod
    def constant(cls, c: float) -> "RefractionField":
        return cls(float(c))

    @classmethod
    def affine(cls, a: float, b1: float, b2: float) -> "RefractionField":
        return cls(float(a), float(b1), float(b2))

    @property
    def is_constant(self) -> bool:
        return self.b1 == 0.0 and self.b2 == 0.0

    def n(self, x, y):
        return self.a + self.b1 * np.asarray(x) + self.b2 * np.asarray(y)

    def inv_nm1(self, x, y):
        """``1/(n-1)``"""
        return 1.0 / (self.n(x, y) - 1.0)

    def n_over_nm1(self, x, y):
        """``n/(n-1)``"""
        return self.n(x, y) / (self.n(x, y) - 1.0)

    def grad_inv_nm1(self, x, y):
        """``grad(1/(n-1)) = grad(n/(n-1)) = -grad(n)/(n-1)^2``"""
        f = -1.0 / (self.n(x, y) - 1.0) ** 2
        return self.b1 * f, self.b2 * f

    def minimum(self, domain: Domain) -> float:
        corners = domain.corners
        return float(np.min(self.n(corners[:, 0], corners[:, 1])))

    def check_c1(self, domain: Domain) -> None:
        lo = self.minimum(domain)
        if not lo > 1.0:
            raise ConditionC1Error(
                f"refraction index must satisfy n >= 1 + delta on {domain.value}; "
                f"min n = {lo:g}")

    def describe(self) -> str:
        if self.is_constant:
            return f"{self.a:g}"
        return f"affine {self.a:g} {self.b1:g} {self.b2:g}"


def gauss_rule(order: int) -> tuple[np.ndarray, np.ndarray]:
    """Tensor Gauss-Legendre rule on [0, 1]^2.

    Returns ``(points (order**2, 2), weights (order**2,))``; weights sum to 1.
    """
    if not 1 <= order <= 10:
        raise ValueError(f"quadrature order must lie in [1, 10], got {order}")
    t, w = np.polynomial.legendre.leggauss(order)
    t = 0.5 * (t + 1.0)
    w = 0.5 * w
    X, Y = np.meshgrid(t, t, indexing="xy")
    W = np.outer(w, w)
    return np.column_stack([X.ravel(), Y.ravel()]), W.ravel()


def _cell_points(space: FeSpace, pts: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    mesh = space.mesh
    origin = mesh.nodes[mesh.cells[:, 0]]
    s = mesh.cell_side
    return origin[:, 0:1] + s * pts[None, :, 0], origin[:, 1:2] + s * pts[None, :, 1]


def element_integrals(space: FeSpace, n: RefractionField, quad_order: int = DEFAULT_QUAD_ORDER):
    """Per-cell 16x16 matrices ``(K, M, Mc, Buu)``, each shaped (ncell, 16, 16)."""
    pts, wts = gauss_rule(quad_order)
    s = space.mesh.cell_side
    sf = shape_functions(pts[:, 0], pts[:, 1], s)
    x, y = _cell_points(space, pts)
    jw = wts * s * s
    c_inv = n.inv_nm1(x, y) * jw
    c_rat = n.n_over_nm1(x, y) * jw
    gx, gy = n.grad_inv_nm1(x, y)
    lap = sf["dxx"] + sf["dyy"]
    val, dx, dy = sf["val"], sf["dx"], sf["dy"]

    K = np.einsum("cq,iq,jq->cij", c_inv, lap, lap)
    M = np.einsum("q,iq,jq->ij", jw, val, val)
    M = np.broadcast_to(M, K.shape)
    Mc = np.einsum("cq,iq,jq->cij", c_rat, val, val)
    grad = np.einsum("iq,jq->ijq", dx, dx) + np.einsum("iq,jq->ijq", dy, dy)
    Buu = np.einsum("cq,ijq->cij", c_inv + c_rat, grad)
    if not n.is_constant:
        gxw, gyw = gx * jw, gy * jw
        # phi_j grad(1/(n-1)).grad(phi_i) + phi_i grad(phi_j).grad(n/(n-1))
        gi = np.einsum("cq,iq->ciq", gxw, dx) + np.einsum("cq,iq->ciq", gyw, dy)
        Buu = Buu + np.einsum("ciq,jq->cij", gi, val) + np.einsum("cjq,iq->cij", gi, val)
    # symmetric integrands: enforce exact symmetry of the element blocks
    K = 0.5 * (K + K.transpose(0, 2, 1))
    Mc = 0.5 * (Mc + Mc.transpose(0, 2, 1))
    M = 0.5 * (M + M.transpose(0, 2, 1))
    return K, M, Mc, Buu


def _scatter(space: FeSpace, elem: np.ndarray) -> sp.csr_matrix:
    dofs = space.cell_dofs
    rows = np.repeat(dofs[:, :, None], 16, axis=2)
    cols = np.repeat(dofs[:, None, :], 16, axis=1)
    keep = (rows >= 0) & (cols >= 0)
    mat = sp.coo_matrix((elem[keep], (rows[keep], cols[keep])),
                        shape=(space.n_free, space.n_free)).tocsr()
    mat.sum_duplicates()
    mat.sort_indices()
    return mat


@dataclass(frozen=True)
class FormMatrices:
    """Assembled pencil plus the scalar blocks it was built from."""

    A: sp.csr_matrix
    B: sp.csr_matrix
    K: sp.csr_matrix
    M: sp.csr_matrix
    Mc: sp.csr_matrix
    Buu: sp.csr_matrix
    layout: ProductLayout


def _blocks(layout: ProductLayout, n: RefractionField, quad_order: int):
    space = layout.scalar_space
    n.check_c1(space.mesh.domain)
    K, M, Mc, Buu = element_integrals(space, n, quad_order)
    K, M, Mc, Buu = (_scatter(space, e) for e in (K, M, Mc, Buu))
    K = ((K + K.T) * 0.5).tocsr()
    M = ((M + M.T) * 0.5).tocsr()
    Mc = ((Mc + Mc.T) * 0.5).tocsr()
    return K, M, Mc, Buu


def assemble_A(layout: ProductLayout, n: RefractionField,
               quad_order: int = DEFAULT_QUAD_ORDER) -> sp.csr_matrix:
    return assemble_forms(layout, n, quad_order).A


def assemble_B(layout: ProductLayout, n: RefractionField,
               quad_order: int = DEFAULT_QUAD_ORDER) -> sp.csr_matrix:
    return assemble_forms(layout, n, quad_order).B


def assemble_forms(layout: ProductLayout, n: RefractionField,
                   quad_order: int = DEFAULT_QUAD_ORDER) -> FormMatrices:
    """Assemble ``A`` and ``B`` on the product space in one pass."""
    K, M, Mc, Buu = _blocks(layout, n, quad_order)
    A = sp.block_diag([K, M], format="csr")
    B = sp.bmat([[Buu, -Mc], [M, None]], format="csr")
    A.sort_indices()
    B.sort_indices()
    return FormMatrices(A, B, K, M, Mc, Buu, layout)
