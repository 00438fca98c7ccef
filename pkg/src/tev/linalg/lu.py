"""Sparse LU with partial pivoting (SuperLU) behind a small solve interface."""
from __future__ import annotations

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .eigenpairs import jacobi_scale

__all__ = ["SingularFactorError", "LuFactor", "sparse_lu", "solve", "shifted_lu"]

PIVOT_RTOL = 1e-14


class SingularFactorError(ArithmeticError):
    """Factorization hit a (numerically) zero pivot."""

    def __init__(self, message: str, pivot: int | None = None):
        super().__init__(message)
        self.pivot = pivot


class LuFactor:
    """LU factors of a square sparse matrix.

    The matrix is first scaled symmetrically, ``D M D`` with
    ``D = diag(|M_ii|)^{-1/2}`` (or a caller-supplied ``scale``): derivative
    DOFs make raw diagonals span many decades, and the pivot test is only
    meaningful after scaling.

    ``solve(b, trans)`` accepts real or complex right-hand sides; with a real
    factor the real and imaginary parts are solved separately.
    """

    def __init__(self, matrix: sp.spmatrix, scale: np.ndarray | None = None):
        matrix = sp.csc_matrix(matrix)
        if matrix.shape[0] != matrix.shape[1]:
            raise ValueError(f"matrix must be square, got {matrix.shape}")
        self.shape = matrix.shape
        self.dtype = matrix.dtype
        if scale is None:
            scale = jacobi_scale(matrix)
        self.scale = np.asarray(scale, dtype=float)
        D = sp.diags(self.scale)
        matrix = sp.csc_matrix(D @ matrix @ D)
        try:
            self._lu = spla.splu(matrix)
        except RuntimeError as exc:
            raise SingularFactorError(f"factorization failed: {exc}") from exc
        diag = np.abs(self._lu.U.diagonal())
        scale = diag.max() if diag.size else 0.0
        bad = np.flatnonzero(diag <= PIVOT_RTOL * scale) if scale > 0 else np.arange(diag.size)
        if bad.size:
            raise SingularFactorError(
                f"numerically singular matrix: pivot {bad[0]} is {diag[bad[0]]:.3e}",
                pivot=int(bad[0]))

    @property
    def is_complex(self) -> bool:
        return np.iscomplexobj(np.empty(0, dtype=self.dtype))

    def solve(self, rhs, trans: str = "N") -> np.ndarray:
        """Solve ``M x = rhs`` (``trans='N'``), ``M^T x`` (``'T'``) or ``M^H x`` (``'H'``)."""
        rhs = np.asarray(rhs)
        if rhs.shape[0] != self.shape[0]:
            raise ValueError(f"dimension mismatch: {rhs.shape[0]} vs {self.shape[0]}")
        d = self.scale if rhs.ndim == 1 else self.scale[:, None]
        return d * self._solve_scaled(d * rhs, trans)

    def _solve_scaled(self, rhs: np.ndarray, trans: str) -> np.ndarray:
        if self.is_complex:
            return self._lu.solve(rhs.astype(complex, copy=False), trans=trans)
        if np.iscomplexobj(rhs):
            t = "T" if trans == "H" else trans
            return self._lu.solve(np.ascontiguousarray(rhs.real), trans=t) + \
                1j * self._lu.solve(np.ascontiguousarray(rhs.imag), trans=t)
        return self._lu.solve(rhs.astype(float, copy=False), trans="T" if trans == "H" else trans)


def sparse_lu(matrix: sp.spmatrix) -> LuFactor:
    return LuFactor(matrix)


def solve(factor: LuFactor, rhs, trans: str = "N") -> np.ndarray:
    return factor.solve(rhs, trans)


def shifted_lu(A: sp.spmatrix, B: sp.spmatrix, sigma: complex) -> LuFactor:
    """Factor ``A - sigma B``, scaled by the (positive) diagonal of ``A``;
    real arithmetic when ``sigma`` is real."""
    sigma = complex(sigma)
    if sigma.imag == 0.0:
        M = (A - sigma.real * B).astype(float)
    else:
        M = (A.astype(complex) - sigma * B.astype(complex))
    return LuFactor(M, jacobi_scale(A))
