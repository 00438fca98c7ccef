"""Dense solver for small pencils with a Hermitian positive definite ``A``."""
from __future__ import annotations

import numpy as np
import scipy.linalg as sla

from .eigenpairs import EigenPairSet, biorthogonalize, fix_phase, pencil_residuals

__all__ = ["DegenerateBasisError", "dense_pencil_eig"]


class DegenerateBasisError(np.linalg.LinAlgError):
    """Cholesky of the A-Gram matrix broke down."""


def dense_pencil_eig(A_r, B_r, inf_tol: float = 1e-12) -> EigenPairSet:
    """All finite eigenpairs of ``A x = lam B x`` for small dense matrices.

    ``A = L L^H`` turns the pencil into ``C z = nu z`` with
    ``C = L^{-1} B L^{-H}`` and ``lam = 1/nu``; pairs with
    ``|nu| <= inf_tol * max|nu|`` are infinite and dropped. Right vectors are
    ``L^{-H} z``, left vectors ``L^{-H} w`` for left eigenvectors ``w`` of
    ``C``; both come out with unit A-norm.
    """
    A_r = np.asarray(A_r)
    B_r = np.asarray(B_r)
    try:
        L = sla.cholesky(A_r, lower=True)
    except np.linalg.LinAlgError as exc:
        raise DegenerateBasisError(f"A is not positive definite: {exc}") from exc
    LB = sla.solve_triangular(L, B_r, lower=True)
    C = sla.solve_triangular(L, LB.conj().T, lower=True).conj().T
    nu, W, Z = sla.eig(C, left=True, right=True)
    scale = np.abs(nu).max() if nu.size else 0.0
    keep = np.abs(nu) > inf_tol * scale
    nu, W, Z = nu[keep], W[:, keep], Z[:, keep]
    lam = 1.0 / nu
    order = np.lexsort((lam.imag, np.abs(lam)))
    lam, W, Z = lam[order], W[:, order], Z[:, order]

    # left/right pairing in standard coordinates: y^H A x = w^H z
    W = biorthogonalize(np.eye(len(C)), lam, Z, W)
    Z = Z / np.linalg.norm(Z, axis=0)
    W = W / np.linalg.norm(W, axis=0)
    X = sla.solve_triangular(L, Z, lower=True, trans="C")
    Y = sla.solve_triangular(L, W, lower=True, trans="C")
    X = np.column_stack([fix_phase(X[:, j]) for j in range(X.shape[1])]) if X.size else X
    Y = np.column_stack([fix_phase(Y[:, j]) for j in range(Y.shape[1])]) if Y.size else Y
    rr, lr = pencil_residuals(A_r, B_r, lam, X, Y)
    return EigenPairSet(lam, X, Y, rr, lr)
