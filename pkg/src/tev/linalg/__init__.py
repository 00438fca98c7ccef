"""Sparse LU, shift-invert Arnoldi and dense pencil eigensolvers."""
from .arnoldi import ConvergenceError, arnoldi_shift_invert, krylov_schur
from .dense import DegenerateBasisError, dense_pencil_eig
from .eigenpairs import (EigenPairSet, NotPositiveError, a_inner, a_normalize,
                         biorthogonalize, fix_phase, jacobi_scale, pencil_residuals)
from .lu import LuFactor, SingularFactorError, shifted_lu, solve, sparse_lu

__all__ = [
    "ConvergenceError", "arnoldi_shift_invert", "krylov_schur",
    "DegenerateBasisError", "dense_pencil_eig",
    "EigenPairSet", "NotPositiveError", "a_inner", "a_normalize", "biorthogonalize",
    "fix_phase", "jacobi_scale", "pencil_residuals",
    "LuFactor", "SingularFactorError", "shifted_lu", "solve", "sparse_lu",
]
