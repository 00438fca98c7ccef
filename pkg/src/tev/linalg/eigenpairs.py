from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

__all__ = ["EigenPairSet", "a_normalize", "fix_phase", "a_inner", "biorthogonalize",
           "pencil_residuals", "jacobi_scale", "NotPositiveError"]

# entries within this relative margin of the largest magnitude count as ties
_PHASE_TIE = 1e-8


class NotPositiveError(ArithmeticError):
    """``x^H A x`` is not positive."""


def _apply(A, x):
    return A @ x


def a_inner(A, x, y) -> complex:
    """``y^H A x``: the A-form with trial ``x`` and test ``y``."""
    return complex(np.vdot(y, _apply(A, x)))


def fix_phase(x: np.ndarray) -> np.ndarray:
    """Rotate ``x`` so its (first) largest-magnitude entry is real positive."""
    mag = np.abs(x)
    top = mag.max()
    if top == 0.0:
        return x
    idx = int(np.argmax(mag >= (1.0 - _PHASE_TIE) * top))
    return x * (np.conj(x[idx]) / mag[idx])


def a_normalize(x, A) -> np.ndarray:
    """Scale to unit A-norm and fix the phase; invariant under ``x -> c x``."""
    x = np.asarray(x, dtype=complex)
    nrm2 = np.vdot(x, _apply(A, x)).real
    if not nrm2 > 0.0:
        raise NotPositiveError(f"x^H A x = {nrm2:.3e} is not positive")
    return fix_phase(x / np.sqrt(nrm2))


def jacobi_scale(A) -> np.ndarray:
    """``diag(|A_ii|)^{-1/2}`` with unit entries where the diagonal vanishes."""
    d = np.abs(A.diagonal())
    return np.where(d > 0, 1.0 / np.sqrt(np.where(d > 0, d, 1.0)), 1.0)


def pencil_residuals(A, B, values, right, left):
    """Relative residuals ``||D(A x - lam B x)|| / ||D A x||`` and the left
    analogue with ``A^H``, ``conj(lam)``, ``B^H``.

    ``D = diag(A)^{-1/2}``: raw 2-norms are dominated by the badly scaled
    derivative DOFs and saturate far above the attainable accuracy.
    """
    d = jacobi_scale(A)[:, None]
    values = np.asarray(values, dtype=complex)

    def rel(M, N, lam, X):
        MX = d * (M @ X)
        R = MX - lam[None, :] * (d * (N @ X))
        return np.linalg.norm(R, axis=0) / np.maximum(np.linalg.norm(MX, axis=0), 1e-300)

    if len(values) == 0:
        return np.zeros(0), (np.zeros(0) if left is not None else None)
    rr = rel(A, B, values, right)
    lr = None
    if left is not None:
        lr = rel(A.conj().T, B.conj().T, np.conj(values), left)
    return rr, lr


def clusters(values: np.ndarray, rtol: float) -> list[list[int]]:
    """Group indices whose eigenvalues agree to ``rtol`` (transitively)."""
    values = np.asarray(values, dtype=complex)
    close = np.abs(values[:, None] - values[None, :]) <= \
        rtol * np.maximum(np.abs(values)[None, :], 1e-300)
    close = close | close.T
    label = -np.ones(len(values), dtype=int)
    groups: list[list[int]] = []
    for i in range(len(values)):
        if label[i] >= 0:
            continue
        stack, g = [i], []
        label[i] = len(groups)
        while stack:
            k = stack.pop()
            g.append(k)
            for nb in np.flatnonzero(close[k] & (label < 0)):
                label[nb] = len(groups)
                stack.append(int(nb))
        groups.append(sorted(g))
    return groups


def biorthogonalize(A, values, right, left, rtol: float = 1e-6) -> np.ndarray:
    """Rotate left vectors inside each eigenvalue cluster so that the
    cluster block of ``Y^H A X`` is diagonal. Returns the new left vectors."""
    left = left.copy()
    for g in clusters(np.asarray(values), rtol):
        if len(g) < 2:
            continue
        X, Y = right[:, g], left[:, g]
        G = Y.conj().T @ (A @ X)
        try:
            left[:, g] = Y @ np.linalg.inv(G).conj().T
        except np.linalg.LinAlgError:
            continue
    return left


@dataclass
class EigenPairSet:
    """Eigenvalues with right (primal) and left (dual) vectors.

    Right vectors satisfy ``A x = lam B x``, left vectors
    ``A^H y = conj(lam) B^H y``; both have unit A-norm. Residuals are the
    Jacobi-scaled relative residuals of :func:`pencil_residuals`.
    """

    values: np.ndarray
    right: np.ndarray
    left: np.ndarray | None = None
    right_residuals: np.ndarray | None = None
    left_residuals: np.ndarray | None = None
    info: dict = field(default_factory=dict)

    def __len__(self) -> int:
        return len(self.values)

    @property
    def k(self) -> np.ndarray:
        """Principal square roots ``k = sqrt(lam)`` (nonnegative real part)."""
        return np.sqrt(np.asarray(self.values, dtype=complex))

    def subset(self, idx) -> "EigenPairSet":
        idx = list(idx)
        pick = lambda a: None if a is None else (a[:, idx] if a.ndim == 2 else a[idx])
        return EigenPairSet(self.values[idx], pick(self.right), pick(self.left),
                            pick(self.right_residuals), pick(self.left_residuals),
                            dict(self.info))
