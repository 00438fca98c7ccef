"""Shift-invert Arnoldi (Krylov-Schur restarts) for ``A x = lam B x``.

The operator ``(A - sigma B)^{-1} B`` maps eigenvalues nearest ``sigma`` to
the largest Ritz values ``nu`` with ``lam = sigma + 1/nu``. Left vectors come
from a second run on ``(A - sigma B)^{-H} B^H`` that reuses the factorization.

A single Krylov sequence only sees one direction of a repeated eigenvalue,
so after convergence the wanted Schur vectors are locked and the iteration is
continued from a fresh random vector until the wanted set stops changing.
"""
from __future__ import annotations

import logging

import numpy as np
import scipy.linalg as sla

from .eigenpairs import EigenPairSet, a_normalize, biorthogonalize, pencil_residuals
from .lu import LuFactor, shifted_lu

__all__ = ["ConvergenceError", "arnoldi_shift_invert", "krylov_schur"]

log = logging.getLogger(__name__)

# drop shift-inverted Ritz values this small (infinite pencil eigenvalues)
NU_FLOOR = 1e-12


class ConvergenceError(RuntimeError):
    """Arnoldi did not converge within the restart budget."""

    def __init__(self, message: str, residuals=None):
        super().__init__(message)
        self.residuals = residuals


def _orthogonalize(V: np.ndarray, w: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    h = V.conj().T @ w
    w = w - V @ h
    h2 = V.conj().T @ w  # second classical Gram-Schmidt pass
    return w - V @ h2, h + h2


def _random_unit(rng, n, V=None):
    v = rng.standard_normal(n) + 1j * rng.standard_normal(n)
    if V is not None and V.shape[1]:
        v, _ = _orthogonalize(V, v)
    return v / np.linalg.norm(v)


def _wanted(values: np.ndarray, count: int) -> np.ndarray:
    """Indices of the ``count`` largest magnitudes, ties by index."""
    return np.argsort(-np.abs(values), kind="stable")[:count]


def _sorted_schur(H: np.ndarray, count: int):
    """Complex Schur form with the ``count`` largest-|.| eigenvalues leading."""
    T, S = sla.schur(H, output="complex")
    mags = np.sort(np.abs(np.diag(T)))[::-1]
    if count >= len(mags):
        return T, S, len(mags)
    thresh = 0.5 * (mags[count - 1] + mags[count])
    T, S, sdim = sla.schur(H, output="complex", sort=lambda z: abs(z) > thresh)
    return T, S, sdim


def krylov_schur(op, n: int, nev: int, m: int, tol: float, max_restarts: int,
                 rng, max_probes: int = 3):
    """Largest-magnitude eigenpairs of a linear operator.

    Returns ``(nu, X, residual_estimates, restarts)`` for the ``nev`` wanted
    Ritz pairs; residuals are ``||op x - nu x|| / |nu|`` with ``||x|| = 1``.
    """
    m = min(m, n)
    nev = min(nev, m - 1) if m > 1 else 1
    keep = min(max(2 * nev, nev + 1), m - 1) if m > 1 else 1
    V = np.zeros((n, m + 1), dtype=complex)
    H = np.zeros((m + 1, m), dtype=complex)
    V[:, 0] = _random_unit(rng, n)
    k = 0
    probes = 0
    previous = None
    best = None
    for restart in range(max_restarts + 1):
        for j in range(k, m):
            w, h = _orthogonalize(V[:, :j + 1], op(V[:, j]))
            H[:j + 1, j] = h
            beta = np.linalg.norm(w)
            if beta <= 1e-14 * max(np.linalg.norm(h), 1e-300) or j + 1 >= n:
                # invariant subspace: continue with a fresh direction
                H[j + 1, j] = 0.0
                if j + 1 < n:
                    V[:, j + 1] = _random_unit(rng, n, V[:, :j + 1])
            else:
                H[j + 1, j] = beta
                V[:, j + 1] = w / beta
        Hm = H[:m, :m]
        nu, Z = sla.eig(Hm)
        want = _wanted(nu, nev)
        res = np.abs(H[m, :m] @ Z[:, want]) / np.maximum(np.abs(nu[want]), 1e-300)
        if best is None or res.max() < best.max():
            best = res
        if res.max() <= tol:
            current = nu[want]
            settled = previous is not None and len(previous) == len(current) and all(
                np.min(np.abs(previous - c)) <= 10 * tol * abs(c) for c in current)
            if settled or probes >= max_probes or m >= n:
                X = V[:, :m] @ Z[:, want]
                X /= np.linalg.norm(X, axis=0)
                return nu[want], X, res, restart
            # lock the converged Schur vectors, restart from a random vector
            previous = current
            probes += 1
            T, S, sdim = _sorted_schur(Hm, nev)
            Vk = V[:, :m] @ S[:, :sdim]
            V[:] = 0.0
            H[:] = 0.0
            V[:, :sdim] = Vk
            H[:sdim, :sdim] = T[:sdim, :sdim]
            V[:, sdim] = _random_unit(rng, n, Vk)
            k = sdim
            continue
        T, S, sdim = _sorted_schur(Hm, keep)
        b = H[m, :m] @ S[:, :sdim]
        Vk = V[:, :m] @ S[:, :sdim]
        v_next = V[:, m].copy()
        V[:] = 0.0
        H[:] = 0.0
        V[:, :sdim] = Vk
        V[:, sdim] = v_next
        H[:sdim, :sdim] = T[:sdim, :sdim]
        H[sdim, :sdim] = b
        k = sdim
    raise ConvergenceError(
        f"Arnoldi did not converge in {max_restarts} restarts "
        f"(best residual {best.max():.2e})", residuals=best)


def _pair_left(right_vals: np.ndarray, left_vals: np.ndarray) -> list[int]:
    """Greedy nearest matching of left eigenvalues onto right ones."""
    free = list(range(len(left_vals)))
    out = []
    for lam in right_vals:
        i = min(free, key=lambda t: abs(left_vals[t] - lam))
        free.remove(i)
        out.append(i)
    return out


def arnoldi_shift_invert(A, B, sigma: complex, q: int, krylov_dim: int | None = None,
                         tol: float = 1e-10, max_restarts: int = 50, seed: int = 0,
                         factor: LuFactor | None = None, left: bool = True) -> EigenPairSet:
    """The ``q`` eigenvalues of ``A x = lam B x`` nearest ``sigma``.

    Vectors are A-normalized with fixed phase. ``info`` carries the left
    eigenvalues as found independently (``left_values``) and restart counts.
    Raises ``SingularFactorError`` when ``sigma`` is (numerically) an
    eigenvalue and ``ConvergenceError`` when the restart budget runs out.
    """
    n = A.shape[0]
    if q < 1:
        raise ValueError("q must be >= 1")
    if krylov_dim is None:
        krylov_dim = max(2 * q + 8, 20)
    if krylov_dim < 2 * q + 8 and krylov_dim < n:
        raise ValueError(f"krylov_dim must be >= 2q + 8 = {2 * q + 8}")
    sigma = complex(sigma)
    lu = factor if factor is not None else shifted_lu(A, B, sigma)
    BH = B.conj().T.tocsr()
    rng = np.random.default_rng(seed)
    nev = q + 2 if q + 2 < krylov_dim - 1 else q

    inner_tol = tol
    for attempt in range(4):
        nu, X, _, r_restarts = krylov_schur(lambda x: lu.solve(B @ x), n, nev, krylov_dim,
                                            inner_tol, max_restarts, rng)
        ok = np.abs(nu) > NU_FLOOR * np.abs(nu).max()
        nu, X = nu[ok], X[:, ok]
        lam = sigma + 1.0 / nu
        order = np.argsort(np.abs(lam - sigma), kind="stable")[:q]
        lam, X = lam[order], X[:, order]
        rr, _ = pencil_residuals(A, B, lam, X, None)
        if rr.max() <= tol:
            break
        # the Ritz estimate bounds the operator residual, not the pencil one
        inner_tol = max(inner_tol * min(0.5, 0.5 * tol / rr.max()), 1e-15)
        log.debug("pencil residual %.2e > %.2e, retrying with %.2e", rr.max(), tol, inner_tol)
    right = np.column_stack([a_normalize(X[:, j], A) for j in range(len(lam))])
    info = {"restarts_right": r_restarts, "sigma": sigma}

    Y = None
    if left:
        mu, Yk, _, l_restarts = krylov_schur(lambda y: lu.solve(BH @ y, trans="H"), n, nev,
                                             krylov_dim, inner_tol, max_restarts, rng)
        ok = np.abs(mu) > NU_FLOOR * np.abs(mu).max()
        mu, Yk = mu[ok], Yk[:, ok]
        left_vals = sigma + 1.0 / np.conj(mu)
        pick = _pair_left(lam, left_vals)
        info["left_values"] = left_vals[pick]
        info["restarts_left"] = l_restarts
        Y = Yk[:, pick]
        Y = biorthogonalize(A, lam, right, Y)
        Y = np.column_stack([a_normalize(Y[:, j], A) for j in range(len(lam))])
    rr, lr = pencil_residuals(A, B, lam, right, Y)
    return EigenPairSet(lam, right, Y, rr, lr, info)
