"""Multigrid correction scheme for the transmission-eigenvalue pencil.

Level 1 is solved directly. Every later level ``m+1`` solves ``2q`` source
problems on the fine mesh (primal and dual), then a small eigenproblem on the
level-1 space enriched with those solutions::

    U x V = (S^H + span{u_hat, u_hat*}) x (S^H + span{w_hat, w_hat*})

The coarse space is always the level-1 space, carried to the fine level by
the cumulative prolongation.
"""
from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .assembly import DEFAULT_QUAD_ORDER, FormMatrices, RefractionField, assemble_forms
from .bfs import FeSpace, build_space, prolongation
from .linalg import (DegenerateBasisError, EigenPairSet, LuFactor, a_normalize,
                     arnoldi_shift_invert, dense_pencil_eig, pencil_residuals, sparse_lu)
from .mesh import Domain, RectMesh, build_mesh, mesh_size, refine_uniform

__all__ = [
    "MultigridConfig", "LevelState", "BiorthReport", "MultigridError", "MatchError",
    "Level", "coarse_solve", "bvp_solve", "enriched_basis", "correction_step",
    "match_pairs", "run_multigrid", "quasi_biorthogonality", "direct_solve",
    "prolong_product", "build_levels",
]

log = logging.getLogger(__name__)

DROP_TOL = 1e-10          # pivot floor of the enrichment Gram Cholesky
CONJ_RTOL = 1e-6          # two eigenvalues count as a conjugate pair
BIORTH_FLOOR = 1e-3       # quasi-biorthogonality violation threshold


class MultigridError(RuntimeError):
    """Raised when a level fails; ``states`` holds the levels finished so far."""

    def __init__(self, message: str, states=None):
        super().__init__(message)
        self.states = list(states or [])


class MatchError(MultigridError):
    """No consistent continuation of the tracked eigenvalues."""


@dataclass(frozen=True)
class MultigridConfig:
    domain: Domain = Domain.UNIT_SQUARE
    refraction: RefractionField = field(default_factory=lambda: RefractionField(16.0))
    coarse_divisions: int = 8
    levels: int = 4
    q: int = 1
    shift: complex = 2.0
    quad_order: int = DEFAULT_QUAD_ORDER
    tol: float = 1e-10
    krylov_dim: int | None = None
    max_restarts: int = 50
    seed: int = 0

    def __post_init__(self):
        if self.levels < 1:
            raise ValueError("levels must be >= 1")
        if self.q < 1:
            raise ValueError("q must be >= 1")
        if self.coarse_divisions < 1:
            raise ValueError("coarse_divisions must be >= 1")
        self.refraction.check_c1(self.domain)


@dataclass
class BiorthReport:
    """``G[j, l]`` = A-pairing of primal ``j`` with dual ``l``."""

    G: np.ndarray
    min_diagonal: float
    max_off_diagonal: float
    violated: bool


@dataclass
class Level:
    mesh: RectMesh
    space: FeSpace
    forms: FormMatrices
    from_coarse: sp.csr_matrix      # scalar prolongation level 1 -> this level
    from_previous: sp.csr_matrix | None = None


@dataclass
class LevelState:
    """Eigenpair approximations on one level, vectors in that level's layout."""

    level: int
    h: float
    values: np.ndarray
    primal: np.ndarray
    dual: np.ndarray
    residuals: np.ndarray
    dual_residuals: np.ndarray
    seconds: float = 0.0
    biorth: BiorthReport | None = None
    info: dict = field(default_factory=dict)

    @property
    def k(self) -> np.ndarray:
        return np.sqrt(self.values.astype(complex))

    @property
    def q(self) -> int:
        return len(self.values)


def prolong_product(P: sp.spmatrix, x: np.ndarray) -> np.ndarray:
    """Apply a scalar prolongation to both halves of product-space vectors."""
    nc = P.shape[1]
    if x.shape[0] != 2 * nc:
        raise ValueError(f"expected length {2 * nc}, got {x.shape[0]}")
    return np.concatenate([P @ x[:nc], P @ x[nc:]])


def quasi_biorthogonality(state: LevelState, A) -> BiorthReport:
    X, Y = state.primal, state.dual
    G = (Y.conj().T @ (A @ X)).T
    q = G.shape[0]
    diag = np.abs(np.diag(G))
    off = np.abs(G[~np.eye(q, dtype=bool)])
    min_diag = float(diag.min())
    return BiorthReport(G, min_diag, float(off.max()) if off.size else 0.0,
                        bool(min_diag < BIORTH_FLOOR))


def _close_under_conjugation(E: EigenPairSet, q: int) -> list[tuple[complex, np.ndarray,
                                                                    np.ndarray, float, float]]:
    """Take pairs in order and add the missing partner of every complex value
    until at least ``q`` are collected."""
    out = []
    for j, lam in enumerate(E.values):
        if len(out) >= q:
            break
        item = (lam, E.right[:, j], E.left[:, j], E.right_residuals[j], E.left_residuals[j])
        out.append(item)
        complex_value = abs(lam.imag) > CONJ_RTOL * abs(lam)
        if complex_value and not any(abs(np.conj(lam) - o[0]) <= CONJ_RTOL * abs(lam)
                                     for o in out):
            # real pencil: the conjugate vectors are eigenvectors for conj(lam)
            out.append((np.conj(lam), np.conj(item[1]), np.conj(item[2]), item[3], item[4]))
    return out


def coarse_solve(forms: FormMatrices, sigma: complex, q: int, tol: float = 1e-10,
                 krylov_dim: int | None = None, max_restarts: int = 50,
                 seed: int = 0, level: int = 1, h: float = float("nan")) -> LevelState:
    """Eigenpairs nearest ``sigma`` on the coarsest level, closed under conjugation.

    The returned set can hold ``q + 1`` values when the last one needs its
    conjugate partner.
    """
    t0 = time.perf_counter()
    E = arnoldi_shift_invert(forms.A, forms.B, sigma, q, krylov_dim=krylov_dim, tol=tol,
                             max_restarts=max_restarts, seed=seed)
    pairs = _close_under_conjugation(E, q)
    values = np.array([p[0] for p in pairs], dtype=complex)
    state = LevelState(
        level=level, h=h, values=values,
        primal=np.column_stack([p[1] for p in pairs]),
        dual=np.column_stack([p[2] for p in pairs]),
        residuals=np.array([p[3] for p in pairs]),
        dual_residuals=np.array([p[4] for p in pairs]),
        info={"left_values": E.info.get("left_values"), "method": "arnoldi"})
    state.biorth = quasi_biorthogonality(state, forms.A)
    state.seconds = time.perf_counter() - t0
    return state


def bvp_solve(A_factor: LuFactor, B, lam: complex, x: np.ndarray, dual: bool = False) -> np.ndarray:
    """Source problem on the fine level for a prolonged vector ``x``.

    Primal: ``A u = lam B x``. Dual: ``A^T y = conj(lam) B^T x``; ``A`` is
    symmetric, so both reuse the factorization of ``A``.
    """
    if dual:
        return A_factor.solve(np.conj(lam) * (B.T @ x), trans="T")
    return A_factor.solve(lam * (B @ x))


def _realify(vectors: np.ndarray, A) -> np.ndarray:
    """Real basis of ``span{v, conj(v)}`` for every column; negligible parts dropped."""
    cols = []
    for v in vectors.T:
        nv = np.sqrt(abs(np.vdot(v, A @ v)))
        if nv == 0.0:
            continue
        for part in (v.real, v.imag):
            npart = np.sqrt(abs(part @ (A @ part)))
            if npart > 1e-10 * nv:
                cols.append(part / npart)
    return np.column_stack(cols) if cols else np.zeros((vectors.shape[0], 0))


def _sandwich(Ls, Ld, S, Rs, Rd) -> np.ndarray:
    """``[Ls Ld]^T S [Rs Rd]`` with sparse ``Ls, Rs`` and dense ``Ld, Rd``."""
    SRs = S @ Rs
    SRd = S @ Rd
    top = np.hstack([(Ls.T @ SRs).toarray(), np.asarray(Ls.T @ SRd)])
    bot = np.hstack([np.asarray((SRs.T @ Ld).T), Ld.T @ SRd])
    return np.vstack([top, bot])


def _pivoted_keep(G: np.ndarray, nc: int, drop_tol: float) -> list[int]:
    """Enrichment columns (indices >= nc) kept by a pivoted Cholesky of the
    unit-diagonal Gram matrix on the complement of the coarse block."""
    ne = G.shape[0] - nc
    if ne == 0:
        return []
    Gcc, Gce, Gee = G[:nc, :nc], G[:nc, nc:], G[nc:, nc:]
    S = Gee - Gce.T @ np.linalg.solve(Gcc, Gce) if nc else Gee.copy()
    S = 0.5 * (S + S.T)
    keep = []
    remaining = list(range(ne))
    while remaining:
        d = np.array([S[i, i] for i in remaining])
        p = remaining[int(np.argmax(d))]
        piv = S[p, p]
        if piv <= drop_tol:
            break
        keep.append(p)
        remaining.remove(p)
        col = S[:, p] / np.sqrt(piv)
        S = S - np.outer(col, col)
    return sorted(nc + i for i in keep)


def enriched_basis(P1: sp.spmatrix, enrich_u: np.ndarray, enrich_w: np.ndarray,
                   forms: FormMatrices, drop_tol: float = DROP_TOL):
    """Reduced pencil on ``U x V``.

    Returns ``(A_r, B_r, Qu_dense, Qw_dense, info)``: the enrichment columns
    that survive rank filtering, and reduced matrices ordered as
    ``[P1, Eu | P1, Ew]``.
    """
    K, M, Mc, Buu = forms.K, forms.M, forms.Mc, forms.Buu
    nc = P1.shape[1]
    P1 = sp.csc_matrix(P1)
    # unit A-norm enrichment columns; coarse columns are scaled by D below
    Gu = _sandwich(P1, enrich_u, K, P1, enrich_u)
    Gw = _sandwich(P1, enrich_w, M, P1, enrich_w)
    info = {"n_coarse": nc, "n_enrich_u": enrich_u.shape[1], "n_enrich_w": enrich_w.shape[1]}

    def _keep(G, E):
        d = 1.0 / np.sqrt(np.diag(G))
        Gs = d[:, None] * G * d[None, :]
        idx = _pivoted_keep(Gs, nc, drop_tol)
        return E[:, [i - nc for i in idx]]

    Eu = _keep(Gu, enrich_u)
    Ew = _keep(Gw, enrich_w)
    info["kept_u"], info["kept_w"] = Eu.shape[1], Ew.shape[1]
    Auu = _sandwich(P1, Eu, K, P1, Eu)
    Aww = _sandwich(P1, Ew, M, P1, Ew)
    Buu_r = _sandwich(P1, Eu, Buu, P1, Eu)
    Buw_r = -_sandwich(P1, Eu, Mc, P1, Ew)
    Bwu_r = _sandwich(P1, Ew, M, P1, Eu)
    nu_, nw_ = Auu.shape[0], Aww.shape[0]
    A_r = np.block([[Auu, np.zeros((nu_, nw_))], [np.zeros((nw_, nu_)), Aww]])
    B_r = np.block([[Buu_r, Buw_r], [Bwu_r, np.zeros((nw_, nw_))]])
    A_r = 0.5 * (A_r + A_r.T)
    return A_r, B_r, Eu, Ew, info


def _expand(P1: sp.spmatrix, Eu: np.ndarray, Ew: np.ndarray, z: np.ndarray) -> np.ndarray:
    nc = P1.shape[1]
    nu_ = nc + Eu.shape[1]
    zu, zw = z[:nu_], z[nu_:]
    u = P1 @ zu[:nc] + Eu @ zu[nc:]
    w = P1 @ zw[:nc] + Ew @ zw[nc:]
    return np.concatenate([u, w])


def match_pairs(previous, candidates, q: int | None = None) -> list[int]:
    """Continue each previous eigenvalue with the nearest candidate.

    Greedy on the global list of distances, ties broken by smaller ``|c|``
    then smaller imaginary part. Every match must lie within
    ``0.5 |previous|`` and conjugate pairs in ``previous`` must map to
    conjugate pairs. Returns candidate indices aligned with ``previous``.
    """
    prev = np.asarray(previous, dtype=complex)
    cand = np.asarray(candidates, dtype=complex)
    q = len(prev) if q is None else q
    if len(cand) == 0:
        raise MatchError("no candidate eigenvalues")
    if len(cand) < q:
        raise MatchError(f"only {len(cand)} candidates for {q} tracked eigenvalues")
    triples = []
    for i, p in enumerate(prev[:q]):
        radius = 0.5 * abs(p)
        for c_idx, c in enumerate(cand):
            dist = abs(p - c)
            if dist <= radius:
                triples.append((dist, abs(c), c.imag, i, c_idx))
    triples.sort()
    chosen: dict[int, int] = {}
    used = set()
    for dist, _, _, i, c_idx in triples:
        if i in chosen or c_idx in used:
            continue
        chosen[i] = c_idx
        used.add(c_idx)
    missing = [i for i in range(q) if i not in chosen]
    if missing:
        raise MatchError(
            f"no candidate within radius 0.5|lambda| of {prev[missing[0]]:.6g}")
    for i in range(q):
        for l in range(i + 1, q):
            scale = abs(prev[i])
            if abs(prev[i].imag) > CONJ_RTOL * scale and \
                    abs(prev[i] - np.conj(prev[l])) <= CONJ_RTOL * scale:
                ci, cl = cand[chosen[i]], cand[chosen[l]]
                if abs(ci - np.conj(cl)) > CONJ_RTOL * max(abs(ci), 1e-300):
                    raise MatchError(
                        f"conjugate pair {prev[i]:.6g}, {prev[l]:.6g} matched to "
                        f"non-conjugate candidates {ci:.6g}, {cl:.6g}")
    return [chosen[i] for i in range(q)]


def correction_step(level: Level, state: LevelState, keep_reduced: bool = False) -> LevelState:
    """One correction step from ``state`` (level m) onto ``level`` (m + 1)."""
    t0 = time.perf_counter()
    forms = level.forms
    A, B = forms.A, forms.B
    P = level.from_previous
    X = np.column_stack([prolong_product(P, state.primal[:, j]) for j in range(state.q)])
    Y = np.column_stack([prolong_product(P, state.dual[:, j]) for j in range(state.q)])

    lu = sparse_lu(A)
    hats = [bvp_solve(lu, B, lam, X[:, j]) for j, lam in enumerate(state.values)]
    hats += [bvp_solve(lu, B, lam, Y[:, j], dual=True) for j, lam in enumerate(state.values)]
    hats = np.column_stack(hats)
    n = forms.layout.n_free
    Eu = _realify(hats[:n], forms.K)
    Ew = _realify(hats[n:], forms.M)
    A_r, B_r, Eu, Ew, info = enriched_basis(level.from_coarse, Eu, Ew, forms)
    try:
        red = dense_pencil_eig(A_r, B_r)
    except DegenerateBasisError as exc:
        raise MultigridError(
            f"enriched basis is degenerate at level {level.mesh.level}; "
            f"try a tighter tolerance or another shift ({exc})") from exc
    idx = match_pairs(state.values, red.values, state.q)
    values = red.values[idx]
    primal = np.column_stack([a_normalize(_expand(level.from_coarse, Eu, Ew, red.right[:, i]), A)
                              for i in idx])
    dual = np.column_stack([a_normalize(_expand(level.from_coarse, Eu, Ew, red.left[:, i]), A)
                            for i in idx])
    rr, lr = pencil_residuals(A, B, values, primal, dual)
    info.update(reduced_dim=A_r.shape[0], reduced_residuals=red.right_residuals[idx],
                method="correction")
    if keep_reduced:
        info.update(A_r=A_r, B_r=B_r, Eu=Eu, Ew=Ew, reduced_values=red.values)
    out = LevelState(level=level.mesh.level, h=mesh_size(level.mesh), values=values,
                     primal=primal, dual=dual, residuals=rr, dual_residuals=lr, info=info)
    out.biorth = quasi_biorthogonality(out, A)
    out.seconds = time.perf_counter() - t0
    return out


def build_levels(config: MultigridConfig):
    """Yield :class:`Level` objects 1..N, assembling each on demand."""
    mesh = build_mesh(config.domain, config.coarse_divisions)
    space = build_space(mesh)
    forms = assemble_forms(space.layout(), config.refraction, config.quad_order)
    P1 = sp.identity(space.n_free, format="csr")
    yield Level(mesh, space, forms, P1)
    for _ in range(config.levels - 1):
        fine_mesh = refine_uniform(mesh)
        fine_space = build_space(fine_mesh)
        Pm = prolongation(space, fine_space)
        P1 = (Pm @ P1).tocsr()
        forms = assemble_forms(fine_space.layout(), config.refraction, config.quad_order)
        mesh, space = fine_mesh, fine_space
        yield Level(mesh, space, forms, P1, Pm)


def run_multigrid(config: MultigridConfig, keep_levels: bool = False,
                  callback=None) -> list[LevelState]:
    """Coarse solve followed by ``levels - 1`` correction steps.

    ``callback(state, level)`` runs after every level. With
    ``keep_levels=True`` each state's ``info['level']`` holds its
    :class:`Level`. On failure a :class:`MultigridError` carries the
    finished states.
    """
    states: list[LevelState] = []
    state = None
    try:
        for level in build_levels(config):
            t0 = time.perf_counter()
            if state is None:
                state = coarse_solve(level.forms, config.shift, config.q, tol=config.tol,
                                     krylov_dim=config.krylov_dim,
                                     max_restarts=config.max_restarts, seed=config.seed,
                                     level=1, h=mesh_size(level.mesh))
            else:
                state = correction_step(level, state)
            state.seconds = time.perf_counter() - t0
            if keep_levels:
                state.info["level"] = level
            log.info("level %d h=%.5g k=%s", state.level, state.h,
                     np.array2string(state.k, precision=9))
            states.append(state)
            if callback is not None:
                callback(state, level)
    except MultigridError as exc:
        exc.states = states
        raise
    except Exception as exc:
        raise MultigridError(f"level {len(states) + 1} failed: {exc}", states) from exc
    return states


def direct_solve(forms: FormMatrices, targets, tol: float = 1e-10, seed: int = 0,
                 extra: int = 2, sigma: complex | None = None) -> np.ndarray:
    """Eigenvalues of the full pencil nearest each target (aligned with ``targets``).

    With ``sigma`` a single shift-invert run requests ``len(targets) + extra``
    values; otherwise targets are grouped up to conjugation and each group
    gets its own shift. Used to compare multigrid values against a direct
    fine-level solve.
    """
    targets = np.asarray(targets, dtype=complex)
    if sigma is not None:
        E = arnoldi_shift_invert(forms.A, forms.B, sigma, len(targets) + extra, tol=tol,
                                 seed=seed, left=False)
        vals = np.concatenate([E.values, np.conj(E.values)])
        return vals[match_pairs(targets, vals, len(targets))]
    groups: list[list[int]] = []
    for i, t in enumerate(targets):
        rep = complex(t.real, abs(t.imag))
        for g in groups:
            r = targets[g[0]]
            if abs(complex(r.real, abs(r.imag)) - rep) <= 1e-3 * abs(rep):
                g.append(i)
                break
        else:
            groups.append([i])
    found = []
    for g in groups:
        r = targets[g[0]]
        sigma = complex(r.real, abs(r.imag))
        E = arnoldi_shift_invert(forms.A, forms.B, sigma, len(g) + extra, tol=tol,
                                 seed=seed, left=False)
        found.extend(E.values)
        found.extend(np.conj(E.values))
    vals = np.array(found)
    idx = match_pairs(targets, vals, len(targets))
    return vals[idx]
