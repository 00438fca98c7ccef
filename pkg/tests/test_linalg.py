import numpy as np
import pytest
import scipy.sparse as sp
from hypothesis import given, settings, strategies as st

from tev.assembly import RefractionField, assemble_forms
from tev.bfs import build_space
from tev.linalg import (ConvergenceError, LuFactor, NotPositiveError, SingularFactorError,
                        a_normalize, arnoldi_shift_invert, dense_pencil_eig, fix_phase,
                        shifted_lu, solve, sparse_lu)
from tev.mesh import Domain, build_mesh


# ---------------------------------------------------------------- LU

def test_lu_identity():
    f = sparse_lu(sp.identity(5, format="csr"))
    b = np.arange(5.0)
    assert np.array_equal(solve(f, b), b)


def test_lu_needs_pivoting():
    f = sparse_lu(sp.csr_matrix(np.array([[0.0, 1.0], [1.0, 0.0]])))
    assert np.allclose(f.solve(np.array([2.0, 3.0])), [3.0, 2.0])


def test_lu_random_sparse(rng):
    M = sp.random(50, 50, density=0.1, random_state=7, format="csr") + sp.identity(50)
    b = rng.standard_normal(50)
    x = sparse_lu(M).solve(b)
    assert np.linalg.norm(M @ x - b) / np.linalg.norm(b) <= 1e-10
    for trans, Mt in (("T", M.T), ("H", M.conj().T)):
        x = sparse_lu(M).solve(b, trans)
        assert np.linalg.norm(Mt @ x - b) / np.linalg.norm(b) <= 1e-10


def test_lu_singular_and_shape():
    with pytest.raises(SingularFactorError):
        sparse_lu(sp.csr_matrix(np.array([[1.0, 2.0], [2.0, 4.0]])))
    with pytest.raises(ValueError):
        LuFactor(sp.csr_matrix(np.ones((2, 3))))
    f = sparse_lu(sp.identity(3, format="csr"))
    with pytest.raises(ValueError):
        f.solve(np.ones(4))


@pytest.mark.parametrize("sigma", [3.0, 17 + 10j])
def test_shifted_solve_consistency(square4_forms, sigma):
    A, B = square4_forms.A, square4_forms.B
    f = shifted_lu(A, B, sigma)
    assert f.is_complex == (complex(sigma).imag != 0)
    n = A.shape[0]
    assert np.all(f.solve(np.zeros(n)) == 0)
    e1 = np.zeros(n)
    e1[0] = 1.0
    rhs = (A - sigma * B) @ e1
    assert np.linalg.norm(f.solve(rhs) - e1) <= 1e-10


def test_complex_rhs_real_factor(square4_forms, rng):
    f = shifted_lu(square4_forms.A, square4_forms.B, 3.0)
    n = square4_forms.A.shape[0]
    br, bi = rng.standard_normal(n), rng.standard_normal(n)
    x = f.solve(br + 1j * bi)
    assert np.array_equal(x.real, f.solve(br)) and np.array_equal(x.imag, f.solve(bi))


# ---------------------------------------------------------------- normalization

def test_a_normalize_fixed_point(rng):
    A = sp.diags([1.0, 2.0, 3.0])
    x = np.array([1.0, 0.2, -0.1])
    x = x / np.sqrt(x @ (A @ x))
    assert np.allclose(a_normalize(x, A), x, atol=1e-15, rtol=0)


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 2 ** 32 - 1), st.floats(0, 2 * np.pi), st.floats(0.01, 100))
def test_a_normalize_invariance(seed, theta, scale):
    r = np.random.default_rng(seed)
    A = sp.diags(1.0 + r.random(20))
    x = r.standard_normal(20) + 1j * r.standard_normal(20)
    ref = a_normalize(x, A)
    assert np.vdot(ref, A @ ref).real == pytest.approx(1.0, abs=1e-12)
    assert np.max(np.abs(a_normalize(2 * x, A) - ref)) <= 1e-12
    assert np.max(np.abs(a_normalize(scale * np.exp(1j * theta) * x, A) - ref)) <= 1e-12


def test_a_normalize_rejects_zero():
    with pytest.raises(NotPositiveError):
        a_normalize(np.zeros(3), sp.identity(3))


def test_fix_phase_top_entry_real_positive():
    x = np.array([0.1, -2j, 1.0])
    y = fix_phase(x)
    assert y[1] == pytest.approx(2.0) and abs(y[1].imag) == 0


# ---------------------------------------------------------------- dense

def test_dense_diagonal():
    E = dense_pencil_eig(np.eye(2), np.diag([1.0, 2.0]))
    assert np.allclose(sorted(E.values.real), [0.5, 1.0])


def test_dense_rotation():
    E = dense_pencil_eig(np.eye(2), np.array([[0.0, -1.0], [1.0, 0.0]]))
    assert np.allclose(sorted(E.values, key=lambda z: z.imag), [-1j, 1j])


def test_dense_degenerate():
    from tev.linalg import DegenerateBasisError
    with pytest.raises(DegenerateBasisError):
        dense_pencil_eig(np.zeros((2, 2)), np.eye(2))


def inverse_power(A, B, sigma, iters=3000, rng=None):
    """Plain inverse iteration on the pencil; eigenvalue from the converged vector."""
    M = np.linalg.inv(A - sigma * B)
    x = rng.standard_normal(len(A)) + 1j * rng.standard_normal(len(A))
    for _ in range(iters):
        x = M @ (B @ x)
        x /= np.linalg.norm(x)
        Bx = B @ x
        lam = np.vdot(Bx, A @ x) / np.vdot(Bx, Bx)
        if np.linalg.norm(A @ x - lam * Bx) <= 1e-13 * np.linalg.norm(A @ x):
            return lam
    return None


def test_dense_against_inverse_power(rng):
    n = 12
    G = rng.standard_normal((n, n))
    A = G @ G.T + n * np.eye(n)
    B = rng.standard_normal((n, n))
    E = dense_pencil_eig(A, B)
    assert len(E.values) == n
    lo = np.min(E.values.real), np.min(E.values.imag)
    hi = np.max(E.values.real), np.max(E.values.imag)
    found = 0
    for _ in range(20):
        sigma = complex(rng.uniform(lo[0], hi[0]), rng.uniform(lo[1], hi[1]))
        lam = inverse_power(A, B, sigma, rng=rng)
        if lam is None:
            continue
        found += 1
        assert np.min(np.abs(E.values - lam)) <= 1e-8 * abs(lam)
    assert found >= 10
    # residuals, unit A-norm and left/right pairing
    assert E.right_residuals.max() <= 1e-10 and E.left_residuals.max() <= 1e-10
    for j in range(n):
        x, y = E.right[:, j], E.left[:, j]
        assert np.vdot(x, A @ x).real == pytest.approx(1.0, abs=1e-12)
        assert np.vdot(y, A @ y).real == pytest.approx(1.0, abs=1e-12)
        assert abs(np.vdot(y, A @ x)) > 1e-3


# ---------------------------------------------------------------- Arnoldi

def test_arnoldi_diagonal():
    A = sp.diags([1.0, 2.0, 3.0, 4.0]).tocsr()
    B = sp.identity(4, format="csr")
    E = arnoldi_shift_invert(A, B, 0.9, 2)
    assert np.allclose(E.values, [1.0, 2.0], atol=1e-10)
    for j in range(2):
        for V in (E.right, E.left):
            e = np.zeros(4)
            e[j] = 1.0
            v = V[:, j] / np.linalg.norm(V[:, j])      # A-normalized: compare directions
            assert np.allclose(np.abs(v), e, atol=1e-8)


def test_arnoldi_reference_value():
    space = build_space(build_mesh(Domain.UNIT_SQUARE, 8))
    F = assemble_forms(space.layout(), RefractionField(16))
    E = arnoldi_shift_invert(F.A, F.B, 3.0, 1)
    assert E.k[0].real == pytest.approx(1.880051827, rel=1e-9)


def nearest(values, sigma, q):
    return values[np.argsort(np.abs(values - sigma), kind="stable")[:q]]


@pytest.mark.parametrize("sigma,q,n", [(3.0, 4, 16.0), (17 + 10j, 2, 4.0), (8.0, 3, 16.0)])
def test_arnoldi_matches_dense(sigma, q, n):
    space = build_space(build_mesh(Domain.UNIT_SQUARE, 4))
    F = assemble_forms(space.layout(), RefractionField(n))
    E = arnoldi_shift_invert(F.A, F.B, sigma, q)
    D = dense_pencil_eig(F.A.toarray(), F.B.toarray())
    ref = nearest(D.values, sigma, q)
    got = nearest(E.values, sigma, q)
    for lam in ref:
        assert np.min(np.abs(got - lam)) <= 1e-8 * abs(lam)
    # primal/dual spectra coincide
    lv = E.info["left_values"]
    assert np.max(np.abs(lv - E.values) / np.abs(E.values)) <= 1e-8
    assert E.right_residuals.max() <= 1e-10 and E.left_residuals.max() <= 1e-10
    G = E.left.conj().T @ (F.A @ E.right)
    assert np.all(np.abs(np.diag(G)) > 1e-3)


def test_arnoldi_conjugate_closure():
    space = build_space(build_mesh(Domain.UNIT_SQUARE, 8))
    F = assemble_forms(space.layout(), RefractionField(4))
    E = arnoldi_shift_invert(F.A, F.B, 17 + 10j, 1)
    lam = E.values[0]
    assert abs(lam.imag) > 1
    # conj(lam) is an eigenvalue of the real pencil with the conjugate vector
    x = np.conj(E.right[:, 0])
    r = F.A @ x - np.conj(lam) * (F.B @ x)
    d = 1 / np.sqrt(F.A.diagonal())
    assert np.linalg.norm(d * r) <= 1e-9 * np.linalg.norm(d * (F.A @ x))


def test_arnoldi_repeated_eigenvalue():
    """k2 = k3 for n = 16 on the square: both copies must be found."""
    space = build_space(build_mesh(Domain.UNIT_SQUARE, 8))
    F = assemble_forms(space.layout(), RefractionField(16))
    E = arnoldi_shift_invert(F.A, F.B, 3.0, 4)
    k = np.sort(E.k.real)
    assert k[1] == pytest.approx(2.446255515, rel=1e-9)
    assert k[2] == pytest.approx(2.446255515, rel=1e-9)
    # the two copies have independent eigenvectors
    X = E.right[:, np.argsort(E.k.real)[1:3]]
    assert np.linalg.matrix_rank(X, tol=1e-6 * np.linalg.norm(X)) == 2


def test_arnoldi_argument_checks(square4_forms):
    with pytest.raises(ValueError):
        arnoldi_shift_invert(square4_forms.A, square4_forms.B, 3.0, 0)
    with pytest.raises(ValueError):
        arnoldi_shift_invert(square4_forms.A, square4_forms.B, 3.0, 4, krylov_dim=10)


def test_arnoldi_restart_budget(square4_forms):
    with pytest.raises(ConvergenceError):
        arnoldi_shift_invert(square4_forms.A, square4_forms.B, 3.0, 4, krylov_dim=16,
                             tol=1e-15, max_restarts=0)
