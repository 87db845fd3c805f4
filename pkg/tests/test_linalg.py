import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.linalg import hilbert

from momentforge import linalg
from momentforge.linalg import NotPositiveDefiniteError


def _random_sym(rng, n):
    B = rng.normal(size=(n, n))
    return (B + B.T) / 2


def test_eigen_examples():
    w, V = linalg.sym_eigen(np.eye(3))
    assert w.tolist() == [1.0, 1.0, 1.0]
    w, _ = linalg.sym_eigen([[0.0, 1.0], [1.0, 0.0]])
    assert np.allclose(w, [-1.0, 1.0], atol=1e-15)
    H = np.array([[0.0, 1.0], [1.0, 0.0]])  # Hessian of XY
    v = np.array([1.0, -1.0])
    assert v @ H @ v == -2.0


def test_definiteness_examples():
    assert linalg.is_nd(-2 * np.eye(2), tol=1e-9)
    Z = np.zeros((3, 3))
    assert linalg.is_psd(Z) and not linalg.is_nd(Z)
    D = np.diag([1.0, -1.0])
    assert not linalg.is_psd(D) and not linalg.is_nd(D)


def test_cholesky_examples():
    b = np.array([3.0, -1.0, 2.0])
    assert np.array_equal(linalg.solve_spd(np.eye(3), b), b)
    x = linalg.solve_spd([[4.0, 2.0], [2.0, 3.0]], [1.0, 0.0])
    assert np.allclose(x, [0.375, -0.25], atol=1e-15)
    A = hilbert(4)
    b = np.ones(4)
    x = linalg.solve_spd(A, b)
    assert np.max(np.abs(A @ x - b)) <= 1e-8 * np.max(np.abs(b))
    L = linalg.cholesky_spd(A)
    assert np.max(np.abs(L @ L.T - A)) <= 1e-10 * np.max(np.abs(A))


def test_cholesky_rejects_indefinite():
    with pytest.raises(NotPositiveDefiniteError, match="not positive definite"):
        linalg.cholesky_spd(np.diag([1.0, -1.0]))


def test_rejects_nonsquare_and_nonfinite():
    with pytest.raises(ValueError):
        linalg.sym_eigen(np.ones((2, 3)))
    with pytest.raises(ValueError):
        linalg.sym_eigen([[np.nan]])


@pytest.mark.parametrize("n", [1, 2, 5, 17, 50])
def test_eigen_postconditions_against_lapack(n):
    rng = np.random.default_rng(n)
    A = _random_sym(rng, n) * 10
    w, V = linalg.sym_eigen(A)
    norm = np.max(np.abs(A))
    assert np.max(np.abs(A @ V - V * w)) <= 1e-10 * (1 + norm)
    assert np.max(np.abs(V.T @ V - np.eye(n))) <= 1e-10
    assert np.max(np.abs((V * w) @ V.T - A)) <= 1e-9 * norm
    assert np.all(np.diff(w) >= 0)
    assert np.allclose(w, np.linalg.eigvalsh(A), atol=1e-10 * (1 + norm))


@settings(max_examples=40, deadline=None)
@given(st.integers(1, 8), st.integers(0, 2**32 - 1))
def test_weyl_inequality(n, seed):
    rng = np.random.default_rng(seed)
    A, B = _random_sym(rng, n), _random_sym(rng, n)
    assert linalg.min_eigenvalue(A + B) >= linalg.min_eigenvalue(A) + linalg.min_eigenvalue(B) - 1e-9


@settings(max_examples=40, deadline=None)
@given(st.integers(1, 8), st.integers(1, 8), st.integers(0, 2**32 - 1))
def test_gram_is_psd(rows, cols, seed):
    B = np.random.default_rng(seed).normal(size=(rows, cols))
    assert linalg.is_psd(B.T @ B, 1e-9)


def test_extended_precision_is_preserved():
    A = np.array([[2.0, 1.0], [1.0, 2.0]], dtype=np.longdouble)
    w, V = linalg.sym_eigen(A)
    assert w.dtype == np.longdouble
    assert np.allclose(np.asarray(w, dtype=float), [1.0, 3.0])
    assert linalg.cholesky_spd(A).dtype == np.longdouble


def test_pivoted_rank_drops_duplicates():
    a = np.array([1.0, 2.0, 0.0])
    b = np.array([0.0, 1.0, 1.0])
    rows = np.stack([a, b, a + b, 2 * a])
    assert len(linalg.pivoted_cholesky_rank(rows @ rows.T)) == 2


def test_householder_complement_is_orthonormal():
    v = np.array([3.0, -1.0, 2.0])
    Q = linalg.householder_complement(v)
    assert Q.shape == (3, 2)
    assert np.allclose(Q.T @ Q, np.eye(2), atol=1e-14)
    assert np.allclose(v @ Q, 0.0, atol=1e-14)
