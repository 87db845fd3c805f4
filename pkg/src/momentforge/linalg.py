"""Dense symmetric linear algebra: cyclic Jacobi eigensolver and Cholesky.

Symmetric matrices are plain ``numpy`` arrays; callers pass anything
array-like and inputs are symmetrized from the lower triangle.
"""
from __future__ import annotations

import numpy as np

MAX_SWEEPS = 100


class LinAlgError(ArithmeticError):
    pass


class NotConvergedError(LinAlgError):
    pass


class NotPositiveDefiniteError(LinAlgError):
    pass


def _float_dtype(A) -> np.dtype:
    dt = np.asarray(A).dtype
    return np.dtype(np.longdouble) if dt == np.longdouble else np.dtype(np.float64)


def as_symmetric(A) -> np.ndarray:
    """Copy of ``A`` symmetrized from its lower triangle (``longdouble`` is preserved)."""
    A = np.array(A, dtype=_float_dtype(A), ndmin=2)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {A.shape}")
    if not np.all(np.isfinite(A)):
        raise ValueError("matrix has non-finite entries")
    L = np.tril(A)
    return L + np.tril(A, -1).T


def sym_eigen(A, max_sweeps: int = MAX_SWEEPS) -> tuple[np.ndarray, np.ndarray]:
    """Eigen-decomposition of a symmetric matrix by cyclic threshold Jacobi.

    Returns ascending eigenvalues and the matrix whose columns are the
    corresponding orthonormal eigenvectors.
    """
    A = as_symmetric(A)
    n = A.shape[0]
    V = np.eye(n, dtype=A.dtype)
    if n == 1:
        return A.diagonal().copy(), V
    scale = max(np.max(np.abs(A)), np.finfo(A.dtype).tiny)
    eps = np.finfo(A.dtype).eps
    for sweep in range(max_sweeps):
        off = np.sqrt(np.sum(np.tril(A, -1) ** 2))
        if off <= eps * scale:
            break
        # threshold Jacobi: skip small rotations in the first sweeps
        threshold = 0.2 * off / n**2 if sweep < 3 else 0.0
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = A[p, q]
                if abs(apq) <= threshold:
                    continue
                if sweep > 3 and abs(apq) <= eps * 1e-2 * (abs(A[p, p]) + abs(A[q, q])):
                    A[p, q] = A[q, p] = 0.0
                    continue
                theta = (A[q, q] - A[p, p]) / (2.0 * apq)
                t = np.sign(theta) / (abs(theta) + np.sqrt(theta * theta + 1.0)) if theta != 0 else 1.0
                c = 1.0 / np.sqrt(t * t + 1.0)
                s = t * c
                ap = A[:, p].copy()
                aq = A[:, q].copy()
                A[:, p] = c * ap - s * aq
                A[:, q] = s * ap + c * aq
                rp = A[p, :].copy()
                rq = A[q, :].copy()
                A[p, :] = c * rp - s * rq
                A[q, :] = s * rp + c * rq
                A[p, q] = A[q, p] = 0.0
                vp = V[:, p].copy()
                V[:, p] = c * vp - s * V[:, q]
                V[:, q] = s * vp + c * V[:, q]
    else:
        raise NotConvergedError(f"Jacobi did not converge in {max_sweeps} sweeps")
    w = A.diagonal().copy()
    order = np.argsort(w, kind="stable")
    return w[order], V[:, order]


def eigenvalues(A) -> np.ndarray:
    return sym_eigen(A)[0]


def min_eigenvalue(A) -> float:
    A = as_symmetric(A)
    if A.shape[0] == 0:
        return np.inf
    return float(sym_eigen(A)[0][0])


def max_eigenvalue(A) -> float:
    A = as_symmetric(A)
    if A.shape[0] == 0:
        return -np.inf
    return float(sym_eigen(A)[0][-1])


def is_psd(A, tol: float = 0.0) -> bool:
    if tol < 0:
        raise ValueError("tol must be nonnegative")
    return min_eigenvalue(A) >= -tol


def is_nd(A, tol: float = 0.0) -> bool:
    """Strict negative definiteness with margin: largest eigenvalue <= -tol."""
    if tol < 0:
        raise ValueError("tol must be nonnegative")
    lam = max_eigenvalue(A)
    return lam <= -tol and lam < 0


def cholesky_spd(A, pivot_tol: float = 1e-12) -> np.ndarray:
    """Lower-triangular ``L`` with ``L @ L.T == A``."""
    A = as_symmetric(A)
    n = A.shape[0]
    L = np.zeros_like(A)
    scale = max(np.max(np.abs(np.diag(A))), 1.0) if n else 1.0
    for j in range(n):
        d = A[j, j] - L[j, :j] @ L[j, :j]
        if not d > pivot_tol * scale:
            raise NotPositiveDefiniteError(f"not positive definite (pivot {d:.3e} at column {j})")
        L[j, j] = np.sqrt(d)
        if j + 1 < n:
            L[j + 1 :, j] = (A[j + 1 :, j] - L[j + 1 :, :j] @ L[j, :j]) / L[j, j]
    return L


def _forward(L: np.ndarray, b: np.ndarray) -> np.ndarray:
    x = np.array(b, dtype=L.dtype)
    for i in range(L.shape[0]):
        x[i] = (x[i] - L[i, :i] @ x[:i]) / L[i, i]
    return x


def _backward(L: np.ndarray, b: np.ndarray) -> np.ndarray:
    # solves L.T x = b
    x = np.array(b, dtype=L.dtype)
    n = L.shape[0]
    for i in range(n - 1, -1, -1):
        x[i] = (x[i] - L[i + 1 :, i] @ x[i + 1 :]) / L[i, i]
    return x


def cho_solve(L: np.ndarray, b) -> np.ndarray:
    """Solve ``L L^T x = b``; ``b`` may be a vector or a matrix of right-hand sides."""
    return _backward(L, _forward(L, np.asarray(b)))


def solve_spd(A, b, pivot_tol: float = 1e-12) -> np.ndarray:
    return cho_solve(cholesky_spd(A, pivot_tol), b)


def pivoted_cholesky_rank(G, tol: float = 1e-10) -> list[int]:
    """Indices of a maximal well-conditioned independent subset of a Gram matrix.

    Greedy diagonal pivoting; a pivot is dropped when its remaining diagonal
    falls below ``tol`` times the largest original diagonal.
    """
    G = as_symmetric(G)
    n = G.shape[0]
    if n == 0:
        return []
    d = G.diagonal().copy()
    cut = tol * max(np.max(d), np.finfo(float).tiny)
    L = np.zeros((n, n))
    chosen: list[int] = []
    remaining = list(range(n))
    for k in range(n):
        if not remaining:
            break
        j = max(remaining, key=lambda i: (d[i], -i))
        if d[j] <= cut:
            break
        chosen.append(j)
        remaining.remove(j)
        L[j, k] = np.sqrt(d[j])
        for i in remaining:
            L[i, k] = (G[i, j] - L[i, :k] @ L[j, :k]) / L[j, k]
            d[i] -= L[i, k] ** 2
    return sorted(chosen)


def householder_complement(v) -> np.ndarray:
    """Orthonormal basis (columns) of the orthogonal complement of a nonzero vector."""
    v = np.asarray(v, dtype=float).reshape(-1)
    n = v.shape[0]
    nv = np.linalg.norm(v)
    if nv == 0:
        raise ValueError("zero vector has no proper complement")
    e = np.zeros(n)
    # reflect v onto ±e_0, choosing the sign that avoids cancellation
    e[0] = -np.sign(v[0]) * nv if v[0] != 0 else nv
    w = v - e
    H = np.eye(n) - 2.0 * np.outer(w, w) / (w @ w) if w @ w > 0 else np.eye(n)
    return H[:, 1:]
