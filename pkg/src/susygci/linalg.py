"""Small dense linear algebra that works on both Fraction and float matrices.

Exact (Fraction) matrices are plain lists of lists; float matrices are numpy
arrays. ``is_exact`` decides which path a function takes.
"""

from __future__ import annotations

from fractions import Fraction

import numpy as np

from .errors import NotPositiveDefiniteError, UsageError


def is_exact(M) -> bool:
    if isinstance(M, np.ndarray):
        return M.dtype == object and M.size > 0 and isinstance(M.flat[0], Fraction)
    return bool(M) and all(isinstance(x, (int, Fraction)) for row in M for x in row)


def as_fraction_matrix(M) -> list[list[Fraction]]:
    return [[Fraction(x) for x in row] for row in M]


def bareiss_det(M):
    """Fraction-free determinant (Bareiss); exact for integer/rational input."""
    n = len(M)
    if n == 0:
        return Fraction(1)
    A = [list(map(Fraction, row)) for row in M]
    sign = 1
    prev = Fraction(1)
    for k in range(n - 1):
        if A[k][k] == 0:
            for r in range(k + 1, n):
                if A[r][k] != 0:
                    A[k], A[r] = A[r], A[k]
                    sign = -sign
                    break
            else:
                return Fraction(0)
        akk = A[k][k]
        for i in range(k + 1, n):
            aik = A[i][k]
            row_i, row_k = A[i], A[k]
            for j in range(k + 1, n):
                row_i[j] = (row_i[j] * akk - aik * row_k[j]) / prev
        prev = akk
    return sign * A[n - 1][n - 1]


def det(M):
    if is_exact(M):
        return bareiss_det(M)
    A = np.asarray(M, dtype=float)
    if A.shape[-1] == 0:
        return np.ones(A.shape[:-2]) if A.ndim > 2 else 1.0
    return np.linalg.det(A)


def inverse(M):
    """Exact Gauss-Jordan inverse for Fraction input, numpy otherwise."""
    if not is_exact(M):
        return np.linalg.inv(np.asarray(M, dtype=float))
    n = len(M)
    A = [list(map(Fraction, row)) + [Fraction(int(i == j)) for j in range(n)] for i, row in enumerate(M)]
    for col in range(n):
        piv = next((r for r in range(col, n) if A[r][col] != 0), None)
        if piv is None:
            raise UsageError("matrix is singular")
        A[col], A[piv] = A[piv], A[col]
        p = A[col][col]
        A[col] = [x / p for x in A[col]]
        for r in range(n):
            if r != col and A[r][col] != 0:
                f = A[r][col]
                A[r] = [x - f * y for x, y in zip(A[r], A[col])]
    return [row[n:] for row in A]


def matmul(A, B):
    if is_exact(A) or is_exact(B):
        Bt = list(zip(*B))
        return [[sum((a * b for a, b in zip(row, col)), Fraction(0)) for col in Bt] for row in A]
    return np.asarray(A, dtype=float) @ np.asarray(B, dtype=float)


def trace(A):
    return sum(A[i][i] for i in range(len(A)))


def submatrix(M, rows, cols=None):
    cols = rows if cols is None else cols
    if isinstance(M, np.ndarray):
        return M[np.ix_(rows, cols)]
    return [[M[i][j] for j in cols] for i in rows]


def ldl_check(M, pivot_tol: float = 1e-12) -> bool:
    """True iff symmetric M is positive definite (exact LDL^t or Cholesky)."""
    if is_exact(M):
        n = len(M)
        A = [list(map(Fraction, row)) for row in M]
        for k in range(n):
            if A[k][k] <= 0:
                return False
            for i in range(k + 1, n):
                f = A[i][k] / A[k][k]
                for j in range(k + 1, n):
                    A[i][j] -= f * A[k][j]
        return True
    A = np.asarray(M, dtype=float)
    try:
        L = np.linalg.cholesky(A)
    except np.linalg.LinAlgError:
        return False
    return bool(np.all(np.diag(L) ** 2 > pivot_tol))


def require_pd(M, what="matrix"):
    if not ldl_check(M):
        raise NotPositiveDefiniteError(
            f"{what} is not positive definite; consider regularizing with C + eps*I"
        )
