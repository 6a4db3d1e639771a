"""Small dense complex linear algebra.

Gaussian elimination with partial pivoting for the handful of tiny systems
the scattering solver builds (3x3 and 12x12).  Exact zero pivots raise
:class:`SingularMatrixError` instead of producing infinities.
"""

import numpy as np


class SingularMatrixError(ArithmeticError):
    """Raised when elimination meets an exactly zero pivot column."""


def lu_factor(a):
    """Factor a square complex matrix as ``P A = L U``.

    Returns the packed LU array and the row permutation.
    """
    lu = np.array(a, dtype=complex, copy=True)
    n = lu.shape[0]
    if lu.shape != (n, n):
        raise ValueError(f"expected a square matrix, got shape {lu.shape}")
    perm = np.arange(n)
    for k in range(n):
        piv = k + int(np.argmax(np.abs(lu[k:, k])))
        if lu[piv, k] == 0:
            raise SingularMatrixError(f"zero pivot in column {k}")
        if piv != k:
            lu[[k, piv]] = lu[[piv, k]]
            perm[[k, piv]] = perm[[piv, k]]
        lu[k + 1:, k] /= lu[k, k]
        lu[k + 1:, k + 1:] -= np.outer(lu[k + 1:, k], lu[k, k + 1:])
    return lu, perm


def lu_solve(factors, b):
    lu, perm = factors
    b = np.asarray(b, dtype=complex)
    x = b[perm].copy()
    n = lu.shape[0]
    # forward substitution, unit lower triangle
    for i in range(1, n):
        x[i] -= lu[i, :i] @ x[:i]
    for i in range(n - 1, -1, -1):
        x[i] = (x[i] - lu[i, i + 1:] @ x[i + 1:]) / lu[i, i]
    return x


def solve(a, b):
    """Solve ``a @ x = b`` for a vector or a matrix of right-hand sides."""
    return lu_solve(lu_factor(a), b)


def inv(a):
    a = np.asarray(a)
    return solve(a, np.eye(a.shape[0], dtype=complex))


def solve_batched(a, b):
    """Solve a stack of systems ``a[n] @ x[n] = b[n]`` by the same elimination.

    ``a`` has shape ``(n, m, m)`` and ``b`` ``(n, m, r)``.  Every operation
    is elementwise across the stack, so each solution is independent of
    what else is in the batch.  Returns ``(x, singular)``; singular systems
    get NaN solutions.
    """
    a = np.array(a, dtype=complex, copy=True)
    b = np.array(b, dtype=complex, copy=True)
    n, m = a.shape[:2]
    if a.shape != (n, m, m) or b.shape[:2] != (n, m):
        raise ValueError(f"incompatible shapes {a.shape} and {b.shape}")
    rows = np.arange(n)
    singular = np.zeros(n, dtype=bool)
    for k in range(m):
        piv = k + np.argmax(np.abs(a[:, k:, k]), axis=1)
        top = a[rows, piv].copy()
        a[rows, piv] = a[:, k]
        a[:, k] = top
        top = b[rows, piv].copy()
        b[rows, piv] = b[:, k]
        b[:, k] = top
        dead = a[:, k, k] == 0
        if dead.any():
            singular |= dead
            a[dead, k, k] = 1.0
        f = a[:, k + 1:, k] / a[:, k, k][:, None]
        a[:, k + 1:, k:] -= f[:, :, None] * a[:, None, k, k:]
        b[:, k + 1:] -= f[:, :, None] * b[:, None, k]
    for i in range(m - 1, -1, -1):
        b[:, i] /= a[:, i, i][:, None]
        b[:, :i] -= a[:, :i, i, None] * b[:, None, i]
    b[singular] = np.nan
    return b, singular
