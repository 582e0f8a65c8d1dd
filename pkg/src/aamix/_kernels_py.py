"""Pure-Python (NumPy) kernel implementations.

Fallback backend used when the compiled extension is unavailable. Every
function here has a twin in ``_kernels.pyx`` with the same signature and
semantics; ``aamix.backend`` picks one of the two at import time.

Matrix kernels take the tall matrix in rows layout: a (c, n) C-contiguous
array whose row j is column j of the mathematical n x c matrix. That is
how the history buffer stores difference vectors, so the hot path never
transposes. Inputs are assumed to be validated float64 arrays (the
``linalg`` wrappers do the checking); kernels only do arithmetic.
"""

import math

import numpy as np

BACKEND_NAME = "python"


def _householder_reduce(work, rhs=None):
    """In-place Householder triangularization of ``work`` (n x c, Fortran order).

    Returns the list of reflector vectors (or None for identity steps).
    When ``rhs`` is given the reflectors are applied to it as well.
    """
    n, c = work.shape
    reflectors = []
    for j in range(c):
        x = work[j:, j].copy()
        norm_x = math.sqrt(float(np.dot(x, x)))
        if norm_x == 0.0:
            reflectors.append(None)
            continue
        alpha = -norm_x if x[0] >= 0.0 else norm_x
        x[0] -= alpha
        vnorm = math.sqrt(float(np.dot(x, x)))
        if vnorm == 0.0:
            reflectors.append(None)
            continue
        v = x / vnorm
        work[j:, j:] -= 2.0 * np.outer(v, v @ work[j:, j:])
        # kill roundoff below the diagonal explicitly
        work[j + 1:, j] = 0.0
        work[j, j] = alpha
        if rhs is not None:
            rhs[j:] -= 2.0 * v * float(np.dot(v, rhs[j:]))
        reflectors.append(v)
    return reflectors


def _rank_from_diagonal(diag, drop_tol):
    """Leading run of usable columns: truncate at the first tiny pivot."""
    c = diag.shape[0]
    scale = abs(diag[0])
    if scale == 0.0:
        return 0
    for j in range(c):
        if abs(diag[j]) < drop_tol * scale:
            return j
    return c


def qr_rows(rows):
    """Householder QR from rows layout, thin form with positive diagonal.

    ``rows`` is (c, n); returns ``(q, r)`` with ``q`` n x c orthonormal
    columns and ``r`` c x c upper-triangular, nonnegative diagonal.
    """
    c, n = rows.shape
    work = rows.T.copy(order="F")
    reflectors = _householder_reduce(work)
    r_upper = np.triu(work[:c, :]).copy()

    q = np.zeros((n, c))
    q[:c, :c] = np.eye(c)
    for j in range(c - 1, -1, -1):
        v = reflectors[j]
        if v is not None:
            q[j:, :] -= 2.0 * np.outer(v, v @ q[j:, :])

    signs = np.where(np.diag(r_upper) < 0.0, -1.0, 1.0)
    r_upper *= signs[:, None]
    q *= signs[None, :]
    return q, r_upper


def lstsq_rows(rows, rhs, drop_tol):
    """Least-squares coefficients for ``min ||rhs - A g||_2``, A given as rows.

    Columns from the first tiny diagonal pivot onward get coefficient 0.
    Returns ``(g, rank)``.
    """
    c, n = rows.shape
    work = rows.T.copy(order="F")
    b = rhs.copy()
    _householder_reduce(work, b)
    rank = _rank_from_diagonal(np.diag(work[:c, :]), drop_tol)

    g = np.zeros(c)
    for i in range(rank - 1, -1, -1):
        s = b[i] - float(np.dot(work[i, i + 1:rank], g[i + 1:rank]))
        g[i] = s / work[i, i]
    return g, rank


def norm_l2(v):
    return math.sqrt(float(np.dot(v, v)))


def norm_inf(v):
    return float(np.max(np.abs(v))) if v.size else 0.0


def axpy(alpha, x, y):
    return y + alpha * x


def window_mean(rows):
    """Mean over the window axis of a (j, n) stack of iterates."""
    return rows.mean(axis=0)


def window_variance(rows):
    """Entry-wise population variance of a (j, n) stack, two-pass form."""
    mu = rows.mean(axis=0)
    var = np.mean((rows - mu) ** 2, axis=0)
    return np.maximum(var, 0.0)
