"""Dense vector and tall-skinny matrix kernels.

Vectors are 1-D float64 arrays, tall matrices are (n, c) float64 arrays
whose columns are the stored history directions (c is small, n may be
large). Everything is validated on the way in and out: non-finite entries
raise :class:`~aamix.errors.NonFiniteError` rather than propagating NaNs
into the training loop.

The factorization is Householder QR, chosen over Gram-Schmidt because the
history columns routinely become nearly co-linear and backward stability
is what keeps the extrapolation usable there. Columns from the first tiny
diagonal pivot onward are treated as dependent and receive coefficient 0.
"""

from typing import NamedTuple

import numpy as np

from aamix import backend
from aamix.errors import DimensionMismatchError, EmptyMatrixError, NonFiniteError

# relative diagonal threshold below which trailing columns are dropped
DROP_TOL = 1e-10


def as_vector(x, name="vector"):
    """Coerce to a finite 1-D float64 array."""
    v = np.ascontiguousarray(x, dtype=np.float64)
    if v.ndim != 1:
        raise DimensionMismatchError(f"{name} must be 1-D, got shape {v.shape}")
    if not np.isfinite(v).all():
        raise NonFiniteError(f"{name} contains NaN or Inf")
    return v


def as_matrix(a, name="matrix"):
    """Coerce to a finite 2-D float64 array with at least one column."""
    m = np.ascontiguousarray(a, dtype=np.float64)
    if m.ndim != 2:
        raise DimensionMismatchError(f"{name} must be 2-D, got shape {m.shape}")
    if m.shape[1] == 0:
        raise EmptyMatrixError(f"{name} has no columns")
    if not np.isfinite(m).all():
        raise NonFiniteError(f"{name} contains NaN or Inf")
    return m


class QrFactorization(NamedTuple):
    q: np.ndarray  # (n, c), orthonormal columns
    r: np.ndarray  # (c, c), upper triangular, nonnegative diagonal
    rank: int  # leading columns with usable pivots; rank < c flags degeneracy


class LeastSquaresFit(NamedTuple):
    coeffs: np.ndarray  # length c; trailing dependent columns get 0
    rank: int
    degraded: bool


def qr_factorize(a):
    """Thin Householder QR of a tall matrix.

    Returns :class:`QrFactorization`; ``rank < c`` signals that a diagonal
    of R fell below the drop tolerance (near-dependent columns).
    """
    m = as_matrix(a)
    n, c = m.shape
    if n < c:
        raise DimensionMismatchError(f"matrix must be tall, got {n} x {c}")
    q, r = backend.kernels().qr_rows(np.ascontiguousarray(m.T))
    if not (np.isfinite(q).all() and np.isfinite(r).all()):
        raise NonFiniteError("QR factorization produced non-finite values")
    rank = _diag_rank(np.diag(r))
    return QrFactorization(q, r, rank)


def least_squares(r_mat, rhs):
    """Minimize ``||rhs - r_mat @ g||_2`` over g, via Householder QR.

    Never forms normal equations. When ``r_mat`` is rank-deficient the
    trailing dependent columns get coefficient 0 and ``degraded`` is True.
    """
    m = as_matrix(r_mat)
    n, c = m.shape
    if n < c:
        raise DimensionMismatchError(f"matrix must be tall, got {n} x {c}")
    return least_squares_rows(np.ascontiguousarray(m.T), rhs)


def least_squares_rows(rows, rhs):
    """:func:`least_squares` on a matrix given in rows layout, (c, n).

    Row j is column j of the mathematical matrix; this is the zero-copy
    path used by the extrapolation step.
    """
    rows = np.ascontiguousarray(rows, dtype=np.float64)
    if rows.ndim != 2 or rows.shape[0] == 0:
        raise EmptyMatrixError(f"expected a nonempty (c, n) rows array, got {rows.shape}")
    if not np.isfinite(rows).all():
        raise NonFiniteError("rows contain NaN or Inf")
    m = rows
    b = as_vector(rhs, "rhs")
    c, n = m.shape
    if n < c:
        raise DimensionMismatchError(f"matrix must be tall, got {n} x {c}")
    if b.shape[0] != n:
        raise DimensionMismatchError(f"rhs length {b.shape[0]} != row count {n}")
    g, rank = backend.kernels().lstsq_rows(m, b, DROP_TOL)
    if not np.isfinite(g).all():
        raise NonFiniteError("least-squares solve produced non-finite values")
    return LeastSquaresFit(g, rank, rank < c)


def _diag_rank(diag):
    scale = abs(diag[0]) if diag.size else 0.0
    if scale == 0.0:
        return 0
    small = np.abs(diag) < DROP_TOL * scale
    return int(np.argmax(small)) if small.any() else diag.size


def norm_l2(v):
    return backend.kernels().norm_l2(as_vector(v))


def norm_inf(v):
    return backend.kernels().norm_inf(as_vector(v))


def axpy(alpha, x, y):
    """``y + alpha * x`` as a new vector."""
    xv = as_vector(x, "x")
    yv = as_vector(y, "y")
    if xv.shape != yv.shape:
        raise DimensionMismatchError(f"axpy shapes differ: {xv.shape} vs {yv.shape}")
    return backend.kernels().axpy(float(alpha), xv, yv)
