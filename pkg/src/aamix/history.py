"""Sliding windows of iterate/residual differences and raw iterates.

:class:`HistoryBuffer` holds up to ``m`` difference columns between
consecutive *stored* snapshots of (w, r); the accelerator reads them back
as tall matrices. :class:`IterateWindow` holds the last ``t`` raw iterates
for the moving-average smoother.
"""

from collections import deque

import numpy as np

from aamix.errors import DimensionMismatchError, InsufficientHistoryError

__all__ = ["HistoryBuffer", "IterateWindow"]


class HistoryBuffer:
    """Sliding window of (w, r) difference columns, capacity ``m``.

    The first push only records the snapshot pair; each later push appends
    one difference column per side, evicting the oldest once ``m`` columns
    are held. Differences are computed at push time and written into two
    preallocated (m, n) row blocks kept in chronological order, so the
    extrapolation step reads them as zero-copy views. Total storage stays
    at 2*m*n + 2*n floats.
    """

    def __init__(self, capacity):
        if capacity < 1:
            raise ValueError(f"capacity must be >= 1, got {capacity}")
        self.capacity = capacity
        self._w_rows = None  # (m, n), rows 0..h-1 hold the live columns
        self._r_rows = None
        self._h = 0
        self._last_w = None
        self._last_r = None
        self._count = 0

    @property
    def count(self):
        """Number of snapshots pushed since creation or reset."""
        return self._count

    @property
    def depth(self):
        """Number of difference columns currently held."""
        return self._h

    def push(self, w, r):
        w = np.asarray(w, dtype=np.float64)
        r = np.asarray(r, dtype=np.float64)
        if w.shape != r.shape or w.ndim != 1:
            raise DimensionMismatchError(
                f"w and r must be 1-D with equal shapes, got {w.shape} and {r.shape}"
            )
        if self._last_w is not None and w.shape != self._last_w.shape:
            raise DimensionMismatchError(
                f"push of length {w.shape[0]} into buffer of length {self._last_w.shape[0]}"
            )
        if self._last_w is None:
            n = w.shape[0]
            if self._w_rows is None or self._w_rows.shape[1] != n:
                self._w_rows = np.empty((self.capacity, n))
                self._r_rows = np.empty((self.capacity, n))
        else:
            if self._h == self.capacity:
                for i in range(self.capacity - 1):
                    self._w_rows[i] = self._w_rows[i + 1]
                    self._r_rows[i] = self._r_rows[i + 1]
                self._h -= 1
            np.subtract(w, self._last_w, out=self._w_rows[self._h])
            np.subtract(r, self._last_r, out=self._r_rows[self._h])
            self._h += 1
        self._last_w = w.copy()
        self._last_r = r.copy()
        self._count += 1

    def as_rows(self):
        """(w_rows, r_rows) views, shape (h, n), oldest difference first.

        Views are only valid until the next ``push``/``reset``.
        """
        if self._h == 0:
            raise InsufficientHistoryError("no difference columns stored yet")
        return self._w_rows[: self._h], self._r_rows[: self._h]

    def as_matrices(self):
        """(W, R) as (n, h) arrays, oldest difference in column 0."""
        w_rows, r_rows = self.as_rows()
        return np.ascontiguousarray(w_rows.T), np.ascontiguousarray(r_rows.T)

    def reset(self):
        self._h = 0
        self._last_w = None
        self._last_r = None
        self._count = 0


class IterateWindow:
    """Chronological ring of the last ``t`` iterates."""

    def __init__(self, capacity):
        if capacity < 1:
            raise ValueError(f"capacity must be >= 1, got {capacity}")
        self.capacity = capacity
        self._iterates = deque(maxlen=capacity)

    def __len__(self):
        return len(self._iterates)

    def push(self, w):
        self._iterates.append(np.asarray(w, dtype=np.float64).copy())

    def replace_last(self, w):
        """Overwrite the newest entry (used when the smoother rewrites w)."""
        if not self._iterates:
            raise InsufficientHistoryError("window is empty")
        self._iterates[-1] = np.asarray(w, dtype=np.float64).copy()

    def stacked(self):
        """(j, n) array of the retained iterates, oldest first."""
        return np.stack(self._iterates, axis=0)

    def clear(self):
        self._iterates.clear()
