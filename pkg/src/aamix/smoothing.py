"""Moving-average smoothing of the iterate sequence.

The smoother replaces the current iterate by the mean of the trailing
window while the entry-wise standard deviation across that window is still
large relative to the residual. Once

    max_j sqrt(S_j) < epsilon * max_j |r_j|

holds, the oscillations are considered small enough and averaging stops
(latched off by default; a flag restores per-iteration re-evaluation).
"""

from dataclasses import dataclass

import numpy as np

from aamix import backend
from aamix.errors import EmptyWindowError, InsufficientSamplesError
from aamix.history import IterateWindow

__all__ = [
    "moving_average",
    "sample_variance",
    "should_keep_averaging",
    "VarianceMonitor",
]


def _rows(window):
    if isinstance(window, IterateWindow):
        if len(window) == 0:
            raise EmptyWindowError("iterate window is empty")
        return window.stacked()
    rows = np.asarray(window, dtype=np.float64)
    if rows.ndim != 2 or rows.shape[0] == 0:
        raise EmptyWindowError(f"expected a nonempty (j, n) stack, got shape {rows.shape}")
    return rows


def moving_average(window):
    """Arithmetic mean of the retained iterates (j-sample mean when j < t)."""
    return backend.kernels().window_mean(_rows(window))


def sample_variance(window):
    """Entry-wise population variance over the window, clamped at 0."""
    rows = _rows(window)
    if rows.shape[0] < 2:
        raise InsufficientSamplesError("variance needs at least 2 iterates")
    return backend.kernels().window_variance(rows)


def should_keep_averaging(s, r, epsilon):
    """False iff the stop criterion ``||sqrt(S)||_inf < eps * ||r||_inf`` holds.

    With r = 0 the threshold is 0 and the criterion can never hold, except
    in the fully converged case S = 0 where we do stop.
    """
    s = np.asarray(s, dtype=np.float64)
    r = np.asarray(r, dtype=np.float64)
    kern = backend.kernels()
    spread = float(np.sqrt(np.max(s))) if s.size else 0.0
    threshold = epsilon * kern.norm_inf(r)
    if threshold == 0.0:
        return spread != 0.0
    return spread >= threshold


@dataclass
class VarianceMonitor:
    """Owns the iterate window and the on/off state of the smoother.

    ``active`` may only transition True -> False while ``latch`` is set;
    with ``latch=False`` the criterion is re-evaluated every iteration.
    """

    window: IterateWindow
    epsilon: float = 0.1
    active: bool = True
    latch: bool = True

    def observe(self, w):
        self.window.push(w)

    def smooth(self, w, last_residual):
        """Possibly replace ``w`` by the window mean; returns (w, applied).

        The window must already contain ``w`` (call :meth:`observe` first).
        The window keeps the iterates as observed; the returned mean only
        becomes the trainer's current iterate. Feeding means back into the
        window would shrink the measured scatter by construction and trip
        the stop criterion on spurious dips.
        """
        if not self.active:
            return w, False
        if len(self.window) < 2:
            # a 1-sample mean is the identity and no variance exists yet
            return w, False
        s = sample_variance(self.window)
        if not should_keep_averaging(s, last_residual, self.epsilon):
            if self.latch:
                self.active = False
            return w, False
        return moving_average(self.window), True
