"""Anderson-accelerated stochastic optimization toolkit.

Wraps first-order stochastic optimizers (SGD, Nesterov, Adam) as
fixed-point iterations and accelerates them with safeguarded alternating
Anderson extrapolation plus an adaptive moving-average smoother. The dense
kernels behind the extrapolation step come from a compiled extension when
available, with a NumPy fallback (see :mod:`aamix.backend`).
"""

from aamix.accelerator import (
    AccelerationConfig,
    RunRecord,
    StepOutcome,
    TrainResult,
    anderson_extrapolate,
    is_acceleration_step,
    train,
)
from aamix.backend import active_backend, available_backends, use_backend

__version__ = "0.1.0"

__all__ = [
    "AccelerationConfig",
    "RunRecord",
    "StepOutcome",
    "TrainResult",
    "anderson_extrapolate",
    "is_acceleration_step",
    "train",
    "active_backend",
    "available_backends",
    "use_backend",
    "__version__",
]
