"""Safeguarded alternating Anderson acceleration around a fixed-point operator.

The trainer wraps any operator exposing ``evaluate(w, k) -> (loss, r)``
where the plain update is ``w + r``. Every ``p``-th iteration it replaces
the plain step with a least-squares extrapolation over the last ``m``
difference columns, accepts the candidate only if a probe evaluation
strictly reduces the residual 2-norm, and otherwise falls back to the
plain step. A moving-average smoother can rewrite the iterate before each
evaluation while iterate scatter is still large relative to the residual.

Two mixing variants are provided, selected by ``variant``:

* ``mix_correction``: w + beta * (r - (W + R) g), i.e. linear mixing
  between w and the full extrapolated iterate;
* ``mix_residual``: w + beta * r - (W + beta * R) g, the classical
  relaxation where beta damps only the residual terms.

They coincide at beta = 1.
"""

import math
import time
import warnings
from dataclasses import dataclass, replace

import numpy as np

from aamix import linalg
from aamix.errors import InsufficientHistoryError, NonFiniteError
from aamix.history import HistoryBuffer, IterateWindow
from aamix.smoothing import VarianceMonitor

__all__ = [
    "AccelerationConfig",
    "StepOutcome",
    "TrainerState",
    "RunRecord",
    "TrainResult",
    "RECORD_FIELDS",
    "is_acceleration_step",
    "anderson_extrapolate",
    "safeguarded_step",
    "train",
]

KIND_PLAIN = "plain"
KIND_ACCEPTED = "accelerated_accepted"
KIND_REJECTED = "accelerated_rejected"
KIND_UNSAFEGUARDED = "accelerated_unsafeguarded"
KIND_ABORTED = "aborted"

VARIANTS = ("mix_correction", "mix_residual")


@dataclass
class AccelerationConfig:
    """All tunables of the accelerated trainer.

    ``p`` is the number of iterations between extrapolation attempts,
    ``q`` the number between history snapshots, ``m`` the history depth,
    ``t`` the moving-average window (defaults to min(3, m)), ``epsilon``
    the adaptive smoothing threshold, and ``beta`` the mixing relaxation.
    ``tol`` stops the run once the batch loss drops below it; 0 disables
    the check and leaves ``max_iterations`` as the practical stop.
    """

    beta: float = 1.0
    p: int = 1
    q: int = 1
    m: int = 10
    t: int | None = None
    epsilon: float = 0.1
    tol: float = 0.0
    max_iterations: int = 1000
    variant: str = "mix_correction"
    safeguard: bool = True
    moving_average: bool = True
    clear_history_on_reject: bool = False
    latch_criterion: bool = True
    rewind_optimizer_on_reject: bool = False

    def __post_init__(self):
        if not 0.0 <= self.beta <= 1.0:
            raise ValueError(f"beta must be in [0, 1], got {self.beta}")
        for name in ("p", "q", "m", "max_iterations"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1, got {getattr(self, name)}")
        if self.t is None:
            self.t = min(3, self.m)
        if not 1 <= self.t <= self.m:
            raise ValueError(f"t must be in [1, m={self.m}], got {self.t}")
        if self.epsilon <= 0:
            raise ValueError(f"epsilon must be > 0, got {self.epsilon}")
        if self.tol < 0:
            raise ValueError(f"tol must be >= 0, got {self.tol}")
        if self.variant not in VARIANTS:
            raise ValueError(f"variant must be one of {VARIANTS}, got {self.variant!r}")
        if self.q > self.p:
            warnings.warn(
                f"storage frequency q={self.q} exceeds acceleration frequency "
                f"p={self.p}; q <= p is recommended",
                stacklevel=2,
            )

    def with_updates(self, **kwargs):
        return replace(self, **kwargs)


@dataclass(frozen=True)
class StepOutcome:
    kind: str
    residual_norm_before: float
    residual_norm_after: float  # NaN unless a safeguard probe ran
    ma_applied: bool


@dataclass
class TrainerState:
    w: np.ndarray
    iteration: int
    history: HistoryBuffer
    monitor: VarianceMonitor
    last_residual: np.ndarray | None = None
    last_loss: float = math.inf


@dataclass(frozen=True)
class RunRecord:
    """One CSV row per iteration; field order is the CSV schema."""

    iteration: int
    epoch: int
    train_loss: float
    val_loss: float
    residual_l2: float
    candidate_residual_l2: float
    step_kind: str
    ma_applied: bool
    ma_active: bool
    wall_ms: float


RECORD_FIELDS = tuple(RunRecord.__dataclass_fields__)


@dataclass
class TrainResult:
    w: np.ndarray
    records: list
    aborted: bool = False
    abort_reason: str = ""


def is_acceleration_step(k, p):
    """True on iterations where extrapolation is due: k >= 1 and p | k."""
    return k >= 1 and k % p == 0


def anderson_extrapolate(w, r, w_mat, r_mat, beta, variant="mix_correction"):
    """Extrapolated candidate iterate from (n, h) history matrices.

    Coefficients minimize ``||r - R g||_2``; rank-deficient histories drop
    trailing dependent columns per the linalg policy.
    """
    if w_mat.shape[1] != r_mat.shape[1]:
        raise InsufficientHistoryError(
            f"history windows have {w_mat.shape[1]} and {r_mat.shape[1]} columns"
        )
    return _extrapolate_rows(
        w, r, np.ascontiguousarray(w_mat.T), np.ascontiguousarray(r_mat.T), beta, variant
    )


def _extrapolate_rows(w, r, w_rows, r_rows, beta, variant):
    """Extrapolation on rows-layout history, the zero-copy hot path."""
    if w_rows.shape[0] == 0:
        raise InsufficientHistoryError("history windows are empty")
    fit = linalg.least_squares_rows(r_rows, r)
    g = fit.coeffs
    if variant == "mix_correction":
        candidate = w + beta * (r - (g @ w_rows + g @ r_rows))
    elif variant == "mix_residual":
        candidate = w + beta * r - (g @ w_rows + beta * (g @ r_rows))
    else:
        raise ValueError(f"unknown variant {variant!r}")
    if not np.isfinite(candidate).all():
        raise NonFiniteError("extrapolated candidate is non-finite")
    return candidate


def safeguarded_step(state, operator, cfg):
    """Advance the trainer by one iteration.

    Returns ``(outcome, loss, stopped)``. ``stopped`` is set when the
    batch loss fell to ``cfg.tol`` or below; the iterate is then left
    untouched. Raises :class:`NonFiniteError` if the evaluation itself
    degenerates; a non-finite extrapolation candidate is not an error but
    a safeguard rejection.
    """
    k = state.iteration
    ma_applied = False
    if cfg.moving_average and state.monitor.active:
        state.monitor.observe(state.w)
        if state.last_residual is not None:
            state.w, ma_applied = state.monitor.smooth(state.w, state.last_residual)

    loss, residual = operator.evaluate(state.w, k)
    if not math.isfinite(loss) or not np.isfinite(residual).all():
        raise NonFiniteError(f"non-finite evaluation at iteration {k}")
    state.last_residual = residual
    state.last_loss = loss
    r_norm = linalg.norm_l2(residual)

    if loss <= cfg.tol:
        state.iteration += 1
        return StepOutcome(KIND_PLAIN, r_norm, math.nan, ma_applied), loss, True

    if k % cfg.q == 0:
        state.history.push(state.w, residual)

    kind = KIND_PLAIN
    cand_norm = math.nan
    w_next = None
    if is_acceleration_step(k, cfg.p) and state.history.depth >= 1:
        w_rows, r_rows = state.history.as_rows()
        if w_rows.shape[0] > w_rows.shape[1]:
            # more columns than unknowns (m > n toys): keep the newest n
            w_rows = w_rows[-w_rows.shape[1]:]
            r_rows = r_rows[-r_rows.shape[1]:]
        try:
            candidate = _extrapolate_rows(
                state.w, residual, w_rows, r_rows, cfg.beta, cfg.variant
            )
        except NonFiniteError:
            candidate = None
        if candidate is None:
            kind = KIND_REJECTED
        elif cfg.safeguard:
            checkpoint = operator.checkpoint() if cfg.rewind_optimizer_on_reject else None
            probe_loss, probe_residual = operator.evaluate(candidate, k)
            if math.isfinite(probe_loss) and np.isfinite(probe_residual).all():
                cand_norm = linalg.norm_l2(probe_residual)
            if cand_norm < r_norm:  # NaN compares False: non-finite probes reject
                kind = KIND_ACCEPTED
                w_next = candidate
            else:
                kind = KIND_REJECTED
                if cfg.rewind_optimizer_on_reject:
                    operator.restore(checkpoint)
        else:
            kind = KIND_UNSAFEGUARDED
            w_next = candidate
        if kind == KIND_REJECTED and cfg.clear_history_on_reject:
            state.history.reset()

    if w_next is None:
        w_next = state.w + residual
    if not np.isfinite(w_next).all():
        raise NonFiniteError(f"non-finite iterate after update at iteration {k}")

    state.w = w_next
    state.iteration += 1
    return StepOutcome(kind, r_norm, cand_norm, ma_applied), loss, False


def train(operator, w0, cfg, validation_fn=None, val_every=1):
    """Run the accelerated training loop; returns a :class:`TrainResult`.

    ``validation_fn(w)`` (when given) is evaluated at iteration 0, every
    ``val_every``-th iteration thereafter, and on the final one; rows in
    between carry the last value forward. Validation never consumes batch
    draws, so it cannot perturb the training trajectory.
    """
    w = linalg.as_vector(np.array(w0, dtype=np.float64, copy=True), "w0")
    state = TrainerState(
        w=w,
        iteration=0,
        history=HistoryBuffer(cfg.m),
        monitor=VarianceMonitor(
            IterateWindow(cfg.t if cfg.t is not None else min(3, cfg.m)),
            epsilon=cfg.epsilon,
            active=cfg.moving_average,
            latch=cfg.latch_criterion,
        ),
    )
    ipe = max(1, getattr(operator, "iters_per_epoch", 1))
    records = []
    last_val = math.nan
    aborted = False
    reason = ""

    for k in range(cfg.max_iterations):
        started = time.perf_counter()
        try:
            outcome, loss, stopped = safeguarded_step(state, operator, cfg)
        except NonFiniteError as exc:
            reason = str(exc)
            aborted = True
            records.append(
                RunRecord(
                    iteration=k,
                    epoch=k // ipe,
                    train_loss=math.nan,
                    val_loss=last_val,
                    residual_l2=math.nan,
                    candidate_residual_l2=math.nan,
                    step_kind=KIND_ABORTED,
                    ma_applied=False,
                    ma_active=state.monitor.active,
                    wall_ms=(time.perf_counter() - started) * 1e3,
                )
            )
            break
        wall_ms = (time.perf_counter() - started) * 1e3

        if validation_fn is not None and (
            k == 0 or (k + 1) % val_every == 0 or stopped or k == cfg.max_iterations - 1
        ):
            last_val = float(validation_fn(state.w))
        records.append(
            RunRecord(
                iteration=k,
                epoch=k // ipe,
                train_loss=loss,
                val_loss=last_val,
                residual_l2=outcome.residual_norm_before,
                candidate_residual_l2=outcome.residual_norm_after,
                step_kind=outcome.kind,
                ma_applied=outcome.ma_applied,
                ma_active=state.monitor.active,
                wall_ms=wall_ms,
            )
        )
        if stopped:
            break

    return TrainResult(w=state.w, records=records, aborted=aborted, abort_reason=reason)
