"""Stochastic first-order optimizers expressed as fixed-point operators.

Each optimizer maps the current weights to an additive step r, so that the
plain update is ``w + r``. The trainer only ever sees this interface:

    loss, r = operator.evaluate(w, iteration)

One ``evaluate`` call consumes exactly one batch draw and advances the
optimizer's internal state (momentum buffers, Adam moments). State is not
rewound when a safeguarded step is later rejected; ``checkpoint`` /
``restore`` exist for the opt-in rewind ablation.
"""

from dataclasses import dataclass

import numpy as np

from aamix.errors import NonFiniteError, OperatorFailureError

__all__ = [
    "LrSchedule",
    "sgd_residual",
    "nesterov_residual",
    "adam_residual",
    "AdamState",
    "SgdOperator",
    "NesterovOperator",
    "AdamOperator",
    "AffineOperator",
    "make_operator",
]


@dataclass(frozen=True)
class LrSchedule:
    """Constant or step-decay learning rate, iteration- or epoch-indexed."""

    initial: float
    kind: str = "constant"  # constant | step_decay
    decay_factor: float = 1.0
    decay_every: int = 0
    unit: str = "epoch"  # iteration | epoch

    def __post_init__(self):
        if self.initial <= 0:
            raise ValueError("learning rate must be positive")
        if self.kind not in ("constant", "step_decay"):
            raise ValueError(f"unknown schedule kind {self.kind!r}")
        if self.unit not in ("iteration", "epoch"):
            raise ValueError(f"unknown schedule unit {self.unit!r}")
        if self.kind == "step_decay":
            if self.decay_every < 1:
                raise ValueError("step_decay needs decay_every >= 1")
            if not 0 < self.decay_factor <= 1:
                raise ValueError("decay_factor must be in (0, 1]")

    def value(self, iteration, epoch):
        if self.kind == "constant":
            return self.initial
        index = epoch if self.unit == "epoch" else iteration
        return self.initial * self.decay_factor ** (index // self.decay_every)


def sgd_residual(grad, lr):
    """Plain SGD step: r = -lr * grad."""
    return -lr * grad


def nesterov_residual(grad_fn, w, lr, momentum, velocity):
    """Classical Nesterov step expressed as a residual.

    Evaluates the gradient at the lookahead point ``w + momentum * velocity``
    and returns ``(loss, r, new_velocity)`` with r = new_velocity.
    """
    lookahead = w + momentum * velocity
    loss, grad = grad_fn(lookahead)
    new_velocity = momentum * velocity - lr * grad
    return loss, new_velocity, new_velocity


@dataclass
class AdamState:
    m: np.ndarray
    v: np.ndarray
    step: int = 0

    def copy(self):
        return AdamState(self.m.copy(), self.v.copy(), self.step)


def adam_residual(grad, lr, state, beta1=0.9, beta2=0.999, eps_hat=1e-8):
    """Bias-corrected Adam step; advances ``state`` in place."""
    state.step += 1
    state.m = beta1 * state.m + (1.0 - beta1) * grad
    state.v = beta2 * state.v + (1.0 - beta2) * grad * grad
    m_hat = state.m / (1.0 - beta1 ** state.step)
    v_hat = state.v / (1.0 - beta2 ** state.step)
    return -lr * m_hat / (np.sqrt(v_hat) + eps_hat)


class _GradientOperator:
    """Shared plumbing: batch draw, gradient evaluation, lr lookup."""

    def __init__(self, problem, sampler, schedule):
        self.problem = problem
        self.sampler = sampler
        self.schedule = schedule

    @property
    def dim(self):
        return self.problem.dim

    @property
    def iters_per_epoch(self):
        return self.sampler.iters_per_epoch

    def _lr(self, iteration):
        epoch = iteration // self.iters_per_epoch
        return self.schedule.value(iteration, epoch)

    def _loss_grad(self, w):
        batch = self.sampler.next_batch()
        try:
            return self.problem.loss_grad(w, batch)
        except Exception as exc:  # pragma: no cover - defensive
            raise OperatorFailureError(str(exc)) from exc

    def evaluate(self, w, iteration):
        raise NotImplementedError

    def checkpoint(self):
        return None

    def restore(self, state):
        pass


class SgdOperator(_GradientOperator):
    def evaluate(self, w, iteration):
        loss, grad = self._loss_grad(w)
        return loss, sgd_residual(grad, self._lr(iteration))


class NesterovOperator(_GradientOperator):
    def __init__(self, problem, sampler, schedule, momentum=0.9):
        super().__init__(problem, sampler, schedule)
        if not 0 <= momentum < 1:
            raise ValueError("momentum must be in [0, 1)")
        self.momentum = momentum
        self.velocity = np.zeros(problem.dim)

    def evaluate(self, w, iteration):
        loss, r, self.velocity = nesterov_residual(
            lambda point: self._loss_grad(point),
            w,
            self._lr(iteration),
            self.momentum,
            self.velocity,
        )
        return loss, r

    def checkpoint(self):
        return self.velocity.copy()

    def restore(self, state):
        self.velocity = state.copy()


class AdamOperator(_GradientOperator):
    def __init__(self, problem, sampler, schedule, beta1=0.9, beta2=0.999, eps_hat=1e-8):
        super().__init__(problem, sampler, schedule)
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps_hat = eps_hat
        self.state = AdamState(np.zeros(problem.dim), np.zeros(problem.dim))

    def evaluate(self, w, iteration):
        loss, grad = self._loss_grad(w)
        r = adam_residual(
            grad, self._lr(iteration), self.state, self.beta1, self.beta2, self.eps_hat
        )
        return loss, r

    def checkpoint(self):
        return self.state.copy()

    def restore(self, state):
        self.state = state.copy()


class AffineOperator:
    """Deterministic fixed-point operator G(w) = A w + b, optionally noisy.

    The logged loss is the residual 2-norm, so a stopping tolerance maps
    directly onto ``||r||_2 <= tol``.
    """

    def __init__(self, problem, noise_model=None, rng=None):
        self.problem = problem
        self.noise_model = noise_model
        self.rng = rng
        self.iters_per_epoch = 1

    @property
    def dim(self):
        return self.problem.dim

    def evaluate(self, w, iteration):
        from aamix.models import inject_noise  # local import avoids a cycle

        r = self.problem.residual(w)
        if self.noise_model is not None:
            r = inject_noise(r, self.noise_model, self.rng)
        if not np.isfinite(r).all():
            raise NonFiniteError("affine residual is non-finite")
        return float(np.sqrt(np.dot(r, r))), r

    def checkpoint(self):
        return None

    def restore(self, state):
        pass


_OPERATORS = {"sgd": SgdOperator, "nesterov": NesterovOperator, "adam": AdamOperator}


def make_operator(name, problem, sampler, schedule, **kwargs):
    try:
        cls = _OPERATORS[name]
    except KeyError:
        raise ValueError(f"unknown optimizer {name!r}; choose from {sorted(_OPERATORS)}")
    return cls(problem, sampler, schedule, **kwargs)
