"""Trainable problems: MLP regression/classification and affine maps.

The MLP keeps all weights in one flat float64 vector (the fixed-point
iterate) and computes gradients by manual backpropagation. The affine map
is the desk-scale exactness testbed: a contraction G(w) = A w + b whose
fixed point is known, so extrapolation quality can be measured directly.
"""

import math
from dataclasses import dataclass

import numpy as np

from aamix.errors import DimensionMismatchError, NonFiniteError

__all__ = [
    "MlpSpec",
    "LossFunction",
    "mlp_init",
    "mlp_forward",
    "mlp_loss_grad",
    "MlpProblem",
    "AffineMapProblem",
    "estimate_spectral_radius",
    "random_contraction",
    "NoiseModel",
    "inject_noise",
]


@dataclass(frozen=True)
class MlpSpec:
    """Fully-connected architecture: sizes [in, hidden..., out]."""

    layer_sizes: tuple
    activation: str = "relu"  # relu | tanh, hidden layers only; linear output head
    init_seed: int = 0

    def __post_init__(self):
        sizes = tuple(int(s) for s in self.layer_sizes)
        object.__setattr__(self, "layer_sizes", sizes)
        if len(sizes) < 2 or any(s < 1 for s in sizes):
            raise ValueError(f"need >= 2 positive layer sizes, got {sizes}")
        if self.activation not in ("relu", "tanh"):
            raise ValueError(f"unknown activation {self.activation!r}")

    @property
    def dim(self):
        """Total number of weights: sum of (fan_in + 1) * fan_out."""
        sizes = self.layer_sizes
        return sum((a + 1) * b for a, b in zip(sizes[:-1], sizes[1:]))


def _layer_views(spec, w):
    """Yield (W, b) views into the flat parameter vector, layer by layer."""
    sizes = spec.layer_sizes
    offset = 0
    for a, b in zip(sizes[:-1], sizes[1:]):
        weight = w[offset:offset + a * b].reshape(a, b)
        offset += a * b
        bias = w[offset:offset + b]
        offset += b
        yield weight, bias


def mlp_init(spec):
    """Uniform init in [-1/sqrt(fan_in), +1/sqrt(fan_in)], seeded."""
    rng = np.random.default_rng(spec.init_seed)
    chunks = []
    sizes = spec.layer_sizes
    for a, b in zip(sizes[:-1], sizes[1:]):
        bound = 1.0 / math.sqrt(a)
        chunks.append(rng.uniform(-bound, bound, size=a * b))
        chunks.append(rng.uniform(-bound, bound, size=b))
    return np.concatenate(chunks)


def _activate(z, activation):
    if activation == "relu":
        return np.maximum(z, 0.0)
    return np.tanh(z)


def mlp_forward(spec, w, x_batch):
    """Deterministic forward pass; returns (B, out) predictions."""
    if w.shape[0] != spec.dim:
        raise DimensionMismatchError(f"weights length {w.shape[0]} != spec dim {spec.dim}")
    a = np.asarray(x_batch, dtype=np.float64)
    layers = list(_layer_views(spec, w))
    for idx, (weight, bias) in enumerate(layers):
        z = a @ weight + bias
        a = z if idx == len(layers) - 1 else _activate(z, spec.activation)
    return a


@dataclass(frozen=True)
class LossFunction:
    """Batch-mean loss over predictions; mse or logistic cross-entropy.

    For mse the per-sample term is the squared 2-norm of the prediction
    error; for logistic the predictions are logits and the term is binary
    cross-entropy. Both are nonnegative, and mse is 0 exactly at a perfect
    fit.
    """

    kind: str = "mse"  # mse | logistic_cross_entropy

    def __post_init__(self):
        if self.kind not in ("mse", "logistic_cross_entropy"):
            raise ValueError(f"unknown loss kind {self.kind!r}")

    def value_and_grad(self, pred, y):
        """Loss value and gradient with respect to the predictions."""
        n = pred.shape[0]
        if self.kind == "mse":
            diff = pred - y
            return float(np.sum(diff * diff)) / n, (2.0 / n) * diff
        # logistic: pred holds logits; stable softplus / sigmoid
        value = float(np.sum(np.logaddexp(0.0, pred) - y * pred)) / n
        sigma = np.exp(-np.logaddexp(0.0, -pred))
        return value, (sigma - y) / n

    def value(self, pred, y):
        return self.value_and_grad(pred, y)[0]


def mlp_loss_grad(spec, w, x_batch, y_batch, loss):
    """Batch loss and full gradient via manual backpropagation.

    The relu subgradient at exactly 0 is taken as 0.
    """
    x = np.asarray(x_batch, dtype=np.float64)
    y = np.asarray(y_batch, dtype=np.float64)
    if x.shape[0] == 0:
        raise DimensionMismatchError("batch is empty")
    if not (np.isfinite(x).all() and np.isfinite(w).all()):
        raise NonFiniteError("non-finite inputs to loss_grad")

    layers = list(_layer_views(spec, w))
    activations = [x]
    pre = []
    a = x
    for idx, (weight, bias) in enumerate(layers):
        z = a @ weight + bias
        pre.append(z)
        a = z if idx == len(layers) - 1 else _activate(z, spec.activation)
        activations.append(a)

    value, delta = loss.value_and_grad(activations[-1], y)

    grad = np.zeros_like(w)
    grad_views = list(_layer_views(spec, grad))
    for idx in range(len(layers) - 1, -1, -1):
        g_w, g_b = grad_views[idx]
        g_w += activations[idx].T @ delta
        g_b += delta.sum(axis=0)
        if idx > 0:
            back = delta @ layers[idx][0].T
            if spec.activation == "relu":
                back *= (pre[idx - 1] > 0.0)
            else:
                t = np.tanh(pre[idx - 1])
                back *= 1.0 - t * t
            delta = back
    return value, grad


class MlpProblem:
    """Binds an architecture, a loss, and (inputs, targets) arrays."""

    def __init__(self, spec, inputs, targets, loss=None):
        self.spec = spec
        self.inputs = np.asarray(inputs, dtype=np.float64)
        self.targets = np.asarray(targets, dtype=np.float64)
        self.loss = loss or LossFunction("mse")
        if self.inputs.shape[1] != spec.layer_sizes[0]:
            raise DimensionMismatchError(
                f"{self.inputs.shape[1]} features vs input layer {spec.layer_sizes[0]}"
            )
        if self.targets.shape[1] != spec.layer_sizes[-1]:
            raise DimensionMismatchError(
                f"{self.targets.shape[1]} target dims vs output layer {spec.layer_sizes[-1]}"
            )

    @property
    def dim(self):
        return self.spec.dim

    def initial_weights(self):
        return mlp_init(self.spec)

    def loss_grad(self, w, batch_indices):
        return mlp_loss_grad(
            self.spec, w, self.inputs[batch_indices], self.targets[batch_indices], self.loss
        )

    def full_loss(self, w, inputs=None, targets=None):
        """Loss over an arbitrary set (defaults to the bound training set)."""
        x = self.inputs if inputs is None else inputs
        y = self.targets if targets is None else targets
        return self.loss.value(mlp_forward(self.spec, w, x), y)


def estimate_spectral_radius(a, iterations=200, seed=0):
    """Power-iteration estimate of the spectral radius.

    Uses the geometric mean of the per-step growth, which converges for
    complex dominant pairs where the plain Rayleigh estimate oscillates.
    """
    a = np.asarray(a, dtype=np.float64)
    n = a.shape[0]
    rng = np.random.default_rng(seed)
    x = rng.standard_normal(n)
    x /= np.sqrt(np.dot(x, x))
    log_growth = 0.0
    for _ in range(iterations):
        x = a @ x
        nx = np.sqrt(np.dot(x, x))
        if nx == 0.0:
            return 0.0
        log_growth += math.log(nx)
        x /= nx
    return math.exp(log_growth / iterations)


class AffineMapProblem:
    """Contractive affine map G(w) = A w + b.

    Construction verifies the contraction property with a power-iteration
    estimate and rejects non-contractive matrices.
    """

    def __init__(self, a, b, radius_estimate_iterations=200):
        self.a = np.ascontiguousarray(a, dtype=np.float64)
        self.b = np.ascontiguousarray(b, dtype=np.float64)
        if self.a.ndim != 2 or self.a.shape[0] != self.a.shape[1]:
            raise DimensionMismatchError(f"A must be square, got {self.a.shape}")
        if self.b.shape != (self.a.shape[0],):
            raise DimensionMismatchError("b length must match A")
        estimate = estimate_spectral_radius(self.a, radius_estimate_iterations)
        if estimate >= 1.0:
            raise ValueError(f"spectral radius estimate {estimate:.4f} >= 1, not a contraction")
        self.radius_estimate = estimate

    @property
    def dim(self):
        return self.a.shape[0]

    def residual(self, w):
        """r = G(w) - w = A w + b - w."""
        return self.a @ w + self.b - w


def random_contraction(n, radius, seed):
    """Random dense map rescaled so its radius estimate equals ``radius``."""
    if not 0 < radius < 1:
        raise ValueError("radius must be in (0, 1)")
    rng = np.random.default_rng(seed)
    m = rng.standard_normal((n, n))
    estimate = estimate_spectral_radius(m)
    a = m * (radius / estimate)
    b = rng.standard_normal(n)
    return AffineMapProblem(a, b)


@dataclass(frozen=True)
class NoiseModel:
    """Zero-mean bounded-variance additive noise on the residual."""

    kind: str = "uniform"  # uniform | gaussian_truncated
    sd: float = 0.0
    truncation: float = 3.0  # clip point in units of sd, gaussian only

    def __post_init__(self):
        if self.kind not in ("uniform", "gaussian_truncated"):
            raise ValueError(f"unknown noise kind {self.kind!r}")
        if self.sd < 0:
            raise ValueError("sd must be >= 0")


def inject_noise(r, model, rng):
    """r + eta with i.i.d. entries per the noise model; fresh draws per call."""
    if model.sd == 0.0:
        return r.copy()
    n = r.shape[0]
    if model.kind == "uniform":
        half_width = model.sd * math.sqrt(3.0)
        eta = rng.uniform(-half_width, half_width, size=n)
    else:
        eta = model.sd * np.clip(
            rng.standard_normal(n), -model.truncation, model.truncation
        )
    return r + eta
