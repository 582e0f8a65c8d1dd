import numpy as np
import pytest

from aamix.data import BatchSampler
from aamix.models import LossFunction, MlpProblem, MlpSpec, mlp_init
from aamix.optimizers import (
    AdamState,
    LrSchedule,
    adam_residual,
    make_operator,
    nesterov_residual,
    sgd_residual,
)


class TestLrSchedule:
    def test_constant(self):
        sched = LrSchedule(0.5)
        assert sched.value(0, 0) == sched.value(10_000, 37) == 0.5

    def test_epoch_step_decay(self):
        sched = LrSchedule(0.02, "step_decay", decay_factor=0.2, decay_every=1000, unit="epoch")
        assert sched.value(0, 999) == pytest.approx(0.02)
        assert sched.value(0, 1000) == pytest.approx(4e-3)
        assert sched.value(0, 1999) == pytest.approx(4e-3)
        assert sched.value(0, 2000) == pytest.approx(8e-4)

    def test_iteration_step_decay(self):
        sched = LrSchedule(1.0, "step_decay", decay_factor=0.5, decay_every=500, unit="iteration")
        assert sched.value(499, 0) == 1.0
        assert sched.value(500, 0) == 0.5

    def test_validation(self):
        with pytest.raises(ValueError):
            LrSchedule(0.0)
        with pytest.raises(ValueError):
            LrSchedule(0.1, "step_decay", decay_factor=0.2, decay_every=0)
        with pytest.raises(ValueError):
            LrSchedule(0.1, kind="warmup")


class TestSgd:
    def test_arithmetic(self):
        np.testing.assert_array_equal(sgd_residual(np.array([2.0]), 0.5), [-1.0])

    def test_zero_gradient_is_fixed_point(self):
        np.testing.assert_array_equal(sgd_residual(np.zeros(3), 0.1), np.zeros(3))

    def test_quadratic_decay_closed_form(self):
        # grad of 0.5*||w||^2 is w; iterates shrink by (1 - lr) per step
        w = np.array([1.0])
        for k in range(1, 30):
            w = w + sgd_residual(w, 0.1)
            assert w[0] == pytest.approx(0.9 ** k, rel=1e-12)


class TestNesterov:
    def test_zero_momentum_matches_sgd(self):
        grad_fn = lambda point: (0.0, 2.0 * point)
        w = np.array([1.5, -2.0])
        _, r, _ = nesterov_residual(grad_fn, w, 0.05, 0.0, np.zeros(2))
        np.testing.assert_allclose(r, sgd_residual(2.0 * w, 0.05))

    def test_first_step_is_sgd_at_lookahead(self):
        grad_fn = lambda point: (0.0, point + 1.0)
        w = np.array([2.0])
        _, r, v = nesterov_residual(grad_fn, w, 0.1, 0.9, np.zeros(1))
        # zero velocity: lookahead == w
        np.testing.assert_allclose(r, -0.1 * (w + 1.0))
        np.testing.assert_allclose(v, r)

    def test_constant_gradient_velocity_limit(self):
        # v_k = -lr*g*(1 - mu^k)/(1 - mu) -> -lr*g/(1-mu)
        g = np.array([3.0])
        grad_fn = lambda point: (0.0, g)
        mu, lr = 0.9, 0.01
        v = np.zeros(1)
        for k in range(1, 400):
            _, r, v = nesterov_residual(grad_fn, np.zeros(1), lr, mu, v)
            expected = -lr * g * (1.0 - mu ** k) / (1.0 - mu)
            np.testing.assert_allclose(v, expected, rtol=1e-12)
        np.testing.assert_allclose(v, -lr * g / (1.0 - mu), rtol=1e-4)


class TestAdam:
    def test_first_step_magnitude(self):
        state = AdamState(np.zeros(1), np.zeros(1))
        r = adam_residual(np.array([1.0]), 0.02, state)
        assert r[0] == pytest.approx(-0.02, rel=1e-7)

    def test_zero_gradient_forever(self):
        state = AdamState(np.zeros(2), np.zeros(2))
        for _ in range(5):
            r = adam_residual(np.zeros(2), 0.1, state)
            np.testing.assert_array_equal(r, np.zeros(2))

    def test_quadratic_bowl_monotone_decrease(self):
        state = AdamState(np.zeros(3), np.zeros(3))
        w = np.array([1.0, -2.0, 0.5])
        losses = [0.5 * float(w @ w)]
        for _ in range(100):
            w = w + adam_residual(w, 0.02, state)
            losses.append(0.5 * float(w @ w))
        assert all(b < a for a, b in zip(losses, losses[1:]))


def _problem(seed=0):
    rng = np.random.default_rng(seed)
    inputs = rng.standard_normal((64, 3))
    targets = rng.standard_normal((64, 1))
    spec = MlpSpec((3, 8, 1), "tanh", init_seed=seed)
    return MlpProblem(spec, inputs, targets, LossFunction("mse")), spec


@pytest.mark.parametrize("kind", ["sgd", "nesterov", "adam"])
def test_operator_determinism(kind):
    problem, spec = _problem()
    streams = []
    for _ in range(2):
        sampler = BatchSampler(64, 16, "shuffle_each_epoch", seed=5)
        op = make_operator(kind, problem, sampler, LrSchedule(0.01))
        w = mlp_init(spec)
        stream = []
        for k in range(20):
            loss, r = op.evaluate(w, k)
            w = w + r
            stream.append((loss, r.copy()))
        streams.append(stream)
    for (l1, r1), (l2, r2) in zip(*streams):
        assert l1 == l2
        np.testing.assert_array_equal(r1, r2)


def test_sgd_descent_direction_sanity():
    # small-lr SGD should reduce the batch loss on the same batch almost always
    problem, spec = _problem(3)
    w = mlp_init(spec)
    rng = np.random.default_rng(0)
    hits = 0
    trials = 200
    for _ in range(trials):
        batch = rng.integers(0, 64, size=16)
        loss, grad = problem.loss_grad(w, batch)
        r = sgd_residual(grad, 1e-3)
        after, _ = problem.loss_grad(w + r, batch)
        hits += after < loss
        w = w + r
    assert hits >= 0.99 * trials


def test_checkpoint_restore_roundtrip():
    problem, spec = _problem(1)
    sampler = BatchSampler(64, 16, "shuffle_each_epoch", seed=2)
    op = make_operator("adam", problem, sampler, LrSchedule(0.01))
    w = mlp_init(spec)
    op.evaluate(w, 0)
    saved = op.checkpoint()
    before = (saved.m.copy(), saved.v.copy(), saved.step)
    op.evaluate(w, 1)
    op.restore(saved)
    assert op.state.step == before[2]
    np.testing.assert_array_equal(op.state.m, before[0])
    np.testing.assert_array_equal(op.state.v, before[1])
