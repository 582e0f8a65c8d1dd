import numpy as np
import pytest

from aamix import linalg
from aamix.errors import DimensionMismatchError, EmptyMatrixError, NonFiniteError
from oracles import lstsq_normal_equations_longdouble, random_conditioned_matrix


class TestQrFactorize:
    def test_already_orthonormal_columns(self, kernel_backend):
        a = np.array([[1.0, 0.0], [0.0, 1.0], [0.0, 0.0]])
        q, r, rank = linalg.qr_factorize(a)
        np.testing.assert_allclose(q, a, atol=1e-15)
        np.testing.assert_allclose(r, np.eye(2), atol=1e-15)
        assert rank == 2

    def test_single_column_normalization(self, kernel_backend):
        q, r, _ = linalg.qr_factorize(np.array([[3.0], [4.0]]))
        np.testing.assert_allclose(q, [[0.6], [0.8]], atol=1e-15)
        np.testing.assert_allclose(r, [[5.0]], atol=1e-15)

    def test_reconstruction_random(self, kernel_backend):
        rng = np.random.default_rng(7)
        a = rng.standard_normal((50, 5))
        q, r, rank = linalg.qr_factorize(a)
        rel = np.linalg.norm(q @ r - a) / np.linalg.norm(a)
        assert rel <= 1e-12
        assert np.linalg.norm(q.T @ q - np.eye(5)) <= 1e-12
        assert rank == 5

    def test_reconstruction_ill_conditioned(self, kernel_backend):
        rng = np.random.default_rng(8)
        a = random_conditioned_matrix(rng, 60, 6, 1e6)
        q, r, _ = linalg.qr_factorize(a)
        assert np.linalg.norm(q @ r - a) / np.linalg.norm(a) <= 1e-12

    def test_rank_deficiency_signaled(self, kernel_backend):
        col = np.arange(1.0, 7.0)
        a = np.column_stack([col, 2.0 * col])
        _, _, rank = linalg.qr_factorize(a)
        assert rank == 1

    def test_errors(self, kernel_backend):
        with pytest.raises(EmptyMatrixError):
            linalg.qr_factorize(np.zeros((4, 0)))
        bad = np.ones((4, 2))
        bad[1, 1] = np.nan
        with pytest.raises(NonFiniteError):
            linalg.qr_factorize(bad)
        with pytest.raises(DimensionMismatchError):
            linalg.qr_factorize(np.ones((2, 5)))


class TestLeastSquares:
    def test_orthonormal_columns(self, kernel_backend):
        r_mat = np.array([[1.0, 0.0], [0.0, 1.0], [0.0, 0.0]])
        fit = linalg.least_squares(r_mat, np.array([2.0, 3.0, 5.0]))
        np.testing.assert_allclose(fit.coeffs, [2.0, 3.0], atol=1e-14)
        assert not fit.degraded

    def test_exact_fit_single_column(self, kernel_backend):
        rhs = np.array([1.0, -2.0, 0.5])
        fit = linalg.least_squares(rhs.reshape(-1, 1), rhs)
        np.testing.assert_allclose(fit.coeffs, [1.0], atol=1e-14)

    def test_matches_extended_precision_oracle(self, kernel_backend):
        rng = np.random.default_rng(21)
        for _ in range(25):
            n = int(rng.integers(10, 51))
            c = int(rng.integers(1, 9))
            a = random_conditioned_matrix(rng, n, c, 1e3)
            b = rng.standard_normal(n)
            fit = linalg.least_squares(a, b)
            expected = lstsq_normal_equations_longdouble(a, b)
            rel = np.linalg.norm(fit.coeffs - expected) / np.linalg.norm(expected)
            assert rel <= 1e-10

    def test_rank_deficient_drops_trailing(self, kernel_backend):
        rng = np.random.default_rng(3)
        col0 = rng.standard_normal(20)
        col1 = rng.standard_normal(20)
        a = np.column_stack([col0, col1, col0])
        fit = linalg.least_squares(a, rng.standard_normal(20))
        assert fit.degraded
        assert fit.rank == 2
        assert fit.coeffs[2] == 0.0

    def test_minimality_property(self, kernel_backend):
        rng = np.random.default_rng(11)
        a = rng.standard_normal((30, 4))
        b = rng.standard_normal(30)
        fit = linalg.least_squares(a, b)
        best = np.linalg.norm(b - a @ fit.coeffs)
        for _ in range(100):
            other = fit.coeffs + rng.standard_normal(4) * rng.uniform(1e-6, 1.0)
            assert best <= np.linalg.norm(b - a @ other) + 1e-9

    def test_permutation_invariance(self, kernel_backend):
        rng = np.random.default_rng(13)
        a = rng.standard_normal((25, 5))
        b = rng.standard_normal(25)
        base = linalg.least_squares(a, b).coeffs
        for _ in range(5):
            perm = rng.permutation(5)
            permuted = linalg.least_squares(a[:, perm], b).coeffs
            np.testing.assert_allclose(permuted[np.argsort(perm)], base, atol=1e-9)

    def test_errors(self, kernel_backend):
        with pytest.raises(EmptyMatrixError):
            linalg.least_squares(np.zeros((4, 0)), np.zeros(4))
        with pytest.raises(DimensionMismatchError):
            linalg.least_squares(np.ones((4, 2)), np.zeros(3))


class TestVectorKernels:
    def test_norm_inf(self, kernel_backend):
        assert linalg.norm_inf(np.array([1.0, -3.0, 2.0])) == 3.0

    def test_norm_l2(self, kernel_backend):
        assert linalg.norm_l2(np.array([3.0, 4.0])) == pytest.approx(5.0)

    def test_axpy(self, kernel_backend):
        out = linalg.axpy(2.0, np.array([1.0, 1.0]), np.array([0.0, 1.0]))
        np.testing.assert_allclose(out, [2.0, 3.0])

    def test_axpy_leaves_inputs_alone(self, kernel_backend):
        x = np.array([1.0, 2.0])
        y = np.array([3.0, 4.0])
        linalg.axpy(-1.0, x, y)
        np.testing.assert_allclose(x, [1.0, 2.0])
        np.testing.assert_allclose(y, [3.0, 4.0])

    def test_nonfinite_rejected(self, kernel_backend):
        with pytest.raises(NonFiniteError):
            linalg.norm_l2(np.array([1.0, np.inf]))
        with pytest.raises(DimensionMismatchError):
            linalg.axpy(1.0, np.ones(3), np.ones(4))
