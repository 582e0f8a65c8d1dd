import numpy as np
import pytest

from aamix.data import (
    BatchSampler,
    Dataset,
    apply_normalization,
    fit_normalization,
    load_csv,
    split,
    synthetic_regression,
    teacher_predictions,
)
from aamix.errors import EmptyFileError, ParseError


class TestLoadCsv:
    def test_two_row_file(self, tmp_path):
        path = tmp_path / "tiny.csv"
        path.write_text("a,b\n1,2\n3,4\n")
        ds = load_csv(path, ["b"])
        np.testing.assert_array_equal(ds.inputs, [[1.0], [3.0]])
        np.testing.assert_array_equal(ds.targets, [[2.0], [4.0]])
        assert ds.feature_names == ("a",)

    def test_two_point_zscore(self, tmp_path):
        path = tmp_path / "norm.csv"
        path.write_text("x,y\n1,0\n3,0\n")
        ds = load_csv(path, ["y"], normalize=True)
        np.testing.assert_allclose(ds.inputs.ravel(), [-1.0, 1.0])

    def test_parse_error_carries_position(self, tmp_path):
        path = tmp_path / "bad.csv"
        path.write_text("a,b\n1,2\n3,oops\n")
        with pytest.raises(ParseError) as err:
            load_csv(path, ["b"])
        assert err.value.row == 3
        assert err.value.col == 2

    def test_ragged_row_rejected(self, tmp_path):
        path = tmp_path / "ragged.csv"
        path.write_text("a,b\n1,2\n3\n")
        with pytest.raises(ParseError):
            load_csv(path, ["b"])

    def test_empty_file(self, tmp_path):
        path = tmp_path / "empty.csv"
        path.write_text("")
        with pytest.raises(EmptyFileError):
            load_csv(path, ["y"])
        path.write_text("a,b\n")
        with pytest.raises(EmptyFileError):
            load_csv(path, ["b"])

    def test_missing_target_column(self, tmp_path):
        path = tmp_path / "cols.csv"
        path.write_text("a,b\n1,2\n")
        with pytest.raises(ParseError):
            load_csv(path, ["chance"])


class TestSplit:
    def _dataset(self, d=500, c=9):
        rng = np.random.default_rng(0)
        return Dataset(rng.standard_normal((d, c)), rng.standard_normal((d, 1)))

    def test_80_20_sizes(self):
        train, val = split(self._dataset(), 0.8, seed=0)
        assert train.size == 400
        assert val.size == 100

    def test_deterministic_disjoint_exhaustive(self):
        ds = self._dataset(101, 3)
        for seed in (0, 1, 17):
            t1, v1 = split(ds, 0.7, seed)
            t2, v2 = split(ds, 0.7, seed)
            np.testing.assert_array_equal(t1.inputs, t2.inputs)
            np.testing.assert_array_equal(v1.inputs, v2.inputs)
            rows = np.vstack([t1.inputs, v1.inputs])
            assert rows.shape[0] == 101
            order = np.lexsort(rows.T)
            np.testing.assert_array_equal(
                rows[order], ds.inputs[np.lexsort(ds.inputs.T)]
            )

    def test_boundary_requires_nonempty_sides(self):
        ds = self._dataset(5, 2)
        # floor semantics always leave >= 1 validation row for f < 1
        train, val = split(ds, 0.999, seed=0)
        assert train.size == 4 and val.size == 1
        with pytest.raises(ValueError):
            split(ds, 0.05, seed=0)  # empty training side


class TestNormalization:
    def test_train_statistics_reapplied_to_validation(self):
        rng = np.random.default_rng(1)
        ds = Dataset(rng.standard_normal((50, 3)) * 4.0 + 2.0, rng.standard_normal((50, 1)))
        train, val = split(ds, 0.8, seed=2)
        stats = fit_normalization(train)
        train_n = apply_normalization(train, stats)
        val_n = apply_normalization(val, stats)
        np.testing.assert_allclose(train_n.inputs.mean(axis=0), 0.0, atol=1e-12)
        np.testing.assert_allclose(train_n.inputs.std(axis=0), 1.0, atol=1e-12)
        # validation is scaled with the training statistics, not its own
        assert np.abs(val_n.inputs.mean(axis=0)).max() > 1e-3
        recovered = val_n.inputs * stats.std + stats.mean
        np.testing.assert_allclose(recovered, val.inputs, atol=1e-12)

    def test_constant_column_maps_to_zero(self):
        ds = Dataset(np.ones((4, 2)), np.zeros((4, 1)))
        out = apply_normalization(ds, fit_normalization(ds))
        np.testing.assert_array_equal(out.inputs, np.zeros((4, 2)))


class TestBatchSampler:
    def test_full_batch(self):
        sampler = BatchSampler(10, 10, seed=0)
        np.testing.assert_array_equal(np.sort(sampler.next_batch()), np.arange(10))

    def test_epoch_partition(self):
        sampler = BatchSampler(25, 4, "shuffle_each_epoch", seed=3)
        seen = []
        for _ in range(sampler.iters_per_epoch):
            seen.extend(sampler.next_batch().tolist())
        assert sorted(seen) == list(range(25))

    def test_with_replacement_frequencies(self):
        d, b, draws = 20, 5, 20_000
        sampler = BatchSampler(d, b, "with_replacement", seed=9)
        counts = np.zeros(d)
        for _ in range(draws):
            for idx in sampler.next_batch():
                counts[idx] += 1
        expected = draws * b / d
        sigma = np.sqrt(draws * b * (1 / d) * (1 - 1 / d))
        assert np.abs(counts - expected).max() <= 3.5 * sigma

    def test_validation(self):
        with pytest.raises(ValueError):
            BatchSampler(10, 0)
        with pytest.raises(ValueError):
            BatchSampler(10, 11)
        with pytest.raises(ValueError):
            BatchSampler(10, 2, "bootstrap")


class TestSyntheticRegression:
    def test_deterministic(self):
        a = synthetic_regression(50, 4, 0.1, seed=5)
        b = synthetic_regression(50, 4, 0.1, seed=5)
        np.testing.assert_array_equal(a.inputs, b.inputs)
        np.testing.assert_array_equal(a.targets, b.targets)

    def test_zero_noise_equals_teacher(self):
        ds = synthetic_regression(40, 3, 0.0, seed=7)
        np.testing.assert_array_equal(ds.targets, teacher_predictions(ds.inputs, 7))

    def test_target_variance_grows_with_noise(self):
        clean = synthetic_regression(4000, 3, 0.0, seed=1)
        noisy = synthetic_regression(4000, 3, 0.5, seed=1)
        extra = np.var(noisy.targets) - np.var(clean.targets)
        assert extra == pytest.approx(0.25, rel=0.15)


class TestSyntheticAdmissions:
    def test_deterministic_and_bounded(self):
        from aamix.data import synthetic_admissions

        a = synthetic_admissions(100, 0.02, seed=3)
        b = synthetic_admissions(100, 0.02, seed=3)
        np.testing.assert_array_equal(a.inputs, b.inputs)
        np.testing.assert_array_equal(a.targets, b.targets)
        assert a.inputs.shape == (100, 9)
        assert a.targets.shape == (100, 1)
        assert (a.targets >= 0.0).all() and (a.targets <= 1.0).all()

    def test_scale_heterogeneity_spans_orders_of_magnitude(self):
        from aamix.data import synthetic_admissions

        ds = synthetic_admissions(400, 0.0, seed=1)
        sds = ds.inputs.std(axis=0)
        assert sds.max() / sds.min() > 50.0

    def test_positive_scores(self):
        from aamix.data import synthetic_admissions

        ds = synthetic_admissions(400, 0.0, seed=2)
        assert (ds.inputs.mean(axis=0) > 0).all()
