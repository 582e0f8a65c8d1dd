"""Dataset loading, splitting, normalization, and batch sampling.

CSV files are UTF-8, comma-delimited, one header row, numeric cells.
Normalization is z-score per feature column; the experiment pipeline fits
the statistics on the training split only and reapplies them to the
validation split, while :func:`load_csv` with ``normalize=True`` scales
over the whole file (convenient for standalone use).
"""

import csv
import math
from dataclasses import dataclass

import numpy as np

from aamix.errors import DimensionMismatchError, EmptyFileError, ParseError

__all__ = [
    "Dataset",
    "load_csv",
    "split",
    "NormalizationStats",
    "fit_normalization",
    "apply_normalization",
    "BatchSampler",
    "synthetic_regression",
    "teacher_predictions",
]


@dataclass(frozen=True)
class Dataset:
    inputs: np.ndarray  # (D, c)
    targets: np.ndarray  # (D, s)
    feature_names: tuple = ()

    def __post_init__(self):
        if self.inputs.shape[0] != self.targets.shape[0]:
            raise DimensionMismatchError(
                f"{self.inputs.shape[0]} input rows vs {self.targets.shape[0]} target rows"
            )
        if self.inputs.shape[0] < 1:
            raise EmptyFileError("dataset has no rows")

    @property
    def size(self):
        return self.inputs.shape[0]


def load_csv(path, target_columns, normalize=False):
    """Load a numeric CSV with a header row into a Dataset.

    ``target_columns`` lists header names that become targets; the rest
    are features. Cell-level failures raise :class:`ParseError` with the
    1-based row and column.
    """
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise EmptyFileError(f"{path} is empty")
        header = [h.strip() for h in header]
        missing = [t for t in target_columns if t not in header]
        if missing:
            raise ParseError(f"target column(s) {missing} not in header {header}", 1, 0)
        rows = []
        for row_idx, row in enumerate(reader, start=2):
            if not row or all(cell.strip() == "" for cell in row):
                continue
            if len(row) != len(header):
                raise ParseError(
                    f"expected {len(header)} cells, got {len(row)}", row_idx, len(row)
                )
            values = []
            for col_idx, cell in enumerate(row, start=1):
                try:
                    values.append(float(cell))
                except ValueError:
                    raise ParseError(f"cannot parse {cell!r} as a number", row_idx, col_idx)
            rows.append(values)
    if not rows:
        raise EmptyFileError(f"{path} has a header but no data rows")

    table = np.asarray(rows, dtype=np.float64)
    target_idx = [header.index(t) for t in target_columns]
    feature_idx = [i for i in range(len(header)) if i not in target_idx]
    dataset = Dataset(
        inputs=table[:, feature_idx],
        targets=table[:, target_idx],
        feature_names=tuple(header[i] for i in feature_idx),
    )
    if normalize:
        dataset = apply_normalization(dataset, fit_normalization(dataset))
    return dataset


@dataclass(frozen=True)
class NormalizationStats:
    mean: np.ndarray
    std: np.ndarray  # zero-spread columns get std 1 so they map to 0


def fit_normalization(dataset):
    mean = dataset.inputs.mean(axis=0)
    std = dataset.inputs.std(axis=0)
    std = np.where(std == 0.0, 1.0, std)
    return NormalizationStats(mean, std)


def apply_normalization(dataset, stats):
    return Dataset(
        inputs=(dataset.inputs - stats.mean) / stats.std,
        targets=dataset.targets,
        feature_names=dataset.feature_names,
    )


def split(dataset, train_fraction, seed):
    """Seeded shuffle into disjoint, exhaustive (train, validation) parts."""
    if not 0.0 < train_fraction < 1.0:
        raise ValueError(f"train_fraction must be in (0, 1), got {train_fraction}")
    d = dataset.size
    n_train = math.floor(train_fraction * d)
    if n_train < 1 or d - n_train < 1:
        raise ValueError(
            f"split {train_fraction} of {d} rows leaves an empty side "
            f"({n_train} train / {d - n_train} validation)"
        )
    order = np.random.default_rng(seed).permutation(d)
    train_idx, val_idx = order[:n_train], order[n_train:]

    def take(idx):
        return Dataset(
            inputs=dataset.inputs[idx],
            targets=dataset.targets[idx],
            feature_names=dataset.feature_names,
        )

    return take(train_idx), take(val_idx)


class BatchSampler:
    """Emits batch index sets; one ``next_batch`` call is one draw.

    ``shuffle_each_epoch`` partitions a fresh permutation into consecutive
    chunks (the last one may be short); ``with_replacement`` draws B
    indices i.i.d. uniform per call.
    """

    def __init__(self, n_rows, batch_size, strategy="shuffle_each_epoch", seed=0):
        if not 1 <= batch_size <= n_rows:
            raise ValueError(f"batch_size must be in [1, {n_rows}], got {batch_size}")
        if strategy not in ("shuffle_each_epoch", "with_replacement"):
            raise ValueError(f"unknown strategy {strategy!r}")
        self.n_rows = n_rows
        self.batch_size = batch_size
        self.strategy = strategy
        self.rng = np.random.default_rng(seed)
        self._order = None
        self._cursor = 0

    @property
    def iters_per_epoch(self):
        return math.ceil(self.n_rows / self.batch_size)

    def next_batch(self):
        if self.strategy == "with_replacement":
            return self.rng.integers(0, self.n_rows, size=self.batch_size)
        if self._order is None or self._cursor >= self.n_rows:
            self._order = self.rng.permutation(self.n_rows)
            self._cursor = 0
        batch = self._order[self._cursor:self._cursor + self.batch_size]
        self._cursor += self.batch_size
        return batch


def teacher_predictions(inputs, seed):
    """Outputs of the fixed random tanh teacher used for synthetic data."""
    x = np.asarray(inputs, dtype=np.float64)
    rng = np.random.default_rng([seed, 1])
    c = x.shape[1]
    hidden = 16
    w1 = rng.uniform(-1.0, 1.0, size=(c, hidden)) / math.sqrt(c)
    b1 = rng.uniform(-0.5, 0.5, size=hidden)
    w2 = rng.uniform(-1.0, 1.0, size=(hidden, 1))
    b2 = rng.uniform(-0.5, 0.5, size=1)
    return np.tanh(x @ w1 + b1) @ w2 + b2


def synthetic_regression(n_samples, n_features, noise_sd, seed):
    """Teacher-generated regression set: targets = teacher(X) + noise."""
    if n_samples < 1 or n_features < 1:
        raise ValueError("n_samples and n_features must be positive")
    if noise_sd < 0:
        raise ValueError("noise_sd must be >= 0")
    rng = np.random.default_rng([seed, 0])
    inputs = rng.standard_normal((n_samples, n_features))
    targets = teacher_predictions(inputs, seed)
    if noise_sd > 0:
        targets = targets + noise_sd * np.random.default_rng([seed, 2]).standard_normal(
            targets.shape
        )
    names = tuple(f"x{i}" for i in range(n_features))
    return Dataset(inputs=inputs, targets=targets, feature_names=names)


# raw magnitudes of score-like columns (think GRE/TOEFL/ratings/GPA style
# heterogeneity); deliberately spanning two orders of magnitude
ADMISSIONS_SCALES = (320.0, 110.0, 5.0, 5.0, 5.0, 9.5, 1.0, 50.0, 10.0)


def synthetic_admissions(n_samples, noise_sd, seed):
    """Offline stand-in for a graduate-admissions style table.

    Nine positive score columns on heterogeneous raw scales and a smooth
    bounded target in (0, 1) driven by the standardized scores. Meant to
    be trained on unnormalized, like the real score sheets.
    """
    if n_samples < 1:
        raise ValueError("n_samples must be positive")
    if noise_sd < 0:
        raise ValueError("noise_sd must be >= 0")
    scales = np.asarray(ADMISSIONS_SCALES)
    rng = np.random.default_rng([seed, 0])
    z = rng.standard_normal((n_samples, scales.shape[0]))
    inputs = z * scales + 3.0 * scales
    t_rng = np.random.default_rng([seed, 1])
    a = t_rng.standard_normal((scales.shape[0], 1)) / 3.0
    u = t_rng.standard_normal((scales.shape[0], 1)) / 3.0
    logits = z @ a + 0.5 * np.tanh(z @ u)
    targets = 1.0 / (1.0 + np.exp(-logits))
    if noise_sd > 0:
        eta = np.random.default_rng([seed, 2]).standard_normal(targets.shape)
        targets = np.clip(targets + noise_sd * eta, 0.0, 1.0)
    names = tuple(f"score{i}" for i in range(scales.shape[0]))
    return Dataset(inputs=inputs, targets=targets, feature_names=names)
