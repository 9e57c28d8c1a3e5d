"""Labeled tabular data with historical timestamps.

Rows carry a feature vector, a label in {-1, +1} and an ordinal-day date.
Datasets are immutable after construction and safe to share across workers.
"""
from __future__ import annotations

import datetime
import json
from dataclasses import dataclass

import numpy as np
import pandas as pd

from ._rng import substream

_DAYS_PER_PERIOD = 90
_TEST_ROW_FACTOR = 0.4


@dataclass(frozen=True)
class Dataset:
    features: np.ndarray
    labels: np.ndarray
    dates: np.ndarray
    feature_names: tuple[str, ...]

    def __post_init__(self):
        feats = np.asarray(self.features, dtype=np.float64)
        labels = np.asarray(self.labels, dtype=np.int64)
        dates = np.asarray(self.dates, dtype=np.int64)
        if feats.ndim != 2:
            raise ValueError("features must be a 2-D array")
        if labels.shape != (feats.shape[0],) or dates.shape != (feats.shape[0],):
            raise ValueError("labels/dates length must match the number of rows")
        if not np.all(np.isin(labels, (-1, 1))):
            raise ValueError("labels must be in {-1, +1}")
        if len(self.feature_names) != feats.shape[1]:
            raise ValueError("feature_names length must match feature dimension")
        for arr in (feats, labels, dates):
            arr.flags.writeable = False
        object.__setattr__(self, "features", feats)
        object.__setattr__(self, "labels", labels)
        object.__setattr__(self, "dates", dates)
        object.__setattr__(self, "feature_names", tuple(self.feature_names))

    @property
    def n_rows(self) -> int:
        return self.features.shape[0]

    @property
    def n_features(self) -> int:
        return self.features.shape[1]

    def subset(self, indices) -> "Dataset":
        idx = np.asarray(indices, dtype=np.int64)
        return Dataset(self.features[idx], self.labels[idx], self.dates[idx], self.feature_names)

    def positive_fraction(self) -> float:
        return float(np.mean(self.labels == 1))


@dataclass(frozen=True)
class SyntheticSpec:
    """Parameters of the synthetic stand-in for historical ratings data.

    n_rows is the training-set size; the test set gets 40% as many rows and
    covers a later period so temporal structure carries over.
    """

    n_rows: int = 2000
    n_features: int = 10
    positive_fraction_train: float = 0.09
    positive_fraction_test: float = 0.12
    n_periods: int = 4
    seed: int = 0

    def __post_init__(self):
        if self.n_rows < 10:
            raise ValueError("n_rows must be >= 10")
        if self.n_features < 1:
            raise ValueError("n_features must be >= 1")
        for frac in (self.positive_fraction_train, self.positive_fraction_test):
            if not 0.0 < frac < 1.0:
                raise ValueError("positive fractions must lie in (0, 1)")
        if self.n_periods < 1:
            raise ValueError("n_periods must be >= 1")

    def to_json(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(self.__dict__, fh, sort_keys=True)
            fh.write("\n")

    @classmethod
    def from_json(cls, path) -> "SyntheticSpec":
        with open(path) as fh:
            return cls(**json.load(fh))


def _parse_dates(column: pd.Series) -> np.ndarray:
    out = np.empty(len(column), dtype=np.int64)
    for i, value in enumerate(column):
        if isinstance(value, str):
            try:
                out[i] = datetime.date.fromisoformat(value).toordinal()
                continue
            except ValueError:
                pass
        try:
            out[i] = int(value)
        except (TypeError, ValueError):
            raise ValueError(f"date value {value!r} is neither ISO-8601 nor an integer ordinal")
    return out


def load_csv(path, label_column: str, date_column: str) -> Dataset:
    """Read a header CSV with a {0,1} label column mapped to {-1,+1}."""
    try:
        frame = pd.read_csv(path)
    except pd.errors.EmptyDataError:
        raise ValueError(f"empty file: {path}")
    if label_column not in frame.columns:
        raise ValueError(f"label column not found: '{label_column}'")
    if date_column not in frame.columns:
        raise ValueError(f"date column not found: '{date_column}'")

    raw_labels = frame[label_column].to_numpy()
    if not np.all(np.isin(raw_labels, (0, 1))):
        raise ValueError(f"label column '{label_column}' must contain only 0/1 values")
    labels = np.where(raw_labels == 1, 1, -1)
    dates = _parse_dates(frame[date_column])

    feature_frame = frame.drop(columns=[label_column, date_column])
    for name in feature_frame.columns:
        if not np.issubdtype(feature_frame[name].dtype, np.number):
            bad = feature_frame[name][pd.to_numeric(feature_frame[name], errors="coerce").isna()]
            raise ValueError(
                f"non-numeric cell in column '{name}' (first offender: {bad.iloc[0]!r})"
            )
    features = feature_frame.to_numpy(dtype=np.float64)
    return Dataset(features, labels, dates, tuple(feature_frame.columns))


def save_csv(d: Dataset, path, label_column: str = "label", date_column: str = "date") -> None:
    """Write a Dataset back to CSV with {0,1} labels and ordinal dates."""
    with open(path, "w") as fh:
        fh.write(",".join([*d.feature_names, label_column, date_column]) + "\n")
        zero_one = (d.labels == 1).astype(int)
        for row, lab, date in zip(d.features, zero_one, d.dates):
            cells = [repr(float(v)) for v in row] + [str(lab), str(int(date))]
            fh.write(",".join(cells) + "\n")


def _sample_rows(rng, spec: SyntheticSpec, n_rows: int, positive_fraction: float,
                 period_offset: int, n_periods: int, class_means, drifts) -> Dataset:
    n_pos = int(round(n_rows * positive_fraction))
    labels = np.full(n_rows, -1, dtype=np.int64)
    labels[:n_pos] = 1
    rng.shuffle(labels)

    periods = rng.integers(0, n_periods, size=n_rows) + period_offset
    day_in_period = rng.integers(0, _DAYS_PER_PERIOD, size=n_rows)
    dates = periods * _DAYS_PER_PERIOD + day_in_period

    noise = rng.normal(size=(n_rows, spec.n_features))
    means = np.where(labels[:, None] == 1, class_means[1][None, :], class_means[0][None, :])
    features = means + drifts[periods] + noise
    names = tuple(f"f{i}" for i in range(spec.n_features))
    return Dataset(features, labels, dates, names)


def generate_synthetic(spec: SyntheticSpec) -> tuple[Dataset, Dataset]:
    """Class-conditional Gaussians whose means drift across periods.

    The drift makes learners trained on different historical slices disagree,
    so temporal subsampling produces a genuinely diverse ensemble.  Output is
    bit-reproducible for a fixed spec.
    """
    rng = substream(spec.seed, "dataset/synthetic")
    n_informative = max(2, spec.n_features // 3)
    direction = np.zeros(spec.n_features)
    direction[:n_informative] = 1.0 / np.sqrt(n_informative)
    class_means = (-0.9 * direction, 0.9 * direction)

    total_periods = spec.n_periods + 1  # one extra, test-only period
    drifts = rng.normal(scale=0.7, size=(total_periods, spec.n_features))
    drifts[:, :n_informative] *= 1.3

    train = _sample_rows(rng, spec, spec.n_rows, spec.positive_fraction_train,
                         0, spec.n_periods, class_means, drifts)
    n_test = max(10, int(round(spec.n_rows * _TEST_ROW_FACTOR)))
    test = _sample_rows(rng, spec, n_test, spec.positive_fraction_test,
                        spec.n_periods, 1, class_means, drifts)
    return train, test


def rebalance(d: Dataset, mode: str, seed: int) -> Dataset:
    """Equalize class counts by undersampling or oversampling."""
    if mode not in ("undersample", "oversample"):
        raise ValueError(f"unknown rebalance mode: {mode!r}")
    pos_idx = np.nonzero(d.labels == 1)[0]
    neg_idx = np.nonzero(d.labels == -1)[0]
    if len(pos_idx) == 0 or len(neg_idx) == 0:
        raise ValueError("rebalance needs both classes present")
    rng = substream(seed, f"dataset/rebalance/{mode}")

    minority, majority = (pos_idx, neg_idx) if len(pos_idx) <= len(neg_idx) else (neg_idx, pos_idx)
    if mode == "undersample":
        kept_majority = rng.choice(majority, size=len(minority), replace=False)
        indices = np.concatenate([minority, kept_majority])
    else:
        extra = rng.choice(minority, size=len(majority) - len(minority), replace=True)
        indices = np.concatenate([minority, extra, majority])
    rng.shuffle(indices)
    return d.subset(indices)


def temporal_subsample(d: Dataset, n_subsets: int) -> list[Dataset]:
    """Contiguous date-ordered partition into near-equal subsets."""
    if n_subsets < 1:
        raise ValueError("n_subsets must be >= 1")
    if n_subsets > d.n_rows:
        raise ValueError(f"n_subsets={n_subsets} exceeds the {d.n_rows} available rows")
    order = np.argsort(d.dates, kind="stable")
    return [d.subset(chunk) for chunk in np.array_split(order, n_subsets)]


def stratified_split(d: Dataset, train_fraction: float, seed: int) -> tuple[Dataset, Dataset]:
    """Shuffled split preserving per-class proportions within rounding."""
    if not 0.0 < train_fraction < 1.0:
        raise ValueError("train_fraction must lie in (0, 1)")
    rng = substream(seed, "dataset/stratified_split")
    train_parts, test_parts = [], []
    for cls in (-1, 1):
        idx = np.nonzero(d.labels == cls)[0]
        if len(idx) < 2:
            raise ValueError(f"class {cls} has fewer than 2 rows; cannot split")
        idx = rng.permutation(idx)
        n_train = int(round(len(idx) * train_fraction))
        n_train = min(max(n_train, 1), len(idx) - 1)
        train_parts.append(idx[:n_train])
        test_parts.append(idx[n_train:])
    train_idx = rng.permutation(np.concatenate(train_parts))
    test_idx = rng.permutation(np.concatenate(test_parts))
    return d.subset(train_idx), d.subset(test_idx)
