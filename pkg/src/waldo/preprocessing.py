"""Feature standardization and stratified fold assignment."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from sklearn.base import BaseEstimator, OneToOneFeatureMixin, TransformerMixin
from sklearn.utils.validation import check_array, check_is_fitted, validate_data

from .exceptions import DataError


class Standardizer(OneToOneFeatureMixin, TransformerMixin, BaseEstimator):
    """Center each feature on its training mean and scale to unit population variance.

    Zero-variance features are only centered (their ``scale_`` is 1).

    Attributes
    ----------
    mean_ : ndarray of shape (n_features,)
    scale_ : ndarray of shape (n_features,)
        Population standard deviation, with zeros replaced by 1.
    """

    def fit(self, X, y=None):
        X = validate_data(self, X, dtype=np.float64, ensure_min_samples=2)
        self.mean_ = X.mean(axis=0)
        std = np.sqrt(((X - self.mean_) ** 2).mean(axis=0))
        self.var_ = std ** 2
        self.scale_ = np.where(std > 0, std, 1.0)
        return self

    def transform(self, X):
        check_is_fitted(self)
        X = validate_data(self, X, dtype=np.float64, reset=False)
        return (X - self.mean_) / self.scale_

    def inverse_transform(self, X):
        check_is_fitted(self)
        X = check_array(X, dtype=np.float64)
        return X * self.scale_ + self.mean_

    def to_dict(self) -> dict:
        check_is_fitted(self)
        return {"mean": self.mean_.tolist(), "scale": self.scale_.tolist()}

    @classmethod
    def from_dict(cls, d: dict) -> "Standardizer":
        self = cls()
        self.mean_ = np.asarray(d["mean"], dtype=float)
        self.scale_ = np.asarray(d["scale"], dtype=float)
        self.var_ = np.where(self.scale_ == 1.0, 0.0, self.scale_ ** 2)
        self.n_features_in_ = len(self.mean_)
        return self


def fit_standardizer(train_rows) -> Standardizer:
    try:
        return Standardizer().fit(train_rows)
    except ValueError as exc:
        raise DataError(str(exc)) from None


def apply_standardizer(std: Standardizer, rows) -> np.ndarray:
    return std.transform(rows)


@dataclass(frozen=True)
class FoldPlan:
    k: int
    assignment: np.ndarray

    def split(self):
        """Yield ``(train_idx, test_idx)`` for each fold in order."""
        for fold in range(self.k):
            test = self.assignment == fold
            yield np.flatnonzero(~test), np.flatnonzero(test)

    def counts(self, labels) -> dict[int, list[int]]:
        labels = np.asarray(labels)
        return {int(c): [int(np.sum((labels == c) & (self.assignment == f))) for f in range(self.k)]
                for c in np.unique(labels)}


def stratified_kfold(labels, k: int, seed: int = 0) -> FoldPlan:
    """Seeded stratified assignment of rows to ``k`` folds.

    Each class is shuffled and dealt round-robin, continuing the deal where
    the previous class stopped so fold sizes also stay within one row.
    """
    labels = np.asarray(labels)
    if int(k) != k or k < 2:
        raise DataError(f"k must be an integer >= 2, got {k}")
    classes, counts = np.unique(labels, return_counts=True)
    small = classes[counts < k]
    if len(small):
        raise DataError(f"class {small[0]} has {counts[counts < k][0]} rows, fewer than k={k}")
    rng = np.random.default_rng(seed)
    assignment = np.empty(len(labels), dtype=int)
    offset = 0
    for c in classes:
        members = rng.permutation(np.flatnonzero(labels == c))
        assignment[members] = (offset + np.arange(len(members))) % k
        offset = (offset + len(members)) % k
    return FoldPlan(int(k), assignment)
