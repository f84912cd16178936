"""Stratified cross-validation of the standardize + forest pipeline."""
from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np
from sklearn.base import clone
from sklearn.pipeline import Pipeline

from .forest import RandomForestClassifier
from .preprocessing import Standardizer, stratified_kfold


def make_pipeline(forest: RandomForestClassifier | None = None) -> Pipeline:
    return Pipeline([("standardize", Standardizer()),
                     ("forest", forest if forest is not None else RandomForestClassifier())])


@dataclass
class Metrics:
    fold: int
    accuracy: float
    confusion: list[list[int]]
    recall: list[float]
    depth_min: int
    depth_max: int
    n_test: int

    def to_dict(self) -> dict:
        return asdict(self)


def confusion_matrix(y_true, y_pred, classes) -> np.ndarray:
    index = {int(c): i for i, c in enumerate(classes)}
    cm = np.zeros((len(classes), len(classes)), dtype=int)
    for t, p in zip(y_true, y_pred):
        cm[index[int(t)], index[int(p)]] += 1
    return cm


def recall_from_confusion(cm) -> np.ndarray:
    cm = np.asarray(cm)
    support = cm.sum(axis=1)
    with np.errstate(invalid="ignore", divide="ignore"):
        return np.where(support > 0, np.diag(cm) / np.maximum(support, 1), np.nan)


def evaluate(pipeline: Pipeline, X_test, y_test, classes, fold: int = 0) -> Metrics:
    pred = pipeline.predict(X_test)
    cm = confusion_matrix(y_test, pred, classes)
    depth_min, depth_max = pipeline[-1].depth_range()
    return Metrics(fold, float(np.trace(cm) / cm.sum()), cm.tolist(),
                   recall_from_confusion(cm).tolist(), depth_min, depth_max, int(cm.sum()))


def cross_validate(X, y, forest: RandomForestClassifier | None = None, k: int = 5,
                   seed: int = 0) -> list[Metrics]:
    """Per fold: fit the standardizer and forest on the training split, score the test split."""
    X = np.asarray(X, dtype=float)
    y = np.asarray(y)
    classes = np.unique(y)
    plan = stratified_kfold(y, k, seed)
    base = make_pipeline(forest)
    out = []
    for fold, (train, test) in enumerate(plan.split(), start=1):
        pipe = clone(base).fit(X[train], y[train])
        out.append(evaluate(pipe, X[test], y[test], classes, fold))
    return out


def pooled_confusion(metrics: list[Metrics]) -> np.ndarray:
    return np.sum([np.asarray(m.confusion) for m in metrics], axis=0)


def summary(metrics: list[Metrics]) -> dict:
    acc = [m.accuracy for m in metrics]
    cm = pooled_confusion(metrics)
    return {
        "mean_accuracy": float(np.mean(acc)),
        "accuracy_spread": float(max(acc) - min(acc)),
        "pooled_recall": recall_from_confusion(cm).tolist(),
        "depth_min": int(min(m.depth_min for m in metrics)),
        "depth_max": int(max(m.depth_max for m in metrics)),
    }


def permutation_control(X, y, forest: RandomForestClassifier | None = None, k: int = 5,
                        seed: int = 0) -> float:
    """Mean CV accuracy after destroying the label/signature link.

    Classes are first downsampled to the smallest class size so that the
    chance level is exactly one over the number of classes.
    """
    X = np.asarray(X, dtype=float)
    y = np.asarray(y)
    rng = np.random.default_rng([seed, 0xC0])
    classes, counts = np.unique(y, return_counts=True)
    keep = np.sort(np.concatenate([rng.choice(np.flatnonzero(y == c), counts.min(), replace=False)
                                   for c in classes]))
    y_perm = rng.permutation(y[keep])
    return float(np.mean([m.accuracy for m in cross_validate(X[keep], y_perm, forest, k, seed)]))
