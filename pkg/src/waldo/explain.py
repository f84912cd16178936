"""Exact Shapley attributions for the forest (path-dependent TreeSHAP).

Conditioning follows the training covers: when a feature is unknown at a
split, both children are visited, weighted by their share of the cover.
:func:`tree_shap` computes attributions in polynomial time, vectorised over
samples and classes. :func:`brute_force_shap` evaluates the same game by
enumerating every coalition and serves as its oracle.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass

import numpy as np

from .exceptions import DataError, DomainError
from .forest import TREE_LEAF, RandomForestClassifier, Tree
from .pdn import FrequencyGrid

MAX_BRUTE_FORCE_FEATURES = 15


def _check_tree(tree: Tree):
    if tree.cover is None or len(tree.cover) != tree.node_count:
        raise DataError("tree has no node covers")
    if not np.all(np.isfinite(tree.cover)) or np.any(tree.cover <= 0):
        raise DataError("node covers must be finite and positive")


def expected_value(tree: Tree) -> np.ndarray:
    """Cover-weighted mean leaf output (the empty-coalition value), per class."""
    _check_tree(tree)
    values = tree.leaf_values
    weight = np.zeros(tree.node_count)
    weight[0] = 1.0
    out = np.zeros(tree.n_classes)
    for node in range(tree.node_count):
        if tree.is_leaf(node):
            out += weight[node] * values[node]
        else:
            for child in (tree.children_left[node], tree.children_right[node]):
                weight[child] = weight[node] * tree.cover[child] / tree.cover[node]
    return out


class _Path:
    """Unique feature path; one-fractions and weights are per-sample vectors."""

    __slots__ = ("feature", "zero", "one", "pweight")

    def __init__(self, capacity, n_samples):
        self.feature = np.full(capacity, -1, dtype=np.intp)
        self.zero = np.zeros(capacity)
        self.one = np.zeros((capacity, n_samples))
        self.pweight = np.zeros((capacity, n_samples))

    def copy(self):
        p = _Path.__new__(_Path)
        p.feature, p.zero = self.feature.copy(), self.zero.copy()
        p.one, p.pweight = self.one.copy(), self.pweight.copy()
        return p

    def extend(self, d, zero, one, feature):
        self.feature[d], self.zero[d], self.one[d] = feature, zero, one
        pw = self.pweight
        pw[d] = 1.0 if d == 0 else 0.0
        for i in range(d - 1, -1, -1):
            pw[i + 1] += one * pw[i] * (i + 1) / (d + 1)
            pw[i] = zero * pw[i] * (d - i) / (d + 1)

    def unwind(self, d, k):
        one, zero = self.one[k], self.zero[k]
        hot = one != 0
        pw = self.pweight
        nxt = pw[d].copy()
        for i in range(d - 1, -1, -1):
            via_one = nxt * (d + 1) / (i + 1)
            via_zero = pw[i] * (d + 1) / (zero * (d - i))
            tmp = pw[i].copy()
            pw[i] = np.where(hot, via_one, via_zero)
            nxt = np.where(hot, tmp - pw[i] * zero * (d - i) / (d + 1), nxt)
        self.feature[k:d] = self.feature[k + 1:d + 1]
        self.zero[k:d] = self.zero[k + 1:d + 1]
        self.one[k:d] = self.one[k + 1:d + 1]

    def unwound_sum(self, d, k):
        one, zero = self.one[k], self.zero[k]
        hot = one != 0
        pw = self.pweight
        nxt = pw[d].copy()
        total = np.zeros_like(nxt)
        for i in range(d - 1, -1, -1):
            via_one = nxt * (d + 1) / (i + 1)
            via_zero = pw[i] * (d + 1) / (zero * (d - i))
            total += np.where(hot, via_one, via_zero)
            nxt = pw[i] - via_one * zero * (d - i) / (d + 1)
        return total


def _tree_shap_batch(tree: Tree, X: np.ndarray) -> np.ndarray:
    """Attributions of shape (n_samples, n_features, n_classes)."""
    _check_tree(tree)
    n = len(X)
    phi = np.zeros((n, X.shape[1], tree.n_classes))
    values = tree.leaf_values
    capacity = tree.max_depth + 2
    cover = tree.cover

    def recurse(node, d, path, zero, one, feature):
        path = path.copy()
        path.extend(d, zero, one, feature)
        if tree.is_leaf(node):
            for i in range(1, d + 1):
                w = path.unwound_sum(d, i) * (path.one[i] - path.zero[i])
                phi[:, path.feature[i], :] += w[:, None] * values[node][None, :]
            return
        split = tree.feature[node]
        goes_left = X[:, split] <= tree.threshold[node]
        in_zero, in_one = 1.0, np.ones(n)
        hits = np.flatnonzero(path.feature[1:d + 1] == split)
        if hits.size:
            k = int(hits[0]) + 1
            in_zero, in_one = path.zero[k], path.one[k].copy()
            path.unwind(d, k)
            d -= 1
        left, right = tree.children_left[node], tree.children_right[node]
        recurse(left, d + 1, path, cover[left] / cover[node] * in_zero, in_one * goes_left, split)
        recurse(right, d + 1, path, cover[right] / cover[node] * in_zero,
                in_one * ~goes_left, split)

    recurse(0, 0, _Path(capacity, n), 1.0, np.ones(n), -1)
    return phi


def _select(phi, class_id, squeeze):
    if class_id is not None:
        phi = phi[..., class_id]
    return phi[0] if squeeze else phi


def tree_shap(tree: Tree, x, class_id: int | None = None) -> np.ndarray:
    """SHAP values of one tree at ``x`` (1-D sample or 2-D batch).

    Returns ``(n_features, n_classes)`` per sample, or ``(n_features,)``
    when ``class_id`` (a column index of the tree's outputs) is given.
    """
    X = np.asarray(x, dtype=float)
    squeeze = X.ndim == 1
    X = np.atleast_2d(X)
    if X.shape[1] != tree.n_features:
        raise DataError(f"expected {tree.n_features} features, got {X.shape[1]}")
    return _select(_tree_shap_batch(tree, X), class_id, squeeze)


def conditional_value(tree: Tree, x, known) -> np.ndarray:
    """Tree output when only features in ``known`` are observed.

    Splits on unobserved features average both children by their covers.
    """
    values = tree.leaf_values

    def visit(node):
        if tree.is_leaf(node):
            return values[node]
        f = tree.feature[node]
        left, right = tree.children_left[node], tree.children_right[node]
        if f in known:
            return visit(left if x[f] <= tree.threshold[node] else right)
        cl, cr = tree.cover[left], tree.cover[right]
        return (cl * visit(left) + cr * visit(right)) / (cl + cr)

    return visit(0)


def brute_force_shap(tree: Tree, x, class_id: int | None = None) -> np.ndarray:
    """Shapley values by enumerating all 2^n coalitions of the n features."""
    _check_tree(tree)
    x = np.asarray(x, dtype=float)
    n = tree.n_features
    if n > MAX_BRUTE_FORCE_FEATURES:
        raise DomainError(f"brute force limited to {MAX_BRUTE_FORCE_FEATURES} features, got {n}")
    if x.shape != (n,):
        raise DataError(f"expected a single sample with {n} features")
    f = np.array([conditional_value(tree, x, {j for j in range(n) if mask >> j & 1})
                  for mask in range(1 << n)])
    size = np.array([bin(mask).count("1") for mask in range(1 << n)])
    weight = np.array([math.factorial(s) * math.factorial(n - s - 1) / math.factorial(n)
                       if s < n else 0.0 for s in size])
    phi = np.zeros((n, tree.n_classes))
    masks = np.arange(1 << n)
    for i in range(n):
        without = masks[(masks >> i & 1) == 0]
        phi[i] = (weight[without, None] * (f[without | 1 << i] - f[without])).sum(axis=0)
    return phi if class_id is None else phi[:, class_id]


@dataclass
class ShapMatrix:
    """Per-sample, per-feature, per-class attributions of a forest."""

    values: np.ndarray
    base_values: np.ndarray
    sample_index: np.ndarray
    classes: np.ndarray
    sample_labels: np.ndarray | None = None
    features: np.ndarray | None = None

    def output(self) -> np.ndarray:
        """Reconstructed model output: base + sum of attributions."""
        return self.base_values[None, :] + self.values.sum(axis=1)


def forest_shap(forest: RandomForestClassifier, samples, sample_index=None,
                sample_labels=None) -> ShapMatrix:
    """Average of per-tree attributions, matching the averaged probabilities."""
    X = np.atleast_2d(np.asarray(samples, dtype=float))
    if X.shape[1] != forest.n_features_in_:
        raise DataError(f"expected {forest.n_features_in_} features, got {X.shape[1]}")
    values = np.zeros((len(X), X.shape[1], forest.n_classes_))
    base = np.zeros(forest.n_classes_)
    for tree in forest.estimators_:
        values += _tree_shap_batch(tree, X)
        base += expected_value(tree)
    n_trees = len(forest.estimators_)
    index = np.arange(len(X)) if sample_index is None else np.asarray(sample_index)
    labels = None if sample_labels is None else np.asarray(sample_labels)
    return ShapMatrix(values / n_trees, base / n_trees, index, np.asarray(forest.classes_),
                      labels, X)


@dataclass
class RankedFeature:
    feature: int
    frequency_hz: float
    mean: float
    variance: float
    mean_abs: float


def _class_column(shap: ShapMatrix, class_id: int) -> int:
    hits = np.flatnonzero(shap.classes == class_id)
    if not hits.size:
        raise DataError(f"class {class_id} is not an output of the model")
    return int(hits[0])


def _class_rows(shap: ShapMatrix, class_id: int) -> np.ndarray:
    if shap.sample_labels is None:
        return np.arange(len(shap.values))
    rows = np.flatnonzero(shap.sample_labels == class_id)
    if not rows.size:
        raise DataError(f"class {class_id} has no explained samples")
    return rows


def rank_features(shap: ShapMatrix, grid: FrequencyGrid, class_id: int,
                  top: int | None = 10) -> list[RankedFeature]:
    """Features of one class ranked by mean |phi| over that class's samples.

    Ties keep feature-index order.
    """
    phi = shap.values[_class_rows(shap, class_id), :, _class_column(shap, class_id)]
    mean_abs = np.abs(phi).mean(axis=0)
    order = np.argsort(-mean_abs, kind="stable")[:top]
    mean, var = phi.mean(axis=0), phi.var(axis=0)
    freqs = grid.frequencies
    return [RankedFeature(int(j), float(freqs[j]), float(mean[j]), float(var[j]),
                          float(mean_abs[j])) for j in order]


def summarize(shap: ShapMatrix, grid: FrequencyGrid, top: int = 10) -> dict[int, list[RankedFeature]]:
    """Top-``top`` ranking for every class present among the explained samples."""
    if shap.values.size == 0:
        raise DataError("empty SHAP matrix")
    if shap.sample_labels is None:
        wanted = shap.classes
    else:
        wanted = [c for c in shap.classes if np.any(shap.sample_labels == c)]
    return {int(c): rank_features(shap, grid, int(c), top) for c in wanted}


def write_summary_csv(ranking: dict[int, list[RankedFeature]], path, top: int = 1) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["class_id", "rank", "feature_index", "frequency_hz", "mean", "variance",
                    "mean_abs"])
        for cid, feats in sorted(ranking.items()):
            for r, f in enumerate(feats[:top], start=1):
                w.writerow([cid, r, f.feature, f"{f.frequency_hz:.6g}", f"{f.mean:.9e}",
                            f"{f.variance:.9e}", f"{f.mean_abs:.9e}"])


def export_beeswarm(shap: ShapMatrix, grid: FrequencyGrid, class_id: int,
                    top: int = 20) -> list[dict]:
    """Rows ``(sample_id, frequency_hz, phi, feature_value)`` for the top features.

    Positive ``phi`` pushes the prediction towards ``class_id``.
    """
    if shap.features is None:
        raise DataError("SHAP matrix carries no feature values")
    rows = _class_rows(shap, class_id)
    col = _class_column(shap, class_id)
    freqs = grid.frequencies
    out = []
    for rf in rank_features(shap, grid, class_id, top):
        for r in rows:
            out.append({"sample_id": int(shap.sample_index[r]), "feature_index": rf.feature,
                        "frequency_hz": float(freqs[rf.feature]),
                        "phi": float(shap.values[r, rf.feature, col]),
                        "feature_value": float(shap.features[r, rf.feature])})
    return out


def write_beeswarm_csv(rows: list[dict], path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["sample_id", "feature_index", "frequency_hz", "phi", "feature_value"])
        for r in rows:
            w.writerow([r["sample_id"], r["feature_index"], f"{r['frequency_hz']:.6g}",
                        repr(r["phi"]), repr(r["feature_value"])])


def deviation_profile(rows, labels, class_id: int, genuine_id: int = 0) -> np.ndarray:
    """Mean |S11 - genuine mean| of one class's raw traces, per frequency."""
    rows = np.asarray(rows, dtype=float)
    labels = np.asarray(labels)
    if not np.any(labels == class_id) or not np.any(labels == genuine_id):
        raise DataError(f"need raw traces of classes {genuine_id} and {class_id}")
    reference = rows[labels == genuine_id].mean(axis=0)
    return np.abs(rows[labels == class_id] - reference).mean(axis=0)


def concordance(ranking: dict[int, list[RankedFeature]], rows, labels,
                quantile: float = 0.9, genuine_id: int = 0) -> dict[int, dict]:
    """For each tampered class, do its top attributed frequencies sit where its signature moves?

    A class concords when one of its ranked features lies in the top
    ``1 - quantile`` band of its :func:`deviation_profile`.
    """
    out = {}
    for cid, feats in sorted(ranking.items()):
        if cid == genuine_id:
            continue
        dev = deviation_profile(rows, labels, cid, genuine_id)
        cut = np.quantile(dev, quantile)
        hits = [f.feature for f in feats if dev[f.feature] >= cut]
        out[cid] = {"concordant": bool(hits), "hits": hits,
                    "threshold": float(cut), "peak_feature": int(np.argmax(dev))}
    return out
