"""Random-forest classifier grown from scratch with Gini splits.

Trees are stored as flat node arrays in depth-first preorder, in the manner of
scikit-learn's ``tree_`` objects. Every node keeps its weighted class counts
and its cover (the bootstrap weight of training samples reaching it), which
the path-dependent SHAP explainer needs.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin
from sklearn.utils.multiclass import check_classification_targets
from sklearn.utils.validation import check_is_fitted, validate_data

from .exceptions import DataError

TREE_LEAF = -1
FORMAT = "waldo-forest"
FORMAT_VERSION = 1


def gini(counts) -> float:
    """Gini impurity ``1 - sum(p_i^2)`` of a (weighted) class-count vector."""
    counts = np.asarray(counts, dtype=float)
    if np.any(counts < 0):
        raise ValueError("class counts must be non-negative")
    total = counts.sum()
    if total <= 0:
        raise ValueError("gini of an empty node is undefined")
    p = counts / total
    return float(1.0 - np.dot(p, p))


@dataclass(eq=False)
class Tree:
    children_left: np.ndarray
    children_right: np.ndarray
    feature: np.ndarray
    threshold: np.ndarray
    value: np.ndarray
    cover: np.ndarray | None
    n_features: int

    @property
    def node_count(self) -> int:
        return len(self.children_left)

    @property
    def n_classes(self) -> int:
        return self.value.shape[1]

    def is_leaf(self, node: int) -> bool:
        return self.children_left[node] == TREE_LEAF

    @property
    def leaf_values(self) -> np.ndarray:
        """Per-node normalized class distribution."""
        return self.value / self.value.sum(axis=1, keepdims=True)

    def depths(self) -> np.ndarray:
        depth = np.zeros(self.node_count, dtype=int)
        for node in range(self.node_count):
            if not self.is_leaf(node):
                depth[self.children_left[node]] = depth[node] + 1
                depth[self.children_right[node]] = depth[node] + 1
        return depth

    @property
    def max_depth(self) -> int:
        return int(self.depths().max())

    def apply(self, X) -> np.ndarray:
        """Leaf index reached by every row of ``X``."""
        X = np.asarray(X, dtype=float)
        node = np.zeros(len(X), dtype=np.intp)
        active = np.flatnonzero(self.children_left[node] != TREE_LEAF)
        while active.size:
            nd = node[active]
            left = X[active, self.feature[nd]] <= self.threshold[nd]
            node[active] = np.where(left, self.children_left[nd], self.children_right[nd])
            active = active[self.children_left[node[active]] != TREE_LEAF]
        return node

    def predict_proba(self, X) -> np.ndarray:
        return self.leaf_values[self.apply(X)]

    def used_features(self) -> set[int]:
        return {int(f) for f, l in zip(self.feature, self.children_left) if l != TREE_LEAF}

    def check_covers(self, rtol: float = 1e-9) -> None:
        """Raise if covers are missing or not conserved at a split."""
        if self.cover is None or len(self.cover) != self.node_count:
            raise DataError("tree has no node covers")
        if not np.all(np.isfinite(self.cover)) or np.any(self.cover <= 0):
            raise DataError("node covers must be finite and positive")
        for node in np.flatnonzero(self.children_left != TREE_LEAF):
            kids = self.cover[self.children_left[node]] + self.cover[self.children_right[node]]
            if not math.isclose(kids, self.cover[node], rel_tol=rtol):
                raise DataError(f"cover not conserved at node {node}")

    def __eq__(self, other):
        if not isinstance(other, Tree):
            return NotImplemented
        fields = ("children_left", "children_right", "feature", "threshold", "value", "cover")
        return self.n_features == other.n_features and all(
            np.array_equal(getattr(self, f), getattr(other, f)) for f in fields)

    def to_dict(self) -> dict:
        def node(i):
            d = {"cover": float(self.cover[i])}
            if self.is_leaf(i):
                d["counts"] = self.value[i].tolist()
            else:
                d["feature"] = int(self.feature[i])
                d["threshold"] = float(self.threshold[i])
                d["left"] = node(self.children_left[i])
                d["right"] = node(self.children_right[i])
            return d

        return {"n_features": self.n_features, "root": node(0)}

    @classmethod
    def from_dict(cls, d: dict, n_classes: int) -> "Tree":
        b = _Builder(n_classes)

        def walk(nd):
            i = b.add(nd.get("counts", np.zeros(n_classes)), nd["cover"])
            if "counts" not in nd:
                b.feature[i], b.threshold[i] = nd["feature"], nd["threshold"]
                b.left[i] = walk(nd["left"])
                b.right[i] = walk(nd["right"])
            return i

        walk(d["root"])
        tree = b.build(d["n_features"])
        # internal-node counts are not serialized; rebuild them bottom-up
        for i in range(tree.node_count - 1, -1, -1):
            if not tree.is_leaf(i):
                tree.value[i] = tree.value[tree.children_left[i]] + tree.value[tree.children_right[i]]
        return tree


class _Builder:
    def __init__(self, n_classes):
        self.n_classes = n_classes
        self.left, self.right, self.feature, self.threshold = [], [], [], []
        self.value, self.cover = [], []

    def add(self, counts, cover):
        self.left.append(TREE_LEAF)
        self.right.append(TREE_LEAF)
        self.feature.append(-2)
        self.threshold.append(-2.0)
        self.value.append(np.asarray(counts, dtype=float))
        self.cover.append(float(cover))
        return len(self.left) - 1

    def build(self, n_features):
        return Tree(np.array(self.left, dtype=np.intp), np.array(self.right, dtype=np.intp),
                    np.array(self.feature, dtype=np.intp), np.array(self.threshold, dtype=float),
                    np.array(self.value, dtype=float).reshape(-1, self.n_classes),
                    np.array(self.cover, dtype=float), n_features)


def _best_split(X, y, w, features, n_classes, min_leaf=1.0):
    """Best (feature, threshold, gain) over ``features`` or None.

    ``gain`` is the cover-weighted impurity decrease
    ``n*G(parent) - nL*G(left) - nR*G(right)``. Near-ties within a relative
    1e-12 go to the lower feature index, then the lower threshold.
    """
    features = np.asarray(features, dtype=np.intp)
    if len(y) < 2 or features.size == 0:
        return None
    onehot = np.zeros((len(y), n_classes))
    onehot[np.arange(len(y)), y] = w
    total = onehot.sum(axis=0)
    n = total.sum()
    parent = np.dot(total, total) / n

    Xs = X[:, features]
    order = np.argsort(Xs, axis=0, kind="stable")
    xs = np.take_along_axis(Xs, order, axis=0)
    left = np.cumsum(onehot[order], axis=0)[:-1]
    right = total - left
    nl = left.sum(axis=-1)
    nr = n - nl
    valid = (xs[1:] > xs[:-1]) & (nl >= min_leaf) & (nr >= min_leaf)
    if not valid.any():
        return None
    with np.errstate(divide="ignore", invalid="ignore"):
        score = (left * left).sum(-1) / nl + (right * right).sum(-1) / nr
    score = np.where(valid, score, -np.inf)
    best = score.max()
    gain = best - parent
    if not gain > 1e-10 * n:
        return None
    tied = score >= best - 1e-12 * abs(best)
    col = int(np.argmax(tied.any(axis=0)))
    pos = int(np.argmax(tied[:, col]))
    lo, hi = xs[pos, col], xs[pos + 1, col]
    thr = lo + (hi - lo) / 2
    if not lo <= thr < hi:
        thr = lo
    return int(features[col]), float(thr), float(gain)


def best_split(rows, labels, candidate_features=None, sample_weight=None):
    """Gini split maximizing impurity decrease; ``None`` if nothing improves.

    Thresholds are midpoints between consecutive distinct values and rows
    with ``x <= threshold`` go left.
    """
    X = np.asarray(rows, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    classes, y = np.unique(np.asarray(labels), return_inverse=True)
    w = np.ones(len(y)) if sample_weight is None else np.asarray(sample_weight, dtype=float)
    feats = np.arange(X.shape[1]) if candidate_features is None else np.sort(candidate_features)
    found = _best_split(X, y, w, feats, len(classes))
    return None if found is None else found[:2]


def _resolve_max_features(max_features, n_features):
    if max_features is None:
        return n_features
    if max_features == "sqrt":
        return max(1, math.ceil(math.sqrt(n_features)))
    if isinstance(max_features, float):
        return max(1, math.ceil(max_features * n_features))
    return max(1, min(int(max_features), n_features))


def grow_tree(X, y, n_classes, sample_weight=None, max_features=None, max_depth=None,
              min_samples_leaf=1, rng=None) -> Tree:
    """Grow one tree to purity (or ``max_depth``) on weighted rows.

    Rows with zero weight are ignored. If none of a node's sampled features
    yields an improving split, the remaining features are tried before the
    node is closed as a leaf.
    """
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=np.intp)
    w = np.ones(len(y)) if sample_weight is None else np.asarray(sample_weight, dtype=float)
    rng = np.random.default_rng(rng)
    n_features = X.shape[1]
    m = _resolve_max_features(max_features, n_features)
    keep = w > 0
    X, y, w = X[keep], y[keep], w[keep]

    b = _Builder(n_classes)
    stack = [(np.arange(len(y)), 0, None, False)]
    while stack:
        idx, depth, parent, is_left = stack.pop()
        counts = np.bincount(y[idx], weights=w[idx], minlength=n_classes)
        node = b.add(counts, counts.sum())
        if parent is not None:
            (b.left if is_left else b.right)[parent] = node
        if np.count_nonzero(counts) < 2 or (max_depth is not None and depth >= max_depth):
            continue
        feats = np.sort(rng.choice(n_features, size=m, replace=False))
        found = _best_split(X[idx], y[idx], w[idx], feats, n_classes, min_samples_leaf)
        if found is None and m < n_features:
            rest = np.setdiff1d(np.arange(n_features), feats)
            found = _best_split(X[idx], y[idx], w[idx], rest, n_classes, min_samples_leaf)
        if found is None:
            continue
        f, thr, _ = found
        b.feature[node], b.threshold[node] = f, thr
        go_left = X[idx, f] <= thr
        # right pushed first so the left subtree is numbered next (preorder)
        stack.append((idx[~go_left], depth + 1, node, False))
        stack.append((idx[go_left], depth + 1, node, True))
    return b.build(n_features)


def _fit_one(X, y, n_classes, params, seed, index):
    rng = np.random.default_rng([seed, index])
    n = len(y)
    if params["bootstrap"]:
        weight = np.bincount(rng.integers(0, n, n), minlength=n).astype(float)
    else:
        weight = np.ones(n)
    return grow_tree(X, y, n_classes, weight, params["max_features"], params["max_depth"],
                     params["min_samples_leaf"], rng)


class RandomForestClassifier(ClassifierMixin, BaseEstimator):
    """Bagged Gini trees whose class probabilities are averaged (soft vote).

    Parameters
    ----------
    n_estimators : int, default=200
    max_features : {"sqrt"}, int, float or None, default="sqrt"
        Features sampled per node. ``"sqrt"`` means ``ceil(sqrt(n_features))``.
    max_depth : int or None, default=None
    min_samples_leaf : int, default=1
        Minimum bootstrap weight on each side of a split.
    bootstrap : bool, default=True
    random_state : int, default=0
        Tree ``i`` draws from ``default_rng([random_state, i])``, so results do
        not depend on ``n_jobs``.
    n_jobs : int or None, default=None
    """

    def __init__(self, n_estimators=200, max_features="sqrt", max_depth=None,
                 min_samples_leaf=1, bootstrap=True, random_state=0, n_jobs=None):
        self.n_estimators = n_estimators
        self.max_features = max_features
        self.max_depth = max_depth
        self.min_samples_leaf = min_samples_leaf
        self.bootstrap = bootstrap
        self.random_state = random_state
        self.n_jobs = n_jobs

    def fit(self, X, y):
        X, y = validate_data(self, X, y, dtype=np.float64)
        check_classification_targets(y)
        if self.n_estimators < 1:
            raise ValueError("n_estimators must be >= 1")
        self.classes_, y_enc = np.unique(y, return_inverse=True)
        if len(self.classes_) < 2:
            raise DataError("need at least two classes to train")
        params = {"bootstrap": self.bootstrap, "max_features": self.max_features,
                  "max_depth": self.max_depth, "min_samples_leaf": self.min_samples_leaf}
        seed = int(self.random_state)
        k = len(self.classes_)
        if self.n_jobs in (None, 1):
            trees = [_fit_one(X, y_enc, k, params, seed, i) for i in range(self.n_estimators)]
        else:
            from joblib import Parallel, delayed
            trees = Parallel(n_jobs=self.n_jobs)(
                delayed(_fit_one)(X, y_enc, k, params, seed, i) for i in range(self.n_estimators))
        self.estimators_ = trees
        return self

    @property
    def n_classes_(self) -> int:
        return len(self.classes_)

    def predict_proba(self, X):
        check_is_fitted(self)
        X = validate_data(self, X, dtype=np.float64, reset=False)
        proba = np.zeros((len(X), self.n_classes_))
        for tree in self.estimators_:
            proba += tree.predict_proba(X)
        return proba / len(self.estimators_)

    def predict(self, X):
        # argmax takes the first maximum, i.e. the lowest class id on ties
        return self.classes_[np.argmax(self.predict_proba(X), axis=1)]

    def depth_range(self) -> tuple[int, int]:
        check_is_fitted(self)
        depths = [t.max_depth for t in self.estimators_]
        return min(depths), max(depths)

    def to_dict(self) -> dict:
        check_is_fitted(self)
        return {
            "format": FORMAT,
            "version": FORMAT_VERSION,
            "params": self.get_params(),
            "classes": self.classes_.tolist(),
            "n_features": int(self.n_features_in_),
            "trees": [t.to_dict() for t in self.estimators_],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "RandomForestClassifier":
        if d.get("format") != FORMAT or d.get("version") != FORMAT_VERSION:
            raise DataError(f"not a {FORMAT} v{FORMAT_VERSION} document")
        self = cls(**d["params"])
        self.classes_ = np.asarray(d["classes"])
        self.n_features_in_ = int(d["n_features"])
        self.estimators_ = [Tree.from_dict(t, len(self.classes_)) for t in d["trees"]]
        return self


def predict_proba(forest: RandomForestClassifier, x) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if x.ndim == 1:
        if x.shape[0] != forest.n_features_in_:
            raise DataError(f"expected {forest.n_features_in_} features, got {x.shape[0]}")
        return forest.predict_proba(x[None, :])[0]
    return forest.predict_proba(x)


def predict(forest: RandomForestClassifier, x):
    p = predict_proba(forest, x)
    return forest.classes_[np.argmax(p, axis=-1)]
