import json

import numpy as np
import pytest
from sklearn.base import clone
from sklearn.utils.estimator_checks import check_get_params_invariance, check_estimators_dtypes

from waldo.exceptions import DataError
from waldo.forest import RandomForestClassifier, Tree, best_split, gini, grow_tree, predict

X_BLOBS = np.vstack([np.random.default_rng(0).normal(m, 0.3, size=(30, 3)) for m in (0, 2, 4)])
Y_BLOBS = np.repeat([0, 1, 2], 30)


def test_gini_values():
    assert gini([4, 4]) == 0.5
    assert gini([5, 0]) == 0.0
    assert gini([1, 1, 1, 1]) == 0.75
    with pytest.raises(ValueError):
        gini([0, 0])


def test_best_split_midpoint_and_ties():
    assert best_split([[1], [2], [10], [11]], [0, 0, 1, 1]) == (0, 6.0)
    assert best_split([[1], [1]], [0, 1]) is None
    X = [[1, 1], [2, 2], [3, 3], [4, 4]]
    assert best_split(X, [0, 0, 1, 1]) == (0, 2.5)
    assert best_split(X, [0, 0, 1, 1], candidate_features=[1]) == (1, 2.5)


def test_weights_act_as_duplicates():
    X = np.array([[0.0], [1.0], [2.0], [3.0]])
    y = np.array([0, 1, 1, 0])
    w = np.array([3, 1, 0, 2])
    weighted = grow_tree(X, y, 2, w)
    dup = grow_tree(np.repeat(X, w, axis=0), np.repeat(y, w), 2)
    assert weighted == dup
    weighted.check_covers()
    assert weighted.cover[0] == 6


def test_unpruned_tree_fits_training_data():
    tree = grow_tree(X_BLOBS, Y_BLOBS, 3)
    assert np.array_equal(tree.predict_proba(X_BLOBS).argmax(axis=1), Y_BLOBS)
    assert np.all(tree.leaf_values[tree.apply(X_BLOBS)].max(axis=1) == 1.0)


def test_max_depth_limits_tree():
    tree = grow_tree(X_BLOBS, Y_BLOBS, 3, max_depth=1)
    assert tree.max_depth == 1 and tree.node_count == 3


def test_forest_learns_blobs_and_is_deterministic():
    rf = RandomForestClassifier(n_estimators=15, random_state=4).fit(X_BLOBS, Y_BLOBS)
    assert (rf.predict(X_BLOBS) == Y_BLOBS).mean() >= 0.98
    rf2 = clone(rf).fit(X_BLOBS, Y_BLOBS)
    rf3 = RandomForestClassifier(n_estimators=15, random_state=4, n_jobs=2).fit(X_BLOBS, Y_BLOBS)
    assert rf.to_dict() == rf2.to_dict()
    assert rf.to_dict()["trees"] == rf3.to_dict()["trees"]
    proba = rf.predict_proba(X_BLOBS)
    np.testing.assert_allclose(proba.sum(axis=1), 1.0)


def test_soft_vote_is_mean_of_trees():
    rf = RandomForestClassifier(n_estimators=5).fit(X_BLOBS, Y_BLOBS)
    mean = np.mean([t.predict_proba(X_BLOBS) for t in rf.estimators_], axis=0)
    np.testing.assert_allclose(rf.predict_proba(X_BLOBS), mean, rtol=0, atol=1e-15)


def test_ties_go_to_lowest_class():
    rf = RandomForestClassifier(n_estimators=2).fit([[0.0], [1.0]], [3, 5])
    rf.estimators_[0].value[:] = [[1.0, 0.0]]
    rf.estimators_[1].value[:] = [[0.0, 1.0]]
    assert rf.predict([[0.5]]).tolist() == [3]


def test_serialization_roundtrip():
    rf = RandomForestClassifier(n_estimators=4, random_state=1).fit(X_BLOBS, Y_BLOBS)
    text = json.dumps(rf.to_dict())
    back = RandomForestClassifier.from_dict(json.loads(text))
    assert json.dumps(back.to_dict()) == text
    assert all(a == b for a, b in zip(rf.estimators_, back.estimators_))
    np.testing.assert_array_equal(back.predict_proba(X_BLOBS), rf.predict_proba(X_BLOBS))
    with pytest.raises(DataError):
        RandomForestClassifier.from_dict({"format": "other"})


def test_single_class_and_dimension_errors():
    with pytest.raises(DataError):
        RandomForestClassifier(n_estimators=2).fit([[0.0], [1.0]], [1, 1])
    rf = RandomForestClassifier(n_estimators=2).fit(X_BLOBS, Y_BLOBS)
    with pytest.raises(DataError):
        predict(rf, np.zeros(5))
    assert predict(rf, X_BLOBS[0]) == 0


def test_depth_range_and_sklearn_contract():
    rf = RandomForestClassifier(n_estimators=3)
    assert rf.get_params()["n_estimators"] == 3
    check_get_params_invariance("rf", rf)
    check_estimators_dtypes("rf", rf)
    lo, hi = rf.fit(X_BLOBS, Y_BLOBS).depth_range()
    assert 1 <= lo <= hi


def test_covers_conserved_in_fitted_trees():
    rf = RandomForestClassifier(n_estimators=5).fit(X_BLOBS, Y_BLOBS)
    for t in rf.estimators_:
        t.check_covers()
        assert t.cover[0] == len(Y_BLOBS)


def test_corrupt_cover_detected():
    tree = grow_tree(X_BLOBS, Y_BLOBS, 3)
    tree.cover[1] += 1
    with pytest.raises(DataError):
        tree.check_covers()
    assert isinstance(tree, Tree)
