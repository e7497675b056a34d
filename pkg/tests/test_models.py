import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from txadv import models
from txadv.errors import BadLabel, DegenerateK, NotFitted, SingleClassDataset, WidthMismatch
from txadv.models import DecisionTree, KNearestNeighbors, RandomForest, SoftmaxSurrogate, input_gradient
from txadv.models.tree import best_split

SIX_X = np.array([[0.0, 1.0], [1.0, 3.0], [2.0, 0.0], [3.0, 2.0], [4.0, 5.0], [5.0, 4.0]])
SIX_Y = np.array([0, 0, 1, 0, 1, 1])


# --------------------------------------------------------------------------
# naive oracles


def gini(labels, k):
    if not labels:
        return 0.0
    return 1.0 - sum((labels.count(c) / len(labels)) ** 2 for c in range(k))


def naive_tree(X, y, k, depth, max_depth, min_leaf):
    """Plain recursive CART over python lists."""
    labels = list(y)
    dist = [labels.count(c) / len(labels) for c in range(k)]
    if depth >= max_depth or len(labels) < 2 * min_leaf or max(dist) == 1.0:
        return ("leaf", dist)
    parent = gini(labels, k)
    best = None
    for j in range(len(X[0])):
        values = sorted(set(row[j] for row in X))
        for a, b in zip(values, values[1:]):
            t = (a + b) / 2
            left = [labels[i] for i, row in enumerate(X) if row[j] <= t]
            right = [labels[i] for i, row in enumerate(X) if row[j] > t]
            if len(left) < min_leaf or len(right) < min_leaf:
                continue
            w = (len(left) * gini(left, k) + len(right) * gini(right, k)) / len(labels)
            if w < parent - 1e-12 and (best is None or w < best[0] - 1e-12):
                best = (w, j, t)
    if best is None:
        return ("leaf", dist)
    _, j, t = best
    li = [i for i, row in enumerate(X) if row[j] <= t]
    ri = [i for i, row in enumerate(X) if row[j] > t]
    return (
        "split",
        j,
        t,
        naive_tree([X[i] for i in li], [y[i] for i in li], k, depth + 1, max_depth, min_leaf),
        naive_tree([X[i] for i in ri], [y[i] for i in ri], k, depth + 1, max_depth, min_leaf),
    )


def naive_tree_predict(node, row):
    while node[0] == "split":
        node = node[3] if row[node[1]] <= node[2] else node[4]
    dist = node[1]
    return dist.index(max(dist))


def naive_knn(Xtr, ytr, q, k, n_classes):
    order = sorted(range(len(Xtr)), key=lambda i: (sum((a - b) ** 2 for a, b in zip(Xtr[i], q)), ytr[i]))
    votes = [ytr[i] for i in order[:k]]
    counts = [votes.count(c) for c in range(n_classes)]
    return counts.index(max(counts))


def sigmoid(z):
    return 1.0 / (1.0 + math.exp(-z))


# --------------------------------------------------------------------------
# decision tree


def test_dt_four_point_fixture():
    # class 1 exactly when x0 > 1.5; one split separates the data
    X = np.array([[0.0, 5.0], [1.0, 3.0], [2.0, 4.0], [3.0, 1.0]])
    y = np.array([0, 0, 1, 1])
    tree = DecisionTree(min_samples_leaf=1).fit(X, y)
    assert tree.score(X, y) == 1.0
    assert tree.depth_ <= 2
    assert tree.feature_[0] == 0 and tree.threshold_[0] == 1.5


def test_dt_matches_naive_oracle():
    tree = DecisionTree(min_samples_leaf=1).fit(SIX_X, SIX_Y)
    oracle = naive_tree(SIX_X.tolist(), SIX_Y.tolist(), 2, 0, 16, 1)
    grid = np.array([[a, b] for a in np.linspace(-1, 6, 15) for b in np.linspace(-1, 6, 15)])
    assert tree.predict(grid).tolist() == [naive_tree_predict(oracle, r) for r in grid.tolist()]


def test_dt_matches_naive_oracle_random(rng):
    for trial in range(5):
        X = rng.integers(0, 6, (30, 3)).astype(float)
        y = rng.integers(0, 3, 30)
        y[:3] = [0, 1, 2]
        tree = DecisionTree(max_depth=4, min_samples_leaf=2).fit(X, y, n_classes=3)
        oracle = naive_tree(X.tolist(), y.tolist(), 3, 0, 4, 2)
        Q = rng.integers(-1, 7, (50, 3)).astype(float)
        assert tree.predict(Q).tolist() == [naive_tree_predict(oracle, r) for r in Q.tolist()]


def test_dt_leaf_frequencies():
    X = np.zeros((4, 1))
    y = np.array([0, 0, 0, 1])
    tree = DecisionTree().fit(X, y)
    assert np.allclose(tree.predict_proba(np.zeros((1, 1))), [[0.75, 0.25]])


def test_dt_thresholds_within_train_range(multi_encoded):
    X, y = multi_encoded.train.matrix, multi_encoded.train.labels
    tree = DecisionTree().fit(X, y)
    internal = tree.feature_ >= 0
    for f, t in zip(tree.feature_[internal], tree.threshold_[internal]):
        assert X[:, f].min() <= t <= X[:, f].max()
    assert np.allclose(tree.value_.sum(axis=1), 1.0, atol=1e-9)


def test_best_split_never_worsens(rng):
    for _ in range(20):
        X = rng.normal(size=(25, 3))
        y = rng.integers(0, 2, 25)
        onehot = np.eye(2)[y]
        idx = np.arange(25)
        split = best_split(X, onehot, idx, range(3), 1)
        parent = gini(y.tolist(), 2)
        if split is not None:
            assert split[2] < parent


def test_best_split_tie_breaks_low_feature():
    # both features separate the classes perfectly; feature 0 wins
    X = np.array([[0.0, 0.0], [1.0, 1.0], [2.0, 2.0], [3.0, 3.0]])
    onehot = np.eye(2)[[0, 0, 1, 1]]
    assert best_split(X, onehot, np.arange(4), range(2), 1)[:2] == (0, 1.5)


# --------------------------------------------------------------------------
# random forest


def test_rf_single_tree_equals_dt(multi_encoded):
    X, y = multi_encoded.train.matrix, multi_encoded.train.labels
    rf = RandomForest(n_trees=1, bootstrap=False, max_features=None, seed=5).fit(X, y)
    dt = DecisionTree(seed=5).fit(X, y)
    Q = multi_encoded.test.matrix
    assert np.array_equal(rf.predict(Q), dt.predict(Q))
    assert np.array_equal(rf.predict_proba(Q), dt.predict_proba(Q))


def test_rf_averages_tree_probabilities():
    a = DecisionTree(min_samples_leaf=1).fit(np.array([[0.0], [1.0]]), np.array([0, 1]))
    b = DecisionTree().fit(np.array([[0.0], [0.0]]), np.array([0, 1]))
    rf = RandomForest(n_trees=2)
    rf.trees_, rf.n_classes, rf.n_features = (a, b), 2, 1
    assert np.allclose(rf.predict_proba(np.array([[0.0]])), [[0.75, 0.25]])


def test_rf_tie_goes_to_smallest_class():
    a = DecisionTree(min_samples_leaf=1).fit(np.array([[0.0], [1.0]]), np.array([0, 1]))
    b = DecisionTree(min_samples_leaf=1).fit(np.array([[0.0], [1.0]]), np.array([1, 0]))
    rf = RandomForest(n_trees=2)
    rf.trees_, rf.n_classes, rf.n_features = (a, b), 2, 1
    assert rf.predict(np.array([[0.0], [1.0]])).tolist() == [0, 0]


def test_rf_deterministic_and_parallel_equal(binary_encoded):
    X, y = binary_encoded.train.matrix, binary_encoded.train.labels
    a = RandomForest(n_trees=10, seed=3).fit(X, y)
    b = RandomForest(n_trees=10, seed=3, n_jobs=4).fit(X, y)
    Q = binary_encoded.test.matrix
    assert np.array_equal(a.predict_proba(Q), b.predict_proba(Q))


def test_rf_not_worse_than_single_tree():
    from txadv.dataset import synthesize
    from txadv.preprocess import fit_transform

    diffs = []
    for seed in range(3):
        enc = fit_transform(synthesize("binary", 800, {0: 0.7, 1: 0.3}, 0.7, seed), seed)
        X, y, Q, t = enc.train.matrix, enc.train.labels, enc.test.matrix, enc.test.labels
        single = RandomForest(n_trees=1, seed=seed).fit(X, y).score(Q, t)
        many = RandomForest(n_trees=40, seed=seed).fit(X, y).score(Q, t)
        diffs.append(many - single)
    assert np.mean(diffs) >= 0


# --------------------------------------------------------------------------
# knn


def test_knn_k1_train_accuracy(binary_encoded):
    X = np.unique(binary_encoded.train.matrix, axis=0)
    y = np.arange(len(X)) % 2
    assert KNearestNeighbors(k=1).fit(X, y).score(X, y) == 1.0


def test_knn_single_point():
    m = KNearestNeighbors(k=1)
    m.fit(np.array([[1.0, 2.0], [5.0, 5.0]]), np.array([1, 0]))
    assert m.predict(np.array([[1.0, 2.0]])).tolist() == [1]


def test_knn_matches_naive_oracle(rng):
    X = rng.normal(size=(40, 3)).round(1)
    y = rng.integers(0, 3, 40)
    y[:3] = [0, 1, 2]
    Q = rng.normal(size=(30, 3)).round(1)
    for k in (1, 3, 4, 7):
        m = KNearestNeighbors(k=k).fit(X, y)
        assert m.predict(Q).tolist() == [naive_knn(X.tolist(), y.tolist(), q, k, 3) for q in Q.tolist()]


def test_knn_six_point_oracle():
    m = KNearestNeighbors(k=3).fit(SIX_X, SIX_Y)
    Q = np.array([[2.5, 2.5], [0.0, 0.0], [4.5, 4.5]])
    assert m.predict(Q).tolist() == [naive_knn(SIX_X.tolist(), SIX_Y.tolist(), q, 3, 2) for q in Q.tolist()]


def test_knn_degenerate_k():
    with pytest.raises(DegenerateK):
        KNearestNeighbors(k=0)
    with pytest.raises(DegenerateK):
        KNearestNeighbors(k=5).fit(SIX_X[:4], SIX_Y[:4])


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**31), st.integers(1, 6))
def test_knn_permutation_invariance(seed, k):
    rng = np.random.default_rng(seed)
    X = rng.integers(0, 4, (20, 2)).astype(float)  # plenty of distance ties
    y = rng.integers(0, 2, 20)
    y[:2] = [0, 1]
    perm = rng.permutation(20)
    Q = rng.integers(0, 4, (15, 2)).astype(float)
    a = KNearestNeighbors(k=k).fit(X, y).predict(Q)
    b = KNearestNeighbors(k=k).fit(X[perm], y[perm]).predict(Q)
    assert np.array_equal(a, b)


# --------------------------------------------------------------------------
# shared contract


@pytest.mark.parametrize("kind", ["rf", "dt", "knn", "surrogate"])
def test_empty_and_width(kind):
    m = models.fit(kind, SIX_X, SIX_Y, **({"n_trees": 3} if kind == "rf" else {"k": 1} if kind == "knn" else {}))
    assert m.predict(np.zeros((0, 2))).shape == (0,)
    with pytest.raises(WidthMismatch):
        m.predict(np.zeros((1, 3)))
    P = m.predict_proba(SIX_X)
    assert np.allclose(P.sum(axis=1), 1.0, atol=1e-9)


@pytest.mark.parametrize("kind", ["rf", "dt", "knn", "surrogate"])
def test_single_class_rejected(kind):
    with pytest.raises(SingleClassDataset):
        models.fit(kind, SIX_X, np.zeros(6, dtype=int))


def test_not_fitted():
    with pytest.raises(NotFitted):
        DecisionTree().predict(SIX_X)


@pytest.mark.parametrize("kind", ["rf", "dt", "knn", "surrogate"])
def test_save_load_round_trip(kind, tmp_path, binary_encoded):
    X, y = binary_encoded.train.matrix, binary_encoded.train.labels
    params = {"n_trees": 5} if kind == "rf" else {"epochs": 20} if kind == "surrogate" else {}
    m = models.fit(kind, X, y, **params)
    path = tmp_path / "m.json"
    models.save(m, path)
    back = models.load(path)
    Q = binary_encoded.test.matrix
    assert np.array_equal(back.predict_proba(Q), m.predict_proba(Q))


def test_fit_is_deterministic(binary_encoded):
    X, y = binary_encoded.train.matrix, binary_encoded.train.labels
    a = models.to_json(models.fit("rf", X, y, n_trees=5, seed=1))
    b = models.to_json(models.fit("rf", X, y, n_trees=5, seed=1))
    assert a == b


def test_trained_arrays_are_read_only(binary_encoded):
    m = models.fit("dt", binary_encoded.train.matrix, binary_encoded.train.labels)
    with pytest.raises(ValueError):
        m.threshold_[0] = 1.0


# --------------------------------------------------------------------------
# surrogate


def test_zero_weights_give_uniform():
    s = SoftmaxSurrogate.from_weights(np.zeros((3, 4)), np.zeros(3))
    assert np.allclose(s.predict_proba(np.ones((2, 4))), 1 / 3)


def test_gradient_one_feature_example():
    s = SoftmaxSurrogate.from_weights(np.array([[0.0], [2.0]]), np.zeros(2))
    g = input_gradient(s, np.array([0.5]), 1)
    expected = (sigmoid(1.0) - 1.0) * 2.0
    assert g[0] == pytest.approx(expected, rel=1e-12)
    assert g[0] == pytest.approx(-0.5379, abs=1e-4)


def test_gradient_zero_at_perfect_confidence():
    # p is one-hot up to float precision: logits differ by 1000
    s = SoftmaxSurrogate.from_weights(np.array([[0.0], [1000.0]]), np.zeros(2))
    assert np.all(input_gradient(s, np.array([1.0]), 1) == 0.0)


def test_gradient_validation():
    s = SoftmaxSurrogate.from_weights(np.zeros((2, 3)), np.zeros(2))
    with pytest.raises(WidthMismatch):
        input_gradient(s, np.zeros(4), 0)
    with pytest.raises(BadLabel):
        input_gradient(s, np.zeros(3), 2)
    with pytest.raises(BadLabel):
        input_gradient(s, np.zeros(3), 0.5)


def finite_difference(s, x, y, h=1e-6):
    g = np.empty_like(x)
    for j in range(len(x)):
        e = np.zeros_like(x)
        e[j] = h
        g[j] = (s.loss((x + e)[None], [y])[0] - s.loss((x - e)[None], [y])[0]) / (2 * h)
    return g


def test_gradient_matches_finite_differences(rng):
    for _ in range(20):
        k, f = rng.integers(2, 5), rng.integers(1, 6)
        s = SoftmaxSurrogate.from_weights(rng.normal(size=(k, f)), rng.normal(size=k))
        x = rng.normal(size=f)
        y = int(rng.integers(0, k))
        g = input_gradient(s, x, y)
        fd = finite_difference(s, x, y)
        assert np.max(np.abs(g - fd)) <= 1e-5 * max(1.0, np.max(np.abs(fd)))


def test_surrogate_loss_non_increasing(multi_encoded):
    s = SoftmaxSurrogate(epochs=100).fit(multi_encoded.train.matrix, multi_encoded.train.labels)
    h = np.array(s.loss_history_)
    assert np.all(np.diff(h) <= 1e-6)
    assert h[-1] < h[0]
    assert s.score(multi_encoded.test.matrix, multi_encoded.test.labels) > 0.6


def test_surrogate_large_lr_still_monotone(binary_encoded):
    s = SoftmaxSurrogate(lr=50.0, epochs=50).fit(binary_encoded.train.matrix, binary_encoded.train.labels)
    assert np.all(np.diff(s.loss_history_) <= 1e-6)
