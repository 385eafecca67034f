from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from sklearn.utils.validation import check_is_fitted

from ._base import (
    PROB_CLIP,
    BaseEstimator,
    BinaryClassifierMixin,
    logit,
    to_dense_rows,
    validate_x,
    validate_xy,
)

LEAF = -1


@dataclass
class Tree:
    """Flat array encoding; ``feature[i] == -1`` marks a leaf holding ``value[i]``."""

    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    value: np.ndarray

    def predict(self, X: np.ndarray) -> np.ndarray:
        node = np.zeros(X.shape[0], dtype=np.int64)
        rows = np.arange(X.shape[0])
        while True:
            f = self.feature[node]
            inner = f != LEAF
            if not inner.any():
                return self.value[node]
            r, nd = rows[inner], node[inner]
            go_left = X[r, f[inner]] <= self.threshold[nd]
            node[inner] = np.where(go_left, self.left[nd], self.right[nd])

    def to_dict(self) -> dict:
        return {k: getattr(self, k).tolist() for k in ("feature", "threshold", "left", "right", "value")}

    @classmethod
    def from_dict(cls, d: dict) -> "Tree":
        return cls(
            np.asarray(d["feature"], dtype=np.int64),
            np.asarray(d["threshold"], dtype=np.float64),
            np.asarray(d["left"], dtype=np.int64),
            np.asarray(d["right"], dtype=np.int64),
            np.asarray(d["value"], dtype=np.float64),
        )


def _best_split(Xn: np.ndarray, yn: np.ndarray, feats: np.ndarray, min_leaf: int):
    """Lowest weighted Gini over candidate features; returns (feature, threshold) or None."""
    n = yn.size
    vals = Xn[:, feats]
    order = np.argsort(vals, axis=0, kind="stable")
    sv = np.take_along_axis(vals, order, axis=0)
    sy = yn[order]
    pos_left = np.cumsum(sy, axis=0)[:-1]
    n_left = np.arange(1, n, dtype=np.float64)[:, None]
    n_right = n - n_left
    pos_right = sy.sum(axis=0)[None, :] - pos_left
    # n_child * gini_child / 2 summed over both children
    cost = pos_left * (n_left - pos_left) / n_left + pos_right * (n_right - pos_right) / n_right
    valid = sv[:-1] < sv[1:]
    if min_leaf > 1:
        ok = (n_left >= min_leaf) & (n_right >= min_leaf)
        valid &= ok
    if not valid.any():
        return None
    cost = np.where(valid, cost, np.inf).T  # (features, positions): argmin prefers earlier features
    flat = int(np.argmin(cost))
    fi, pi = divmod(flat, n - 1)
    thr = 0.5 * (sv[pi, fi] + sv[pi + 1, fi])
    if not thr < sv[pi + 1, fi]:
        thr = sv[pi, fi]
    return int(feats[fi]), float(thr)


def grow_tree(X, y, rng, max_depth: int, mtry: int, min_samples_leaf: int = 1) -> Tree:
    feature, threshold, left, right, value = [], [], [], [], []

    def new_node():
        for a in (feature, left, right):
            a.append(LEAF)
        threshold.append(0.0)
        value.append(0.0)
        return len(feature) - 1

    root = new_node()
    stack = [(root, np.arange(y.size), 0)]
    d = X.shape[1]
    while stack:
        node, idx, depth = stack.pop()
        yn = y[idx]
        value[node] = float(yn.mean())
        if depth >= max_depth or idx.size < 2 * min_samples_leaf or yn.min() == yn.max():
            continue
        Xn = X[idx]
        perm = rng.permutation(d)
        varying = Xn.max(axis=0) > Xn.min(axis=0)
        feats = perm[varying[perm]][:mtry]
        if feats.size == 0:
            continue
        split = _best_split(Xn, yn, feats, min_samples_leaf)
        if split is None:
            continue
        f, t = split
        go_left = Xn[:, f] <= t
        lnode, rnode = new_node(), new_node()
        feature[node], threshold[node] = f, t
        left[node], right[node] = lnode, rnode
        stack.append((rnode, idx[~go_left], depth + 1))
        stack.append((lnode, idx[go_left], depth + 1))
    return Tree(
        np.asarray(feature, dtype=np.int64),
        np.asarray(threshold, dtype=np.float64),
        np.asarray(left, dtype=np.int64),
        np.asarray(right, dtype=np.int64),
        np.asarray(value, dtype=np.float64),
    )


class RandomForestGini(BinaryClassifierMixin, BaseEstimator):
    """Bagged CART trees with Gini splits over a random feature subset per node.

    Leaves store the fraction of positive bootstrap samples; the forest
    probability is the mean over trees. At each node features are visited in
    a random order and constant features are skipped until ``mtry`` varying
    ones have been evaluated.

    ``mtry_fraction=None`` uses ``ceil(sqrt(n_features))`` candidates.
    ``decision_function`` returns the logit of the probability clipped to
    ``[1e-6, 1 - 1e-6]``.
    """

    def __init__(self, n_trees=100, max_depth=12, mtry_fraction=None, min_samples_leaf=1, seed=0):
        self.n_trees = n_trees
        self.max_depth = max_depth
        self.mtry_fraction = mtry_fraction
        self.min_samples_leaf = min_samples_leaf
        self.seed = seed

    def _mtry(self, d: int) -> int:
        if self.mtry_fraction is None:
            return max(1, math.ceil(math.sqrt(d)))
        if not 0 < self.mtry_fraction <= 1:
            raise ValueError("mtry_fraction must be in (0, 1]")
        return max(1, math.ceil(self.mtry_fraction * d))

    def fit(self, X, y):
        X, y = validate_xy(X, y)
        X = to_dense_rows(X)
        n, d = X.shape
        mtry = self._mtry(d)
        yf = y.astype(np.float64)
        trees = []
        for child in np.random.SeedSequence(self.seed).spawn(self.n_trees):
            rng = np.random.default_rng(child)
            boot = rng.integers(0, n, size=n)
            trees.append(grow_tree(X[boot], yf[boot], rng, self.max_depth, mtry, self.min_samples_leaf))
        self.trees_ = trees
        self.n_features_in_ = d
        return self

    def tree_probabilities(self, X) -> np.ndarray:
        """(n_trees, n_samples) leaf probabilities."""
        check_is_fitted(self, "trees_")
        X = to_dense_rows(validate_x(X, self.n_features_in_))
        return np.stack([t.predict(X) for t in self.trees_])

    def positive_proba(self, X) -> np.ndarray:
        return self.tree_probabilities(X).mean(axis=0)

    def predict_proba(self, X):
        p = self.positive_proba(X)
        return np.column_stack([1.0 - p, p])

    def decision_function(self, X):
        return logit(self.positive_proba(X), PROB_CLIP)

    def predict(self, X):
        return (self.positive_proba(X) > 0.5).astype(np.int64)

    @classmethod
    def from_trees(cls, trees, n_features: int) -> "RandomForestGini":
        m = cls(n_trees=len(trees))
        m.trees_ = list(trees)
        m.n_features_in_ = n_features
        return m

    def to_dict(self) -> dict:
        return {
            "params": self.get_params(),
            "n_features": self.n_features_in_,
            "trees": [t.to_dict() for t in self.trees_],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "RandomForestGini":
        m = cls(**d["params"])
        m.trees_ = [Tree.from_dict(t) for t in d["trees"]]
        m.n_features_in_ = int(d["n_features"])
        return m
