from __future__ import annotations

import numpy as np
import scipy.sparse as sp
from sklearn.utils.validation import check_is_fitted

from ._base import BaseEstimator, BinaryClassifierMixin, sigmoid, validate_x, validate_xy


def quantile_edges(values: np.ndarray, n_bins: int) -> np.ndarray:
    """Strictly increasing interior bin edges; a value v lands in bin ``searchsorted(edges, v, 'right')``."""
    if n_bins < 2 or values.size == 0:
        return np.zeros(0)
    qs = np.quantile(values, np.linspace(0.0, 1.0, n_bins + 1)[1:-1])
    edges = np.unique(qs)
    # an edge at the minimum would leave bin 0 empty
    return edges[edges > values.min()]


class AdditiveBoostingClassifier(BinaryClassifierMixin, BaseEstimator):
    """Main-effects additive model fit by cyclic histogram boosting.

    ``logit(x) = intercept_ + sum_j shape_j(x_j)`` where each shape is
    piecewise constant over quantile bins fixed before boosting. Each round
    visits every feature in index order and adds ``lr`` times a Newton step
    computed per bin from the current residuals. Updates are centered over
    the training data so shapes have zero mean and constant features keep an
    all-zero shape.

    Parameters
    ----------
    n_bins : int
        Maximum number of bins per feature.
    rounds : int
        Boosting rounds (full passes over the features).
    lr : float
        Shrinkage applied to every update.
    reg : float
        Added to the per-bin Hessian sum.
    seed : int
        Unused by the deterministic cyclic schedule; kept for a uniform
        trainer signature.
    """

    def __init__(self, n_bins=256, rounds=500, lr=0.01, reg=1.0, seed=0):
        self.n_bins = n_bins
        self.rounds = rounds
        self.lr = lr
        self.reg = reg
        self.seed = seed

    def fit(self, X, y):
        X, y = validate_xy(X, y)
        n, d = X.shape
        Xc = sp.csc_matrix(X) if sp.issparse(X) else None
        edges, bins, nbins = [], [], []
        for j in range(d):
            col = Xc[:, j].toarray().ravel() if Xc is not None else X[:, j]
            e = quantile_edges(col, self.n_bins)
            edges.append(e)
            bins.append(np.searchsorted(e, col, side="right").astype(np.int64))
            nbins.append(e.size + 1)
        base = y.mean()
        intercept = float(np.log(base) - np.log1p(-base))
        scores = [np.zeros(nb) for nb in nbins]
        F = np.full(n, intercept)
        active = [j for j in range(d) if nbins[j] > 1]
        counts = {j: np.bincount(bins[j], minlength=nbins[j]).astype(np.float64) for j in active}
        for _ in range(self.rounds):
            for j in active:
                p = sigmoid(F)
                g = np.bincount(bins[j], weights=y - p, minlength=nbins[j])
                h = np.bincount(bins[j], weights=p * (1.0 - p), minlength=nbins[j])
                u = self.lr * g / (h + self.reg)
                F += u[bins[j]]
                shift = float(counts[j] @ u) / n
                scores[j] += u - shift
                intercept += shift
        self.edges_ = edges
        self.scores_ = scores
        self.intercept_ = intercept
        self.n_features_in_ = d
        self._build_lookup()
        return self

    def _build_lookup(self):
        d = self.n_features_in_
        width = max((e.size for e in self.edges_), default=0)
        self._edge_table = np.full((d, max(width, 1)), np.inf)
        for j, e in enumerate(self.edges_):
            self._edge_table[j, : e.size] = e
        self._zero_bin = np.array([np.searchsorted(e, 0.0, side="right") for e in self.edges_], dtype=np.int64)
        self._zero_score = np.array([s[b] for s, b in zip(self.scores_, self._zero_bin)])
        offsets = np.cumsum([0] + [s.size for s in self.scores_])
        self._score_flat = np.concatenate(self.scores_) if self.scores_ else np.zeros(0)
        self._score_offset = offsets[:-1]

    def _bin_of(self, feat: np.ndarray, vals: np.ndarray) -> np.ndarray:
        return (self._edge_table[feat] <= vals[:, None]).sum(axis=1)

    def shape_values(self, X) -> np.ndarray:
        """Per-feature contributions ``shape_j(x_j)`` as a dense (n, d) array."""
        check_is_fitted(self, "scores_")
        X = validate_x(X, self.n_features_in_)
        n, d = X.shape
        out = np.tile(self._zero_score, (n, 1))
        X = sp.csr_matrix(X)
        X.eliminate_zeros()
        coo = X.tocoo()
        b = self._bin_of(coo.col, coo.data)
        out[coo.row, coo.col] = self._score_flat[self._score_offset[coo.col] + b]
        return out

    def decision_function(self, X):
        check_is_fitted(self, "scores_")
        X = validate_x(X, self.n_features_in_)
        X = sp.csr_matrix(X)
        X.eliminate_zeros()
        coo = X.tocoo()
        b = self._bin_of(coo.col, coo.data)
        delta = self._score_flat[self._score_offset[coo.col] + b] - self._zero_score[coo.col]
        z = np.full(X.shape[0], self.intercept_ + float(self._zero_score.sum()))
        np.add.at(z, coo.row, delta)
        return z

    @classmethod
    def from_shapes(cls, edges, scores, intercept=0.0) -> "AdditiveBoostingClassifier":
        m = cls()
        m.edges_ = [np.asarray(e, dtype=np.float64) for e in edges]
        m.scores_ = [np.asarray(s, dtype=np.float64) for s in scores]
        for e, s in zip(m.edges_, m.scores_):
            if e.size and np.any(np.diff(e) <= 0):
                raise ValueError("bin edges must be strictly increasing")
            if s.size != e.size + 1:
                raise ValueError("need len(edges) + 1 bin scores per feature")
        m.intercept_ = float(intercept)
        m.n_features_in_ = len(m.edges_)
        m._build_lookup()
        return m

    def to_dict(self) -> dict:
        return {
            "params": self.get_params(),
            "intercept": self.intercept_,
            "edges": [e.tolist() for e in self.edges_],
            "scores": [s.tolist() for s in self.scores_],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "AdditiveBoostingClassifier":
        m = cls.from_shapes(d["edges"], d["scores"], d["intercept"])
        m.set_params(**d["params"])
        return m
