from __future__ import annotations

import logging
import warnings

import numpy as np
from sklearn.utils.validation import check_is_fitted

from ._base import (
    BaseEstimator,
    BinaryClassifierMixin,
    DivergenceError,
    log_loss,
    sigmoid,
    validate_x,
    validate_xy,
)

logger = logging.getLogger(__name__)


class LogisticRegressionGD(BinaryClassifierMixin, BaseEstimator):
    """L2-regularized logistic regression trained by mini-batch gradient descent.

    The objective is ``mean(log_loss) + l2/2 * ||w||^2``. Batches come from a
    permutation drawn per epoch from a generator seeded with ``seed``, so
    training is bit-reproducible.

    Parameters
    ----------
    l2 : float
        Ridge penalty on the weights (the bias is not penalized).
    lr : float
        Step size.
    epochs : int
        Passes over the data.
    batch_size : int
        Mini-batch size.
    seed : int
        Seeds the shuffling.

    Attributes
    ----------
    coef_ : ndarray of shape (n_features,)
    intercept_ : float
    loss_curve_ : list of float
        Full-data objective after each epoch.
    """

    def __init__(self, l2=1e-4, lr=0.1, epochs=20, batch_size=32, seed=0):
        self.l2 = l2
        self.lr = lr
        self.epochs = epochs
        self.batch_size = batch_size
        self.seed = seed

    def _objective(self, X, y, w, b):
        return log_loss(y, X @ w + b) + 0.5 * self.l2 * float(w @ w)

    def fit(self, X, y):
        if self.l2 < 0:
            raise ValueError("l2 must be >= 0")
        X, y = validate_xy(X, y)
        n, d = X.shape
        w = np.zeros(d)
        b = 0.0
        rng = np.random.default_rng(self.seed)
        losses = []
        for epoch in range(self.epochs):
            order = rng.permutation(n)
            for start in range(0, n, self.batch_size):
                idx = order[start : start + self.batch_size]
                Xb = X[idx]
                r = sigmoid(Xb @ w + b) - y[idx]
                gw = np.asarray(Xb.T @ r).ravel() / idx.size + self.l2 * w
                w = w - self.lr * gw
                b = b - self.lr * float(r.mean())
            loss = self._objective(X, y, w, b)
            if not np.isfinite(loss):
                raise DivergenceError(f"non-finite loss at epoch {epoch}")
            losses.append(loss)
            if epoch >= 5 and loss > losses[epoch - 5]:
                warnings.warn(f"loss increased over the 5 epochs ending at epoch {epoch}; step size may be too large")
        self.coef_ = w
        self.intercept_ = b
        self.n_features_in_ = d
        self.loss_curve_ = losses
        return self

    def decision_function(self, X):
        check_is_fitted(self, "coef_")
        X = validate_x(X, self.n_features_in_)
        return np.asarray(X @ self.coef_).ravel() + self.intercept_

    @classmethod
    def from_weights(cls, weights, bias=0.0) -> "LogisticRegressionGD":
        m = cls()
        m.coef_ = np.asarray(weights, dtype=np.float64)
        m.intercept_ = float(bias)
        m.n_features_in_ = m.coef_.size
        m.loss_curve_ = []
        return m

    def to_dict(self) -> dict:
        return {
            "params": self.get_params(),
            "coef": self.coef_.tolist(),
            "intercept": self.intercept_,
            "loss_curve": list(self.loss_curve_),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "LogisticRegressionGD":
        m = cls(**d["params"])
        m.coef_ = np.asarray(d["coef"], dtype=np.float64)
        m.intercept_ = float(d["intercept"])
        m.n_features_in_ = m.coef_.size
        m.loss_curve_ = list(d.get("loss_curve", []))
        return m
