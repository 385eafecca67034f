from __future__ import annotations

import numpy as np
import scipy.sparse as sp
from sklearn.base import BaseEstimator, ClassifierMixin
from sklearn.utils.validation import check_array, check_X_y

SPARSE_VECTOR = "sparse-vector"
TOKEN_SEQUENCE = "token-sequence"

# keeps logits finite for models that can output exact 0/1 probabilities
PROB_CLIP = 1e-6


class SingleClassError(ValueError):
    pass


class DivergenceError(RuntimeError):
    pass


class RepresentationError(TypeError):
    pass


def sigmoid(z):
    z = np.asarray(z, dtype=np.float64)
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def logit(p, clip: float = PROB_CLIP):
    p = np.clip(np.asarray(p, dtype=np.float64), clip, 1.0 - clip)
    return np.log(p) - np.log1p(-p)


def log_loss(y, z) -> float:
    """Mean binary cross-entropy computed from logits."""
    y = np.asarray(y, dtype=np.float64)
    z = np.asarray(z, dtype=np.float64)
    return float(np.mean(np.logaddexp(0.0, z) - y * z))


def validate_xy(X, y):
    X, y = check_X_y(X, y, accept_sparse="csr", dtype=np.float64)
    y = y.astype(np.int64)
    if not np.all(np.isin(y, (0, 1))):
        raise ValueError("labels must be 0/1")
    if len(y) < 2 or np.unique(y).size < 2:
        raise SingleClassError("training data must contain both classes")
    return X, y


def validate_x(X, n_features: int):
    if isinstance(X, (list, tuple)) and X and isinstance(X[0], (list, tuple)) and X[0] and isinstance(X[0][0], str):
        raise RepresentationError("this model takes sparse vectors, not token sequences")
    X = check_array(X, accept_sparse="csr", dtype=np.float64, ensure_2d=False)
    if X.ndim == 1:
        X = X.reshape(1, -1)
    if X.shape[1] != n_features:
        raise RepresentationError(f"expected {n_features} features, got {X.shape[1]}")
    return X


class BinaryClassifierMixin(ClassifierMixin):
    """``predict_proba``/``predict`` on top of ``decision_function`` (logit)."""

    representation = SPARSE_VECTOR
    classes_ = np.array([0, 1])

    def predict_proba(self, X):
        p = sigmoid(self.decision_function(X))
        return np.column_stack([1.0 - p, p])

    def predict(self, X):
        return (self.decision_function(X) > 0).astype(np.int64)


def to_dense_rows(X) -> np.ndarray:
    return X.toarray() if sp.issparse(X) else np.asarray(X, dtype=np.float64)


__all__ = [
    "BaseEstimator",
    "BinaryClassifierMixin",
    "DivergenceError",
    "RepresentationError",
    "SingleClassError",
    "SPARSE_VECTOR",
    "TOKEN_SEQUENCE",
    "log_loss",
    "logit",
    "sigmoid",
    "to_dense_rows",
    "validate_x",
    "validate_xy",
]
