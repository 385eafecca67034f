from __future__ import annotations

import logging
import warnings
from typing import Sequence

import numpy as np
import scipy.sparse as sp
from sklearn.utils.validation import check_is_fitted

from ..embeddings import EmbeddingTable
from ..text import Document
from ._base import (
    TOKEN_SEQUENCE,
    BaseEstimator,
    BinaryClassifierMixin,
    DivergenceError,
    RepresentationError,
    log_loss,
    sigmoid,
    validate_xy,
)

logger = logging.getLogger(__name__)


def _seq(doc) -> Sequence[str]:
    if isinstance(doc, Document):
        return doc.tokens
    if isinstance(doc, str) or not all(isinstance(t, str) for t in doc):
        raise RepresentationError("expected a token sequence")
    return doc


class EmbeddingBagClassifier(BinaryClassifierMixin, BaseEstimator):
    """Logistic head over mean-pooled token embeddings.

    ``logit(tokens) = coef_ . mean_i E[token_i] + intercept_``. Tokens not in
    the table contribute a zero vector (they still count in the mean).

    Parameters
    ----------
    table : EmbeddingTable
        Initial embeddings; the model keeps its own copy.
    freeze_embeddings : bool
        If False the embedding rows are trained along with the head.
    lr, epochs, batch_size, seed
        Mini-batch gradient descent settings.
    """

    representation = TOKEN_SEQUENCE

    def __init__(self, table=None, freeze_embeddings=True, lr=0.5, epochs=30, batch_size=32, seed=0):
        self.table = table
        self.freeze_embeddings = freeze_embeddings
        self.lr = lr
        self.epochs = epochs
        self.batch_size = batch_size
        self.seed = seed

    def _init_from_table(self, table: EmbeddingTable):
        self.tokens_ = tuple(table.tokens)
        self.token_index_ = {t: i for i, t in enumerate(self.tokens_)}
        self.embeddings_ = table.matrix.copy()

    def _pool_matrix(self, docs) -> sp.csr_matrix:
        """Row-normalized (n_docs, n_table_tokens) counts, so ``P @ E`` is mean pooling."""
        rows, cols, vals = [], [], []
        for r, doc in enumerate(docs):
            toks = _seq(doc)
            if len(toks) == 0:
                raise ValueError("empty token sequence")
            ids = [self.token_index_.get(t, -1) for t in toks]
            for i in ids:
                if i >= 0:
                    rows.append(r)
                    cols.append(i)
                    vals.append(1.0 / len(toks))
        P = sp.csr_matrix((vals, (rows, cols)), shape=(len(docs), len(self.tokens_)))
        P.sum_duplicates()
        return P

    def fit(self, X, y):
        if self.table is None:
            raise ValueError("an EmbeddingTable is required")
        docs = list(X)
        _, y = validate_xy(np.zeros((len(docs), 1)), y)
        self._init_from_table(self.table)
        oov = sorted({t for d in docs for t in _seq(d) if t not in self.token_index_})
        if oov:
            warnings.warn(f"{len(oov)} corpus token type(s) missing from the embedding table; mapped to zero")
        self.oov_tokens_ = oov
        P = self._pool_matrix(docs)
        E = self.embeddings_
        n, dim = len(docs), E.shape[1]
        w = np.zeros(dim)
        b = 0.0
        rng = np.random.default_rng(self.seed)
        losses = []
        for epoch in range(self.epochs):
            order = rng.permutation(n)
            for start in range(0, n, self.batch_size):
                idx = order[start : start + self.batch_size]
                Pb = P[idx]
                pooled = Pb @ E
                r = sigmoid(pooled @ w + b) - y[idx]
                gw = pooled.T @ r / idx.size
                gb = float(r.mean())
                if not self.freeze_embeddings:
                    gE = Pb.T @ (r[:, None] * w[None, :]) / idx.size
                    E = E - self.lr * np.asarray(gE)
                w = w - self.lr * gw
                b = b - self.lr * gb
            loss = log_loss(y, (P @ E) @ w + b)
            if not np.isfinite(loss):
                raise DivergenceError(f"non-finite loss at epoch {epoch}")
            losses.append(loss)
        self.embeddings_ = E
        self.coef_ = w
        self.intercept_ = b
        self.loss_curve_ = losses
        return self

    def loss_gradient(self, docs, y) -> tuple[np.ndarray, float]:
        """Gradient of mean log-loss w.r.t. (coef_, intercept_) at the current parameters."""
        P = self._pool_matrix(list(docs))
        pooled = P @ self.embeddings_
        r = sigmoid(pooled @ self.coef_ + self.intercept_) - np.asarray(y, dtype=np.float64)
        return pooled.T @ r / len(r), float(r.mean())

    def embed(self, tokens) -> np.ndarray:
        """(n_tokens, dim) matrix of the model's embeddings for a token sequence."""
        check_is_fitted(self, "coef_")
        toks = _seq(tokens)
        out = np.zeros((len(toks), self.embeddings_.shape[1]))
        for p, t in enumerate(toks):
            i = self.token_index_.get(t)
            if i is not None:
                out[p] = self.embeddings_[i]
        return out

    def logit_from_embeddings(self, E: np.ndarray) -> np.ndarray | float:
        """Logit for an embedded sequence (n_tokens, dim) or a batch (batch, n_tokens, dim)."""
        E = np.asarray(E, dtype=np.float64)
        z = E.mean(axis=-2) @ self.coef_ + self.intercept_
        return float(z) if E.ndim == 2 else z

    def gradient_wrt_embeddings(self, tokens_or_embedded) -> np.ndarray:
        """d logit / d E_p for every position p, shape (n_tokens, dim).

        The pooled vector is ``(1/n) sum_p E_p`` so by the chain rule each
        row is ``coef_ * d pooled / d E_p = coef_ / n``.
        """
        check_is_fitted(self, "coef_")
        if isinstance(tokens_or_embedded, np.ndarray):
            n = tokens_or_embedded.shape[0]
        else:
            n = len(_seq(tokens_or_embedded))
        if n == 0:
            raise ValueError("empty token sequence")
        dpool_dE = 1.0 / n
        return np.tile(self.coef_ * dpool_dE, (n, 1))

    def decision_function(self, X):
        check_is_fitted(self, "coef_")
        docs = list(X)
        P = self._pool_matrix(docs)
        return np.asarray((P @ self.embeddings_) @ self.coef_).ravel() + self.intercept_

    def embedding_table(self) -> EmbeddingTable:
        return EmbeddingTable(self.tokens_, self.embeddings_)

    @classmethod
    def from_parts(cls, table: EmbeddingTable, coef, intercept=0.0) -> "EmbeddingBagClassifier":
        m = cls(table=None)
        m._init_from_table(table)
        m.coef_ = np.asarray(coef, dtype=np.float64)
        m.intercept_ = float(intercept)
        m.oov_tokens_ = []
        m.loss_curve_ = []
        return m

    def to_dict(self) -> dict:
        params = {k: v for k, v in self.get_params().items() if k != "table"}
        return {
            "params": params,
            "tokens": list(self.tokens_),
            "embeddings": self.embeddings_.tolist(),
            "coef": self.coef_.tolist(),
            "intercept": self.intercept_,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "EmbeddingBagClassifier":
        table = EmbeddingTable(tuple(d["tokens"]), np.asarray(d["embeddings"], dtype=np.float64).reshape(len(d["tokens"]), -1))
        m = cls.from_parts(table, d["coef"], d["intercept"])
        m.set_params(**d["params"])
        return m
