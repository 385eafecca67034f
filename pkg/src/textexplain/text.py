"""Tokenization, vocabulary construction and TF-IDF vectorization."""

from __future__ import annotations

import logging
import math
import re
import warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np
import scipy.sparse as sp
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

logger = logging.getLogger(__name__)

NUMBER_TOKEN = "numbertoken"

_SPLIT_RE = re.compile(r"[^0-9a-z]+")
_DIGITS_RE = re.compile(r"[0-9]+")


class CorpusFormatError(ValueError):
    """A corpus file line could not be parsed."""


class EmptyVocabularyError(ValueError):
    pass


def tokenize(text: str) -> list[str]:
    """Lowercase, split on non-alphanumeric runs, map digit runs to ``numbertoken``.

    A token such as ``x2`` becomes ``["x", "numbertoken"]``: every maximal
    digit run is its own token.
    """
    tokens: list[str] = []
    for chunk in _SPLIT_RE.split(text.lower()):
        if not chunk:
            continue
        pos = 0
        for m in _DIGITS_RE.finditer(chunk):
            if m.start() > pos:
                tokens.append(chunk[pos : m.start()])
            tokens.append(NUMBER_TOKEN)
            pos = m.end()
        if pos < len(chunk):
            tokens.append(chunk[pos:])
    return tokens


@dataclass(frozen=True)
class Document:
    id: str
    label: int
    tokens: tuple[str, ...]

    def __post_init__(self):
        if self.label not in (0, 1):
            raise ValueError(f"document {self.id!r}: label must be 0 or 1, got {self.label!r}")
        object.__setattr__(self, "tokens", tuple(self.tokens))


def make_corpus(texts: Iterable[str], labels: Iterable[int], prefix: str = "doc") -> list[Document]:
    """Tokenize raw texts into documents, rejecting empty ones."""
    docs = []
    for i, (text, label) in enumerate(zip(texts, labels)):
        toks = tokenize(text)
        if not toks:
            raise ValueError(f"document {prefix}{i} is empty after tokenization")
        docs.append(Document(f"{prefix}{i}", int(label), tuple(toks)))
    return docs


def read_corpus(path: str | Path, prefix: str | None = None) -> list[Document]:
    """Read a ``label<TAB>text`` TSV file.

    Document ids are ``<prefix><line number>``; the prefix defaults to the
    file stem followed by a colon.
    """
    path = Path(path)
    prefix = f"{path.stem}:" if prefix is None else prefix
    docs = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.rstrip("\n").rstrip("\r")
            if not line.strip():
                continue
            label_str, sep, text = line.partition("\t")
            if not sep:
                raise CorpusFormatError(f"{path}:{lineno}: expected 'label<TAB>text'")
            if label_str.strip() not in ("0", "1"):
                raise CorpusFormatError(f"{path}:{lineno}: label must be 0 or 1, got {label_str!r}")
            toks = tokenize(text)
            if not toks:
                raise CorpusFormatError(f"{path}:{lineno}: document is empty after tokenization")
            docs.append(Document(f"{prefix}{lineno}", int(label_str), tuple(toks)))
    if not docs:
        raise CorpusFormatError(f"{path}: no documents")
    return docs


def write_corpus(path: str | Path, docs: Sequence[Document]) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for d in docs:
            fh.write(f"{d.label}\t{' '.join(d.tokens)}\n")


def _as_tokens(doc) -> Sequence[str]:
    return doc.tokens if isinstance(doc, Document) else doc


def ngrams(tokens: Sequence[str], ngram_range: tuple[int, int] = (1, 1)) -> list[str]:
    lo, hi = ngram_range
    out = []
    for n in range(lo, hi + 1):
        if n == 1:
            out.extend(tokens)
        else:
            out.extend(" ".join(tokens[i : i + n]) for i in range(len(tokens) - n + 1))
    return out


@dataclass(frozen=True)
class Vocabulary:
    token_to_index: dict[str, int]
    document_frequency: np.ndarray
    n_docs: int
    tokens: tuple[str, ...] = field(default=())

    def __post_init__(self):
        if not self.tokens:
            ordered = sorted(self.token_to_index, key=self.token_to_index.__getitem__)
            object.__setattr__(self, "tokens", tuple(ordered))

    def __len__(self) -> int:
        return len(self.token_to_index)

    def __contains__(self, token: str) -> bool:
        return token in self.token_to_index

    def to_dict(self) -> dict:
        return {
            "tokens": list(self.tokens),
            "document_frequency": [int(v) for v in self.document_frequency],
            "n_docs": self.n_docs,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Vocabulary":
        tokens = tuple(d["tokens"])
        return cls(
            {t: i for i, t in enumerate(tokens)},
            np.asarray(d["document_frequency"], dtype=np.int64),
            int(d["n_docs"]),
            tokens,
        )


def build_vocab(
    corpus: Sequence,
    min_df: int = 1,
    max_features: int | None = None,
    ngram_range: tuple[int, int] = (1, 1),
) -> Vocabulary:
    """Count document frequencies and assign indices by (df desc, token asc)."""
    if len(corpus) == 0:
        raise ValueError("corpus is empty")
    if min_df < 1:
        raise ValueError("min_df must be >= 1")
    df: dict[str, int] = {}
    for doc in corpus:
        for tok in set(ngrams(_as_tokens(doc), ngram_range)):
            df[tok] = df.get(tok, 0) + 1
    kept = sorted(((-c, t) for t, c in df.items() if c >= min_df))
    if max_features is not None:
        kept = kept[:max_features]
    if not kept:
        raise EmptyVocabularyError(f"no token reaches min_df={min_df}")
    tokens = tuple(t for _, t in kept)
    return Vocabulary(
        {t: i for i, t in enumerate(tokens)},
        np.array([-c for c, _ in kept], dtype=np.int64),
        len(corpus),
        tokens,
    )


def smoothed_idf(document_frequency: np.ndarray, n_docs: int) -> np.ndarray:
    df = np.asarray(document_frequency, dtype=np.float64)
    return np.log((1.0 + n_docs) / (1.0 + df)) + 1.0


@dataclass(frozen=True)
class SparseVector:
    """A single sparse vector; also the adapter wire encoding."""

    dim: int
    indices: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        idx = np.asarray(self.indices, dtype=np.int64)
        val = np.asarray(self.values, dtype=np.float64)
        if idx.shape != val.shape:
            raise ValueError("indices and values differ in length")
        if idx.size and (np.any(np.diff(idx) <= 0) or idx[0] < 0 or idx[-1] >= self.dim):
            raise ValueError("indices must be strictly increasing and within [0, dim)")
        if not np.all(np.isfinite(val)) or np.any(val == 0):
            raise ValueError("values must be finite and nonzero")
        object.__setattr__(self, "indices", idx)
        object.__setattr__(self, "values", val)

    @classmethod
    def from_dense(cls, x) -> "SparseVector":
        x = np.asarray(x, dtype=np.float64).ravel()
        idx = np.flatnonzero(x)
        return cls(x.size, idx, x[idx])

    @classmethod
    def from_row(cls, row) -> "SparseVector":
        row = sp.csr_matrix(row)
        row.sort_indices()
        keep = row.data != 0
        return cls(row.shape[1], row.indices[keep], row.data[keep])

    def to_dense(self) -> np.ndarray:
        out = np.zeros(self.dim)
        out[self.indices] = self.values
        return out

    def to_json(self) -> dict:
        return {"dim": int(self.dim), "idx": self.indices.tolist(), "val": self.values.tolist()}

    @classmethod
    def from_json(cls, d: dict) -> "SparseVector":
        return cls(int(d["dim"]), d["idx"], d["val"])


class TfidfVectorizer(TransformerMixin, BaseEstimator):
    """Smoothed-idf, l2-normalized TF-IDF over pre-tokenized documents.

    ``fit``/``transform`` accept :class:`Document` objects or plain token
    sequences. ``transform`` returns a CSR matrix with one row per document.

    Parameters
    ----------
    min_df : int
        Minimum document frequency for a token to be kept.
    max_features : int or None
        Keep only the top tokens by (document frequency desc, token asc).
    ngram_range : tuple
        ``(1, 1)`` for unigrams, ``(1, 2)`` to add bigrams.
    """

    def __init__(self, min_df: int = 1, max_features: int | None = None, ngram_range=(1, 1)):
        self.min_df = min_df
        self.max_features = max_features
        self.ngram_range = ngram_range

    def fit(self, corpus, y=None):
        if tuple(self.ngram_range) not in ((1, 1), (1, 2), (2, 2)):
            raise ValueError(f"unsupported ngram_range {self.ngram_range!r}")
        self.vocabulary_ = build_vocab(corpus, self.min_df, self.max_features, tuple(self.ngram_range))
        self.idf_ = smoothed_idf(self.vocabulary_.document_frequency, self.vocabulary_.n_docs)
        return self

    @property
    def n_features_(self) -> int:
        return len(self.vocabulary_)

    def transform(self, corpus) -> sp.csr_matrix:
        check_is_fitted(self, "idf_")
        corpus = list(corpus)
        n = len(corpus)
        t2i = self.vocabulary_.token_to_index
        rows, cols, vals = [], [], []
        n_empty = 0
        for r, doc in enumerate(corpus):
            counts: dict[int, int] = {}
            for tok in ngrams(_as_tokens(doc), tuple(self.ngram_range)):
                j = t2i.get(tok)
                if j is not None:
                    counts[j] = counts.get(j, 0) + 1
            if not counts:
                n_empty += 1
                continue
            idx = np.fromiter(sorted(counts), dtype=np.int64, count=len(counts))
            w = np.array([counts[j] for j in idx], dtype=np.float64) * self.idf_[idx]
            w /= math.sqrt(float(np.dot(w, w)))
            rows.append(np.full(idx.size, r, dtype=np.int64))
            cols.append(idx)
            vals.append(w)
        if n_empty:
            warnings.warn(f"{n_empty} document(s) have no in-vocabulary tokens; zero vectors produced")
        if rows:
            X = sp.csr_matrix(
                (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                shape=(n, self.n_features_),
            )
        else:
            X = sp.csr_matrix((n, self.n_features_))
        X.sort_indices()
        return X

    def transform_one(self, doc) -> np.ndarray:
        """Dense l2-normalized vector for a single document."""
        return self.transform([doc]).toarray()[0]

    def feature_names(self) -> list[str]:
        return list(self.vocabulary_.tokens)

    def to_dict(self) -> dict:
        check_is_fitted(self, "idf_")
        return {
            "params": {"min_df": self.min_df, "max_features": self.max_features, "ngram_range": list(self.ngram_range)},
            "vocabulary": self.vocabulary_.to_dict(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "TfidfVectorizer":
        p = d["params"]
        vec = cls(p["min_df"], p["max_features"], tuple(p["ngram_range"]))
        vec.vocabulary_ = Vocabulary.from_dict(d["vocabulary"])
        vec.idf_ = smoothed_idf(vec.vocabulary_.document_frequency, vec.vocabulary_.n_docs)
        return vec


def fit_tfidf(corpus, vocabulary: Vocabulary) -> TfidfVectorizer:
    """Wrap a prebuilt vocabulary in a fitted vectorizer."""
    if vocabulary.n_docs != len(corpus):
        raise ValueError("vocabulary was built from a corpus of different size")
    vec = TfidfVectorizer()
    vec.vocabulary_ = vocabulary
    vec.idf_ = smoothed_idf(vocabulary.document_frequency, vocabulary.n_docs)
    return vec
