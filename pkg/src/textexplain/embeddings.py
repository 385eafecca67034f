"""Token embeddings and the exact k-nearest-neighbor index used for perturbation."""

from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np
import scipy.sparse as sp

from .text import Document

logger = logging.getLogger(__name__)


class EmbeddingFormatError(ValueError):
    pass


@dataclass(frozen=True)
class EmbeddingTable:
    tokens: tuple[str, ...]
    matrix: np.ndarray
    report: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        m = np.asarray(self.matrix, dtype=np.float64)
        if m.ndim != 2 or m.shape[0] != len(self.tokens):
            raise ValueError("matrix must have one row per token")
        if not np.all(np.isfinite(m)):
            raise ValueError("embedding entries must be finite")
        if len(set(self.tokens)) != len(self.tokens):
            raise ValueError("duplicate tokens in embedding table")
        object.__setattr__(self, "tokens", tuple(self.tokens))
        object.__setattr__(self, "matrix", m)
        object.__setattr__(self, "_index", {t: i for i, t in enumerate(self.tokens)})

    @property
    def dim(self) -> int:
        return self.matrix.shape[1]

    def __len__(self) -> int:
        return len(self.tokens)

    def __contains__(self, token: str) -> bool:
        return token in self._index

    def index_of(self, token: str) -> int | None:
        return self._index.get(token)

    def vector(self, token: str) -> np.ndarray:
        return self.matrix[self._index[token]]

    def save(self, path: str | Path) -> None:
        save_embeddings(self, path)


def load_embeddings(path: str | Path, vocabulary=None) -> EmbeddingTable:
    """Parse a word2vec text-format file.

    If ``vocabulary`` (any container of tokens) is given, tokens absent from
    it are kept but listed in ``table.report["not_in_vocabulary"]``.
    """
    path = Path(path)
    with open(path, encoding="utf-8") as fh:
        header = fh.readline().split()
        if len(header) != 2 or not all(h.isdigit() for h in header):
            raise EmbeddingFormatError(f"{path}:1: malformed header, expected 'V dim'")
        n, dim = int(header[0]), int(header[1])
        tokens: list[str] = []
        rows: list[list[float]] = []
        seen: dict[str, int] = {}
        for lineno, line in enumerate(fh, start=2):
            parts = line.rstrip("\n").split(" ")
            parts = [p for p in parts if p != ""]
            if not parts:
                continue
            tok, vals = parts[0], parts[1:]
            if len(vals) != dim:
                raise EmbeddingFormatError(
                    f"{path}:{lineno}: token {tok!r} has {len(vals)} values, expected {dim}"
                )
            if tok in seen:
                raise EmbeddingFormatError(
                    f"{path}:{lineno}: duplicate token {tok!r} (first on line {seen[tok]})"
                )
            try:
                rows.append([float(v) for v in vals])
            except ValueError as exc:
                raise EmbeddingFormatError(f"{path}:{lineno}: {exc}") from None
            seen[tok] = lineno
            tokens.append(tok)
    if len(tokens) != n:
        raise EmbeddingFormatError(f"{path}: header declares {n} tokens, found {len(tokens)}")
    report = {}
    if vocabulary is not None:
        report["not_in_vocabulary"] = [t for t in tokens if t not in vocabulary]
    matrix = np.array(rows, dtype=np.float64).reshape(len(tokens), dim)
    return EmbeddingTable(tuple(tokens), matrix, report)


def save_embeddings(table: EmbeddingTable, path: str | Path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(f"{len(table)} {table.dim}\n")
        for tok, row in zip(table.tokens, table.matrix):
            fh.write(tok + " " + " ".join(repr(float(v)) for v in row) + "\n")


def cooccurrence_matrix(corpus: Sequence, window: int) -> tuple[list[str], sp.csr_matrix]:
    """Symmetric co-occurrence counts within +-window positions.

    Tokens are ordered by first appearance in the corpus.
    """
    index: dict[str, int] = {}
    seqs = []
    for doc in corpus:
        toks = doc.tokens if isinstance(doc, Document) else doc
        seqs.append(np.array([index.setdefault(t, len(index)) for t in toks], dtype=np.int64))
    V = len(index)
    rows, cols = [], []
    for ids in seqs:
        for off in range(1, window + 1):
            if off >= ids.size:
                break
            a, b = ids[:-off], ids[off:]
            rows += [a, b]
            cols += [b, a]
    if rows:
        r, c = np.concatenate(rows), np.concatenate(cols)
    else:
        r = c = np.zeros(0, dtype=np.int64)
    C = sp.csr_matrix((np.ones(r.size), (r, c)), shape=(V, V))
    C.sum_duplicates()
    return list(index), C


def ppmi(C: sp.spmatrix) -> np.ndarray:
    C = np.asarray(C.todense(), dtype=np.float64)
    total = C.sum()
    if total == 0:
        return np.zeros_like(C)
    row = C.sum(axis=1, keepdims=True)
    col = C.sum(axis=0, keepdims=True)
    with np.errstate(divide="ignore", invalid="ignore"):
        pmi = np.log(C * total / (row * col))
    pmi[~np.isfinite(pmi)] = 0.0
    return np.maximum(pmi, 0.0)


def train_embeddings(
    corpus: Sequence,
    dim: int = 50,
    window: int = 5,
    min_count: int = 1,
) -> EmbeddingTable:
    """Count-based embeddings: PPMI of windowed co-occurrences, truncated SVD.

    Token vectors are ``U_k * sqrt(S_k)``. Column signs are fixed so the
    largest-magnitude entry is positive, which makes the result independent
    of LAPACK sign conventions. Tokens occurring fewer than ``min_count``
    times are dropped before counting.
    """
    if len(corpus) == 0:
        raise ValueError("corpus is empty")
    seqs = [list(d.tokens if isinstance(d, Document) else d) for d in corpus]
    if min_count > 1:
        freq: dict[str, int] = {}
        for s in seqs:
            for t in s:
                freq[t] = freq.get(t, 0) + 1
        seqs = [[t for t in s if freq[t] >= min_count] for s in seqs]
    tokens, C = cooccurrence_matrix(seqs, window)
    if not tokens:
        raise ValueError("no tokens survive min_count")
    if dim > len(tokens):
        raise ValueError(f"dim={dim} exceeds vocabulary size {len(tokens)}")
    M = ppmi(C)
    U, S, _ = np.linalg.svd(M, hermitian=True)
    order = np.argsort(-S, kind="stable")
    U, S = U[:, order], S[order]
    tol = S.max(initial=0.0) * max(M.shape) * np.finfo(float).eps
    rank = int(np.sum(S > tol))
    if rank == 0:
        warnings.warn("co-occurrence matrix is zero; all embeddings are zero")
        return EmbeddingTable(tuple(tokens), np.zeros((len(tokens), dim)), {"rank": 0})
    if dim > rank:
        warnings.warn(f"dim={dim} exceeds effective rank {rank}; reducing to {rank}")
        dim = rank
    U, S = U[:, :dim], S[:dim]
    pivot = np.argmax(np.abs(U), axis=0)
    signs = np.sign(U[pivot, np.arange(dim)])
    signs[signs == 0] = 1.0
    vecs = U * signs * np.sqrt(S)
    zero_rows = np.asarray(C.sum(axis=1)).ravel() == 0
    vecs[zero_rows] = 0.0
    report = {"rank": rank, "zero_rows": [tokens[i] for i in np.flatnonzero(zero_rows)]}
    return EmbeddingTable(tuple(tokens), vecs, report)


@dataclass(frozen=True)
class NeighborIndex:
    """Exact k-NN lists over the nonzero rows of an embedding table.

    ``neighbor_ids[i]`` and ``neighbor_dists[i]`` are empty for tokens that
    are not indexed (zero vectors).
    """

    tokens: tuple[str, ...]
    k: int
    neighbor_ids: tuple[np.ndarray, ...]
    neighbor_dists: tuple[np.ndarray, ...]

    def __post_init__(self):
        object.__setattr__(self, "_index", {t: i for i, t in enumerate(self.tokens)})

    def __contains__(self, token: str) -> bool:
        i = self._index.get(token)
        return i is not None and self.neighbor_ids[i].size > 0

    def neighbors(self, token: str) -> list[str]:
        i = self._index.get(token)
        if i is None:
            return []
        return [self.tokens[j] for j in self.neighbor_ids[i]]

    def neighbor_set(self, token: str) -> set[str]:
        return set(self.neighbors(token))


def pairwise_l2(A: np.ndarray, B: np.ndarray) -> np.ndarray:
    """Exact ||a - b|| for every row pair (difference form, no expansion)."""
    return np.sqrt(((A[:, None, :] - B[None, :, :]) ** 2).sum(axis=2))


def build_neighbor_index(table: EmbeddingTable, k: int = 10, chunk_elems: int = 4_000_000) -> NeighborIndex:
    """Brute-force exact k-NN by l2 distance; ties go to the lower token index."""
    if k < 1:
        raise ValueError("k must be >= 1")
    M = table.matrix
    live = np.flatnonzero(np.any(M != 0, axis=1))
    if live.size < 2:
        raise ValueError("need at least two tokens with nonzero vectors")
    L = M[live]
    kk = min(k, live.size - 1)
    ids: list[np.ndarray] = [np.zeros(0, dtype=np.int64)] * len(table)
    dists: list[np.ndarray] = [np.zeros(0)] * len(table)
    step = max(1, chunk_elems // (live.size * max(1, table.dim)))
    for start in range(0, live.size, step):
        block = pairwise_l2(L[start : start + step], L)
        for r in range(block.shape[0]):
            me = start + r
            row = block[r].copy()
            row[me] = np.inf
            order = np.argsort(row, kind="stable")[:kk]
            ids[live[me]] = live[order]
            dists[live[me]] = row[order]
    return NeighborIndex(table.tokens, k, tuple(ids), tuple(dists))
