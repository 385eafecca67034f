"""Nearest-neighbor token replacement and Gaussian input noise."""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .embeddings import NeighborIndex
from .text import Document


def derive_seed(*parts) -> int:
    """Stable 63-bit seed from arbitrary printable parts (independent of PYTHONHASHSEED)."""
    h = hashlib.blake2b("\x1f".join(str(p) for p in parts).encode("utf-8"), digest_size=8)
    return int.from_bytes(h.digest(), "little") >> 1


@dataclass(frozen=True)
class PerturbationConfig:
    pi: float = 0.1
    k: int = 10
    seed: int = 0
    weighting: str = "uniform"
    exclude: frozenset = field(default_factory=frozenset)

    def __post_init__(self):
        if not 0.0 <= self.pi <= 1.0:
            raise ValueError("pi must be in [0, 1]")
        if self.k < 1:
            raise ValueError("k must be >= 1")
        if self.weighting not in ("uniform", "distance"):
            raise ValueError("weighting must be 'uniform' or 'distance'")
        object.__setattr__(self, "exclude", frozenset(self.exclude))


@dataclass(frozen=True)
class PerturbedDoc:
    tokens: tuple[str, ...]
    replaced_positions: tuple[int, ...]
    source_id: str
    draw: int = 0
    n_out_of_index: int = 0
    duplicate: bool = False


def _doc_parts(doc) -> tuple[str, Sequence[str]]:
    if isinstance(doc, Document):
        return doc.id, doc.tokens
    return "", doc


def perturb_document(doc, index: NeighborIndex, cfg: PerturbationConfig, seed: int | None = None, draw: int = 0) -> PerturbedDoc:
    """Replace each token with probability ``pi`` by one of its ``k`` nearest neighbors.

    A uniform draw is consumed for every position, so the selection pattern
    does not depend on which tokens are indexed. Tokens missing from the
    index (or listed in ``cfg.exclude``) are never replaced and are counted
    in ``n_out_of_index``.
    """
    doc_id, tokens = _doc_parts(doc)
    rng = np.random.default_rng(cfg.seed if seed is None else seed)
    u = rng.random(len(tokens))
    out = list(tokens)
    replaced = []
    n_oov = 0
    for p, tok in enumerate(tokens):
        eligible = tok in index and tok not in cfg.exclude
        if not eligible:
            n_oov += 1
            continue
        if u[p] < cfg.pi:
            i = index._index[tok]
            ids = index.neighbor_ids[i][: cfg.k]
            if cfg.weighting == "distance":
                d = index.neighbor_dists[i][: cfg.k]
                wts = 1.0 / (d + 1e-12)
                j = rng.choice(ids.size, p=wts / wts.sum())
            else:
                j = rng.integers(ids.size)
            out[p] = index.tokens[ids[j]]
            replaced.append(p)
    return PerturbedDoc(tuple(out), tuple(replaced), doc_id, draw, n_oov)


def make_neighborhood(doc, index: NeighborIndex, cfg: PerturbationConfig, m: int = 15) -> list[PerturbedDoc]:
    """``m`` independent perturbations, draw ``j`` seeded from ``(cfg.seed, doc id, j)``.

    Draws whose token sequence repeats an earlier draw are kept but flagged
    with ``duplicate=True``.
    """
    if m < 1:
        raise ValueError("m must be >= 1")
    doc_id, _ = _doc_parts(doc)
    seen: set[tuple[str, ...]] = set()
    out = []
    for j in range(m):
        pd = perturb_document(doc, index, cfg, seed=derive_seed(cfg.seed, doc_id, j), draw=j)
        if pd.tokens in seen:
            pd = PerturbedDoc(pd.tokens, pd.replaced_positions, pd.source_id, j, pd.n_out_of_index, True)
        seen.add(pd.tokens)
        out.append(pd)
    return out


def in_neighbor_lists(source: Sequence[str], perturbed: PerturbedDoc, index: NeighborIndex, k: int) -> bool:
    """Post-hoc check: same length, and every replaced token is in its source token's k-NN list."""
    if len(source) != len(perturbed.tokens):
        return False
    for p in perturbed.replaced_positions:
        if perturbed.tokens[p] not in set(index.neighbors(source[p])[:k]):
            return False
    return True


@dataclass(frozen=True)
class GaussianNoiseConfig:
    sigma_scale: float = 0.1
    seed: int = 0
    n_draws: int = 100
    full_support: bool = False

    def __post_init__(self):
        if self.sigma_scale < 0:
            raise ValueError("sigma_scale must be >= 0")
        if self.n_draws < 1:
            raise ValueError("n_draws must be >= 1")


def componentwise_std(sample: np.ndarray) -> np.ndarray:
    """Per-coordinate standard deviation of a stack of representations (axis 0)."""
    return np.asarray(sample, dtype=np.float64).std(axis=0)


def gaussian_perturbations(x, cfg: GaussianNoiseConfig, std: np.ndarray, seed: int | None = None) -> np.ndarray:
    """``n_draws`` zero-mean noise arrays shaped like ``x``.

    Coordinate ``c`` gets standard deviation ``sigma_scale * std[c]``. Unless
    ``cfg.full_support`` is set, noise is restricted to the nonzero entries
    of ``x``. ``std`` is broadcast against ``x`` (so a per-dimension vector
    works for an embedded sequence).
    """
    x = np.asarray(x, dtype=np.float64)
    sigma = cfg.sigma_scale * np.broadcast_to(np.asarray(std, dtype=np.float64), x.shape)
    if not cfg.full_support:
        sigma = np.where(x != 0, sigma, 0.0)
    rng = np.random.default_rng(cfg.seed if seed is None else seed)
    return rng.standard_normal((cfg.n_draws, *x.shape)) * sigma
