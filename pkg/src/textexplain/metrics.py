"""Explanation-quality estimators: generalized local Lipschitz and infidelity."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .attributions import Attribution
from .perturb import GaussianNoiseConfig, PerturbedDoc, gaussian_perturbations

DEFAULT_EPS = 0.25


@dataclass
class LipschitzResult:
    doc_id: str
    value: float | None
    argmax_draw: int | None
    n_retained: int
    n_generated: int
    n_identical: int = 0

    @property
    def empty(self) -> bool:
        return self.n_retained == 0


@dataclass
class InfidelityResult:
    doc_id: str
    value: float
    n_draws: int
    sigma_scale: float
    std_error: float = 0.0
    metadata: dict = field(default_factory=dict)


def normalized_distance(xi: np.ndarray, xj: np.ndarray) -> float:
    """``||xi - xj|| / ||xi||``; the radius filter is applied to this quantity."""
    ni = float(np.linalg.norm(xi))
    if ni == 0:
        raise ValueError("cannot normalize distance from a zero representation")
    return float(np.linalg.norm(xi - xj)) / ni


def local_lipschitz(
    attrib_fn: Callable[[Sequence[str]], np.ndarray],
    repr_fn: Callable[[Sequence[str]], np.ndarray],
    doc_tokens: Sequence[str],
    neighborhood: Sequence[PerturbedDoc],
    eps: float = DEFAULT_EPS,
    doc_id: str = "",
) -> LipschitzResult:
    """Max of ``||phi(x_i) - phi(x_j)|| / ||x_i - x_j||`` over perturbations inside the radius.

    A perturbation is retained when its normalized representation distance
    ``d`` satisfies ``0 < d <= eps``; the ratio itself uses raw distances.
    Draws with ``d == 0`` are skipped without computing an attribution. If
    nothing is retained the result has ``value=None``.
    """
    xi = np.asarray(repr_fn(doc_tokens), dtype=np.float64).ravel()
    phi_i = None
    best, best_draw = None, None
    n_retained = n_identical = 0
    for j, pd in enumerate(neighborhood):
        if len(pd.tokens) != len(doc_tokens):
            raise ValueError("perturbation changed the document length")
        xj = np.asarray(repr_fn(pd.tokens), dtype=np.float64).ravel()
        d = normalized_distance(xi, xj)
        if d == 0:
            n_identical += 1
            continue
        if d > eps:
            continue
        if phi_i is None:
            phi_i = np.asarray(attrib_fn(doc_tokens), dtype=np.float64).ravel()
        phi_j = np.asarray(attrib_fn(pd.tokens), dtype=np.float64).ravel()
        ratio = float(np.linalg.norm(phi_i - phi_j)) / float(np.linalg.norm(xi - xj))
        n_retained += 1
        draw = pd.draw if pd.draw is not None else j
        if best is None or ratio > best:
            best, best_draw = ratio, draw
    return LipschitzResult(doc_id, best, best_draw, n_retained, len(neighborhood), n_identical)


def expand_position_attribution(scores: np.ndarray, embedded: np.ndarray) -> np.ndarray:
    """Spread each token's score along its embedding direction.

    Row ``p`` becomes ``scores[p] * e_p / ||e_p||**2`` so that its inner
    product with ``e_p`` recovers ``scores[p]``; zero embeddings get a zero row.
    """
    sq = (embedded**2).sum(axis=1)
    coef = np.divide(scores, sq, out=np.zeros_like(sq), where=sq > 0)
    return coef[:, None] * embedded


def infidelity(
    model_fn: Callable[[np.ndarray], np.ndarray],
    attribution: Attribution | np.ndarray,
    x: np.ndarray,
    noise: GaussianNoiseConfig,
    std: np.ndarray,
    seed: int | None = None,
    doc_id: str = "",
) -> InfidelityResult:
    """Monte-Carlo mean of ``(I . phi - (f(x) - f(x - I)))**2`` over Gaussian draws ``I``.

    ``x`` and ``phi`` must live in the same space; ``model_fn`` receives a
    batch stacked along a new leading axis. Position-kind attributions must
    be expanded to the embedded-sequence shape first (see
    :func:`expand_position_attribution`).
    """
    phi = attribution.scores if isinstance(attribution, Attribution) else np.asarray(attribution, dtype=np.float64)
    x = np.asarray(x, dtype=np.float64)
    phi = phi.reshape(x.shape)
    I = gaussian_perturbations(x, noise, std, seed=seed)
    fx = float(np.asarray(model_fn(x[None]), dtype=np.float64).ravel()[0])
    try:
        fxi = np.asarray(model_fn(x[None] - I), dtype=np.float64).ravel()
    except Exception as exc:
        raise RuntimeError(f"model evaluation failed on noise draws of {doc_id!r}: {exc}") from exc
    if not np.all(np.isfinite(fxi)):
        bad = int(np.flatnonzero(~np.isfinite(fxi))[0])
        raise RuntimeError(f"model returned a non-finite output on noise draw {bad} of {doc_id!r}")
    proj = I.reshape(I.shape[0], -1) @ phi.ravel()
    resid = proj - (fx - fxi)
    sq = resid**2
    se = float(sq.std(ddof=1) / np.sqrt(sq.size)) if sq.size > 1 else 0.0
    return InfidelityResult(doc_id, float(sq.mean()), noise.n_draws, noise.sigma_scale, se)


def summarize(values: Sequence[float]) -> dict:
    v = np.asarray([x for x in values if x is not None], dtype=np.float64)
    if v.size == 0:
        return {"n": 0, "median": None, "q1": None, "q3": None, "mean": None, "min": None, "max": None}
    q1, med, q3 = np.quantile(v, [0.25, 0.5, 0.75])
    return {
        "n": int(v.size),
        "median": float(med),
        "q1": float(q1),
        "q3": float(q3),
        "mean": float(v.mean()),
        "min": float(v.min()),
        "max": float(v.max()),
    }
