"""Local explanation methods.

Feature-kind attributions live in the vectorizer's feature space (length V);
position-kind attributions have one score per token of the explained
document. ``model_fn`` arguments are callables mapping a 2-D batch of
feature rows to a 1-D array of outputs.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
import scipy.sparse as sp

from .models import (
    AdditiveBoostingClassifier,
    EmbeddingBagClassifier,
    LogisticRegressionGD,
)
from .text import SparseVector

FEATURE = "feature"
POSITION = "token-position"

ModelFn = Callable[[np.ndarray], np.ndarray]


class DegenerateSamplingError(ValueError):
    pass


@dataclass
class Attribution:
    unit_kind: str
    scores: np.ndarray
    method: str
    model_id: str = ""
    target: str = "logit"
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        self.scores = np.asarray(self.scores, dtype=np.float64).ravel()
        if self.unit_kind not in (FEATURE, POSITION):
            raise ValueError(f"unknown unit kind {self.unit_kind!r}")
        if not np.all(np.isfinite(self.scores)):
            raise ValueError(f"{self.method}: non-finite attribution scores")

    def scaled(self, c: float) -> "Attribution":
        return Attribution(self.unit_kind, c * self.scores, self.method, self.model_id, self.target, dict(self.metadata))

    def to_json(self) -> dict:
        if self.unit_kind == FEATURE:
            scores = SparseVector.from_dense(self.scores).to_json()
        else:
            scores = self.scores.tolist()
        return {
            "unit_kind": self.unit_kind,
            "scores": scores,
            "method": self.method,
            "model_id": self.model_id,
            "target": self.target,
            "metadata": self.metadata,
        }

    @classmethod
    def from_json(cls, d: dict) -> "Attribution":
        scores = d["scores"]
        if isinstance(scores, dict):
            scores = SparseVector.from_json(scores).to_dense()
        return cls(d["unit_kind"], scores, d["method"], d.get("model_id", ""), d.get("target", "logit"), d.get("metadata", {}))


def _dense(x) -> np.ndarray:
    if isinstance(x, SparseVector):
        return x.to_dense()
    if sp.issparse(x):
        return x.toarray().ravel()
    return np.asarray(x, dtype=np.float64).ravel()


def truth_linear(model: LogisticRegressionGD, x, model_id: str = "") -> Attribution:
    """Exact contribution ``w_i * x_i`` of each feature to the logit."""
    x = _dense(x)
    if x.size != model.coef_.size:
        raise ValueError("dimension mismatch between model and input")
    return Attribution(FEATURE, model.coef_ * x, "truth", model_id, "logit", {"intercept": model.intercept_})


def truth_additive(model: AdditiveBoostingClassifier, x, model_id: str = "") -> Attribution:
    """Shape-function value of each feature; scores plus intercept give the logit."""
    x = _dense(x)
    if x.size != model.n_features_in_:
        raise ValueError("dimension mismatch between model and input")
    scores = model.shape_values(x.reshape(1, -1))[0]
    return Attribution(FEATURE, scores, "truth", model_id, "logit", {"intercept": model.intercept_})


def _all_masks(m: int) -> np.ndarray:
    ints = np.arange(2**m, dtype=np.int64)
    return ((ints[:, None] >> np.arange(m)) & 1).astype(np.float64)


def weighted_ridge(Z: np.ndarray, y: np.ndarray, w: np.ndarray, alpha: float) -> tuple[np.ndarray, float]:
    """Ridge with an unpenalized intercept, solved on weighted-centered data."""
    sw = w.sum()
    zbar = w @ Z / sw
    ybar = float(w @ y / sw)
    Zc = Z - zbar
    yc = y - ybar
    A = Zc.T @ (w[:, None] * Zc) + alpha * np.eye(Z.shape[1])
    coef = np.linalg.solve(A, Zc.T @ (w * yc))
    return coef, ybar - float(zbar @ coef)


def lime(
    model_fn: ModelFn,
    x,
    n_samples: int = 1000,
    kernel_width: float = 0.75,
    n_report_features: int = 10,
    seed: int = 0,
    exhaustive: bool | None = None,
    alpha: float = 1e-3,
    model_id: str = "",
    target: str = "logit",
) -> Attribution:
    """Weighted ridge surrogate over presence masks of the instance's nonzero features.

    The first sample is the unmasked instance; the rest keep each feature
    with probability 1/2. With ``exhaustive=True`` (or ``None`` and
    ``2**m <= n_samples``) all ``2**m`` masks are used instead. Masked
    vectors are l2-renormalized before being scored, and weighted by
    ``exp(-d**2 / kernel_width**2)`` with ``d`` the cosine distance to ``x``.
    Only the ``n_report_features`` largest coefficients by magnitude are kept.
    """
    x = _dense(x)
    active = np.flatnonzero(x)
    m = active.size
    if m == 0:
        raise ValueError("LIME needs at least one nonzero feature")
    if exhaustive is None:
        exhaustive = m <= 20 and 2**m <= n_samples
    if exhaustive:
        if m > 20:
            raise ValueError(f"refusing to enumerate 2**{m} masks")
        Z = _all_masks(m)
    else:
        rng = np.random.default_rng(seed)
        Z = (rng.random((n_samples, m)) < 0.5).astype(np.float64)
        Z[0] = 1.0
    if np.all(Z == Z[0]):
        raise DegenerateSamplingError("all sampled masks are identical; increase n_samples")
    rows = np.zeros((Z.shape[0], x.size))
    rows[:, active] = Z * x[active]
    norms = np.linalg.norm(rows, axis=1)
    nz = norms > 0
    rows[nz] /= norms[nz, None]
    x_norm = float(np.linalg.norm(x))
    cos = np.where(nz, rows @ x / x_norm, 0.0)
    dist = 1.0 - cos
    w = np.exp(-(dist**2) / kernel_width**2)
    y = np.asarray(model_fn(rows), dtype=np.float64).ravel()
    coef, intercept = weighted_ridge(Z, y, w, alpha)
    pred = Z @ coef + intercept
    ybar = float(w @ y / w.sum())
    ss_tot = float(w @ (y - ybar) ** 2)
    r2 = 1.0 - float(w @ (y - pred) ** 2) / ss_tot if ss_tot > 0 else 1.0
    if n_report_features is not None and n_report_features < m:
        keep = np.argsort(-np.abs(coef), kind="stable")[:n_report_features]
        trimmed = np.zeros_like(coef)
        trimmed[keep] = coef[keep]
        coef = trimmed
    scores = np.zeros(x.size)
    scores[active] = coef
    meta = {
        "n_samples": int(Z.shape[0]),
        "kernel_width": kernel_width,
        "n_report_features": n_report_features,
        "seed": seed,
        "exhaustive": bool(exhaustive),
        "ridge_alpha": alpha,
        "surrogate_intercept": intercept,
        "surrogate_r2": r2,
    }
    return Attribution(FEATURE, scores, "lime", model_id, target, meta)


def shapley_kernel_weight(m: int, s: np.ndarray) -> np.ndarray:
    s = np.asarray(s, dtype=np.float64)
    comb = np.array([math.comb(m, int(k)) for k in s], dtype=np.float64)
    return (m - 1) / (comb * s * (m - s))


def _coalition_rows(x: np.ndarray, bg: np.ndarray, active: np.ndarray, Z: np.ndarray) -> np.ndarray:
    rows = np.tile(x, (Z.shape[0], 1))
    rows[:, active] = bg[active] + Z * (x[active] - bg[active])
    return rows


def _eval_batched(model_fn: ModelFn, make_rows, n: int, batch: int = 4096) -> np.ndarray:
    out = np.empty(n)
    for start in range(0, n, batch):
        stop = min(n, start + batch)
        out[start:stop] = np.asarray(model_fn(make_rows(start, stop)), dtype=np.float64).ravel()
    return out


def kernel_shap(
    model_fn: ModelFn,
    x,
    n_samples: int = 512,
    background=None,
    seed: int = 0,
    exhaustive: bool | None = None,
    model_id: str = "",
    target: str = "logit",
) -> Attribution:
    """Kernel SHAP with the efficiency constraint imposed exactly.

    Players are the coordinates where ``x`` differs from ``background``
    (the zero vector by default); absent players take background values.
    With ``2**m - 2 <= n_samples`` every proper coalition is enumerated with
    its Shapley-kernel weight, which recovers exact Shapley values.
    Otherwise coalition sizes are drawn proportionally to the kernel and
    each draw is paired with its complement, all with unit weight.
    """
    x = _dense(x)
    bg = np.zeros_like(x) if background is None else _dense(background)
    if bg.size != x.size:
        raise ValueError("background and x differ in dimension")
    active = np.flatnonzero(x != bg)
    m = active.size
    fx, f0 = np.asarray(model_fn(np.vstack([x, bg])), dtype=np.float64).ravel()
    delta = fx - f0
    meta = {"n_samples": n_samples, "seed": seed, "n_players": int(m), "f_x": float(fx), "f_background": float(f0)}
    scores = np.zeros(x.size)
    if m == 0:
        return Attribution(FEATURE, scores, "shap", model_id, target, {**meta, "exhaustive": True})
    if m == 1:
        scores[active] = delta
        return Attribution(FEATURE, scores, "shap", model_id, target, {**meta, "exhaustive": True})
    if exhaustive is None:
        exhaustive = m <= 30 and 2**m - 2 <= n_samples
    if exhaustive:
        if m > 20:
            raise ValueError(f"refusing to enumerate 2**{m} coalitions")
        Z = _all_masks(m)[1:-1]
        w = shapley_kernel_weight(m, Z.sum(axis=1))
    else:
        if n_samples < 2:
            raise DegenerateSamplingError("need at least 2 coalition samples")
        rng = np.random.default_rng(seed)
        sizes = np.arange(1, m)
        p = (m - 1) / (sizes * (m - sizes))
        p /= p.sum()
        n_pairs = (n_samples + 1) // 2
        draw = rng.choice(sizes, size=n_pairs, p=p)
        Z = np.zeros((2 * n_pairs, m))
        for i, s in enumerate(draw):
            Z[2 * i, rng.permutation(m)[:s]] = 1.0
            Z[2 * i + 1] = 1.0 - Z[2 * i]
        Z = Z[:n_samples]
        w = np.ones(Z.shape[0])
        if np.all(Z == Z[0]):
            raise DegenerateSamplingError("all sampled coalitions are identical; increase n_samples")
    y = _eval_batched(model_fn, lambda a, b: _coalition_rows(x, bg, active, Z[a:b]), Z.shape[0]) - f0
    # substitute phi_last = delta - sum(others) and solve the reduced WLS
    A = Z[:, :-1] - Z[:, -1:]
    t = y - Z[:, -1] * delta
    sw = np.sqrt(w)
    phi_head, *_ = np.linalg.lstsq(A * sw[:, None], t * sw, rcond=None)
    phi = np.append(phi_head, delta - phi_head.sum())
    scores[active] = phi
    meta.update(exhaustive=bool(exhaustive), n_coalitions=int(Z.shape[0]))
    return Attribution(FEATURE, scores, "shap", model_id, target, meta)


def exact_shapley(
    model_fn: ModelFn,
    x,
    background=None,
    max_features: int = 15,
    model_id: str = "",
    target: str = "logit",
) -> Attribution:
    """Shapley values by enumerating all ``2**m`` coalitions of the differing coordinates."""
    x = _dense(x)
    bg = np.zeros_like(x) if background is None else _dense(background)
    active = np.flatnonzero(x != bg)
    m = active.size
    if m > max_features:
        raise ValueError(f"exact Shapley refused: {m} players exceeds the limit of {max_features}")
    scores = np.zeros(x.size)
    if m == 0:
        return Attribution(FEATURE, scores, "exact_shapley", model_id, target, {})
    Z = _all_masks(m)
    v = _eval_batched(model_fn, lambda a, b: _coalition_rows(x, bg, active, Z[a:b]), Z.shape[0])
    ints = np.arange(2**m)
    size = Z.sum(axis=1).astype(np.int64)
    fact = [math.factorial(k) for k in range(m + 1)]
    weight_by_size = np.array([fact[s] * fact[m - s - 1] / fact[m] if s < m else 0.0 for s in range(m + 1)])
    for i in range(m):
        bit = 1 << i
        without = ints[(ints & bit) == 0]
        scores[active[i]] = float(np.sum(weight_by_size[size[without]] * (v[without | bit] - v[without])))
    return Attribution(FEATURE, scores, "exact_shapley", model_id, target, {"n_players": int(m)})


def saliency(model: EmbeddingBagClassifier, tokens, model_id: str = "") -> Attribution:
    """l2 norm of each position's logit gradient w.r.t. its embedding."""
    if len(tokens) == 0:
        raise ValueError("empty token sequence")
    G = model.gradient_wrt_embeddings(tokens)
    return Attribution(POSITION, np.linalg.norm(G, axis=1), "saliency", model_id, "logit", {"aggregation": "l2-norm"})


def integrated_gradients(
    model: EmbeddingBagClassifier,
    tokens,
    steps: int = 32,
    baseline: np.ndarray | None = None,
    model_id: str = "",
) -> Attribution:
    """Midpoint-rule integrated gradients in embedding space, summed over dimensions per token."""
    if steps < 8:
        raise ValueError("steps must be >= 8")
    if len(tokens) == 0:
        raise ValueError("empty token sequence")
    E = model.embed(tokens)
    B = np.zeros_like(E) if baseline is None else np.asarray(baseline, dtype=np.float64)
    if B.shape != E.shape:
        raise ValueError("baseline shape must match the embedded sequence")
    avg = np.zeros_like(E)
    for k in range(steps):
        alpha = (k + 0.5) / steps
        avg += model.gradient_wrt_embeddings(B + alpha * (E - B))
    avg /= steps
    scores = ((E - B) * avg).sum(axis=1)
    residual = abs(float(scores.sum()) - (model.logit_from_embeddings(E) - model.logit_from_embeddings(B)))
    meta = {"steps": steps, "baseline": "zeros" if baseline is None else "custom", "aggregation": "signed-sum", "completeness_residual": residual}
    return Attribution(POSITION, scores, "ig", model_id, "logit", meta)


# method -> model kinds it can explain
COMPATIBILITY = {
    "truth": {"logistic", "additive"},
    "lime": {"logistic", "additive", "forest", "external-sparse"},
    "shap": {"logistic", "additive", "forest", "external-sparse"},
    "saliency": {"embedding"},
    "ig": {"embedding"},
}


def top_k(scores: np.ndarray, k: int) -> list[int]:
    return [int(i) for i in np.argsort(-np.abs(scores), kind="stable")[:k]]


__all__ = [
    "Attribution",
    "COMPATIBILITY",
    "DegenerateSamplingError",
    "FEATURE",
    "POSITION",
    "exact_shapley",
    "integrated_gradients",
    "kernel_shap",
    "lime",
    "saliency",
    "shapley_kernel_weight",
    "top_k",
    "truth_additive",
    "truth_linear",
    "weighted_ridge",
]
