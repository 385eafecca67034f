"""Batch evaluation of (model, attribution method) pairs over document samples.

Every random quantity is seeded from ``(run seed, doc id, purpose)``, so
results do not depend on task order or on the number of worker processes.
"""

from __future__ import annotations

import csv
import json
import logging
import multiprocessing as mp
import os
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from . import svg
from .attributions import (
    COMPATIBILITY,
    FEATURE,
    Attribution,
    integrated_gradients,
    kernel_shap,
    lime,
    saliency,
    truth_additive,
    truth_linear,
)
from .config import MetricSettings
from .embeddings import NeighborIndex, build_neighbor_index
from .metrics import (
    InfidelityResult,
    LipschitzResult,
    expand_position_attribution,
    infidelity,
    local_lipschitz,
    summarize,
)
from .models import (
    SPARSE_VECTOR,
    AdditiveBoostingClassifier,
    ExternalModel,
    LogisticRegressionGD,
    kind_of,
    model_output,
)
from .perturb import GaussianNoiseConfig, PerturbationConfig, componentwise_std, derive_seed, make_neighborhood
from .text import Document, TfidfVectorizer
from .tradeoff import CandidatePoint, overlap_report

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class ExternalSpec:
    """Recipe for an adapter subprocess; each worker process spawns its own."""

    command: str
    timeout: float = 30.0
    name: str = "external"


@dataclass
class Pair:
    model_id: str
    method: str
    model: object
    params: dict = field(default_factory=dict)


@dataclass
class EvalContext:
    vectorizer: TfidfVectorizer
    word_index: NeighborIndex
    settings: MetricSettings
    seed: int
    model_indices: dict = field(default_factory=dict)
    mean_background: np.ndarray | None = None


class PairConfigError(ValueError):
    pass


_EXTERNAL_CACHE: dict = {}


def _resolve_model(model):
    if isinstance(model, ExternalSpec):
        key = (os.getpid(), model)
        handle = _EXTERNAL_CACHE.get(key)
        if handle is None or not handle.alive:
            handle = ExternalModel(model.command, timeout=model.timeout, name=model.name)
            _EXTERNAL_CACHE[key] = handle
        return handle
    return model


def model_kind(model) -> str:
    if isinstance(model, ExternalSpec):
        return "external"
    return kind_of(model)


def check_pair(pair: Pair) -> None:
    kind = model_kind(pair.model)
    if pair.method not in COMPATIBILITY:
        raise PairConfigError(f"pair ({pair.model_id}, {pair.method}): unknown method")
    allowed = COMPATIBILITY[pair.method]
    if kind == "external":
        if "external-sparse" in allowed:
            return
    elif kind in allowed:
        return
    raise PairConfigError(f"pair ({pair.model_id}, {pair.method}): {pair.method} cannot explain a {kind} model")


class BoundPair:
    """Representation, attribution and model-output functions for one pair."""

    def __init__(self, pair: Pair, ctx: EvalContext):
        check_pair(pair)
        self.pair = pair
        self.ctx = ctx
        self.model = _resolve_model(pair.model)
        self.kind = model_kind(pair.model)
        if self.kind == "external" and self.model.representation != SPARSE_VECTOR:
            raise PairConfigError(f"pair ({pair.model_id}, {pair.method}): adapter is not sparse-vector")
        self.token_level = self.kind == "embedding"
        self.target = "logit" if pair.method in ("truth", "saliency", "ig") else ctx.settings.target

    # representation
    def repr(self, tokens) -> np.ndarray:
        if self.token_level:
            return self.model.embed(tokens)
        return self.ctx.vectorizer.transform_one(tokens)

    @property
    def index(self) -> NeighborIndex:
        if self.token_level:
            return self.ctx.model_indices[self.pair.model_id]
        return self.ctx.word_index

    def model_fn(self, batch: np.ndarray) -> np.ndarray:
        if self.token_level:
            return np.atleast_1d(self.model.logit_from_embeddings(batch))
        return model_output(self.model, batch, self.target)

    # attribution
    def explain(self, tokens, seed: int) -> Attribution:
        p = self.pair.params
        mid = self.pair.model_id
        m = self.pair.method
        if m == "truth":
            x = self.repr(tokens)
            if isinstance(self.model, LogisticRegressionGD):
                return truth_linear(self.model, x, mid)
            if isinstance(self.model, AdditiveBoostingClassifier):
                return truth_additive(self.model, x, mid)
        if m == "lime":
            return lime(
                self.model_fn,
                self.repr(tokens),
                n_samples=p.get("n_samples", 1000),
                kernel_width=p.get("kernel_width", 0.75),
                n_report_features=p.get("n_report_features", 10),
                seed=seed,
                model_id=mid,
                target=self.target,
            )
        if m == "shap":
            x = self.repr(tokens)
            bg = None
            if p.get("background", "zero") == "mean":
                bg = self.ctx.mean_background
                if bg is None:
                    raise PairConfigError("mean background requested but none was computed")
            return kernel_shap(self.model_fn, x, n_samples=p.get("n_samples", 512), background=bg, seed=seed, model_id=mid, target=self.target)
        if m == "saliency":
            return saliency(self.model, tokens, mid)
        if m == "ig":
            return integrated_gradients(self.model, tokens, steps=p.get("steps", 32), model_id=mid)
        raise PairConfigError(f"pair ({mid}, {m}) is not supported")

    def phi_in_repr(self, tokens, attribution: Attribution) -> np.ndarray:
        if attribution.unit_kind == FEATURE:
            return attribution.scores
        return expand_position_attribution(attribution.scores, self.model.embed(tokens))


# evaluation tasks -----------------------------------------------------------


def _lipschitz_task(bp: BoundPair, doc: Document) -> LipschitzResult:
    s = bp.ctx.settings
    cfg = PerturbationConfig(pi=s.pi, k=s.k, seed=derive_seed(bp.ctx.seed, "neighborhood"))
    hood = make_neighborhood(doc, bp.index, cfg, s.m)
    attr_seed = derive_seed(bp.ctx.seed, doc.id, "attribution")
    return local_lipschitz(
        lambda toks: bp.explain(toks, attr_seed).scores,
        lambda toks: bp.repr(toks),
        doc.tokens,
        hood,
        eps=s.eps,
        doc_id=doc.id,
    )


def _infidelity_task(bp: BoundPair, doc: Document, std: np.ndarray) -> InfidelityResult:
    s = bp.ctx.settings
    attr = bp.explain(doc.tokens, derive_seed(bp.ctx.seed, doc.id, "attribution"))
    x = bp.repr(doc.tokens)
    phi = bp.phi_in_repr(doc.tokens, attr)
    noise = GaussianNoiseConfig(s.sigma_scale, derive_seed(bp.ctx.seed, doc.id, "noise"), s.n_draws, s.full_support_noise)
    res = infidelity(bp.model_fn, phi, x, noise, std, doc_id=doc.id)
    if bp.token_level:
        res.metadata["noise_mapping"] = "per-token scores spread along embedding direction"
    return res


_WORKER: dict = {}


def _run_task(task):
    kind, pair_i, doc_i = task
    st = _WORKER
    bp = st["bound"].get(pair_i)
    if bp is None:
        bp = st["bound"][pair_i] = BoundPair(st["pairs"][pair_i], st["ctx"])
    try:
        if kind == "lipschitz":
            return task, _lipschitz_task(bp, st["lip_docs"][doc_i]), None
        return task, _infidelity_task(bp, st["inf_docs"][doc_i], st["stds"][pair_i]), None
    except Exception as exc:  # isolate to this pair
        logger.debug("task %s failed", task, exc_info=True)
        return task, None, f"{type(exc).__name__}: {exc}"


@dataclass
class EvaluationRun:
    model_id: str
    method: str
    lipschitz: list[LipschitzResult]
    infidelity: list[InfidelityResult]
    config: dict
    summary: dict = field(default_factory=dict)
    failure: str | None = None

    def compute_summary(self):
        self.summary = {
            "lipschitz": {
                **summarize([r.value for r in self.lipschitz if not r.empty]),
                "n_empty": sum(r.empty for r in self.lipschitz),
            },
            "infidelity": summarize([r.value for r in self.infidelity]),
        }

    def to_json(self) -> dict:
        return {
            "model_id": self.model_id,
            "method": self.method,
            "lipschitz": [asdict(r) for r in self.lipschitz],
            "infidelity": [asdict(r) for r in self.infidelity],
            "config": self.config,
            "summary": self.summary,
            "failure": self.failure,
        }


def sample_documents(docs: Sequence[Document], n: int, seed: int, purpose: str) -> list[Document]:
    rng = np.random.default_rng(derive_seed(seed, purpose))
    order = rng.permutation(len(docs))[: min(n, len(docs))]
    return [docs[i] for i in sorted(order)]


def _noise_std(bp: BoundPair, docs: Sequence[Document]) -> np.ndarray:
    if bp.token_level:
        return componentwise_std(np.vstack([bp.model.embed(d.tokens) for d in docs]))
    return componentwise_std(bp.ctx.vectorizer.transform(docs).toarray())


def evaluate_suite(
    pairs: Sequence[Pair],
    lip_docs: Sequence[Document],
    inf_docs: Sequence[Document],
    ctx: EvalContext,
    workers: int = 1,
) -> list[EvaluationRun]:
    """Local Lipschitz on ``lip_docs`` and infidelity on ``inf_docs`` for every pair.

    Neighbor indices for embedding models are built on demand. A pair that
    cannot be bound, or whose tasks raise, is recorded as failed and the
    remaining pairs still run.
    """
    s = ctx.settings
    snapshot = {
        "pi": s.pi,
        "k": s.k,
        "eps": s.eps,
        "m": s.m,
        "n_draws": s.n_draws,
        "sigma_scale": s.sigma_scale,
        "full_support_noise": s.full_support_noise,
        "target": s.target,
        "seed": ctx.seed,
        "distance": "||xi - xj|| / ||xi|| for the radius; raw l2 in the ratio",
        "lipschitz_docs": [d.id for d in lip_docs],
        "infidelity_docs": [d.id for d in inf_docs],
    }
    runs = [EvaluationRun(p.model_id, p.method, [], [], {**snapshot, "params": p.params}) for p in pairs]
    bound, stds = {}, {}
    for i, p in enumerate(pairs):
        try:
            bp = BoundPair(p, ctx)
            if bp.token_level and p.model_id not in ctx.model_indices:
                ctx.model_indices[p.model_id] = build_neighbor_index(bp.model.embedding_table(), s.k)
            bound[i] = bp
            stds[i] = _noise_std(bp, inf_docs)
        except Exception as exc:
            runs[i].failure = f"{type(exc).__name__}: {exc}"
            logger.error("pair (%s, %s) failed to bind: %s", p.model_id, p.method, exc)
    tasks = [("lipschitz", i, j) for i in bound for j in range(len(lip_docs))]
    tasks += [("infidelity", i, j) for i in bound for j in range(len(inf_docs))]
    has_external = any(isinstance(pairs[i].model, ExternalSpec) for i in bound)
    _WORKER.clear()
    _WORKER.update(
        pairs=list(pairs),
        ctx=ctx,
        lip_docs=list(lip_docs),
        inf_docs=list(inf_docs),
        stds=stds,
        bound={} if has_external and workers > 1 else dict(bound),
    )
    if workers > 1 and tasks:
        with mp.get_context("fork").Pool(workers) as pool:
            results = pool.map(_run_task, tasks, chunksize=max(1, len(tasks) // (4 * workers)))
    else:
        results = [_run_task(t) for t in tasks]
    for (kind, i, _), res, err in results:
        run = runs[i]
        if err is not None:
            if run.failure is None:
                run.failure = err
            continue
        (run.lipschitz if kind == "lipschitz" else run.infidelity).append(res)
    for i, run in enumerate(runs):
        if run.failure is not None:
            logger.warning("pair (%s, %s) failed: %s", run.model_id, run.method, run.failure)
        run.compute_summary()
    return runs


# exports --------------------------------------------------------------------


def _fmt(v) -> str:
    return "" if v is None else repr(float(v))


def distributions(runs: Sequence[EvaluationRun]) -> list[dict]:
    out = []
    for r in runs:
        if r.failure is not None:
            continue
        out.append({"model": r.model_id, "method": r.method, "metric": "lipschitz", "values": [x.value for x in r.lipschitz if not x.empty]})
        out.append({"model": r.model_id, "method": r.method, "metric": "infidelity", "values": [x.value for x in r.infidelity]})
    return out


def write_evaluation(runs: Sequence[EvaluationRun], outdir: str | Path) -> dict[str, Path]:
    """Write evaluation.json, evaluation.csv and one boxplot SVG per metric."""
    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    paths = {
        "json": outdir / "evaluation.json",
        "csv": outdir / "evaluation.csv",
        "lipschitz_svg": outdir / "lipschitz.svg",
        "infidelity_svg": outdir / "infidelity.svg",
    }
    payload = {"runs": [r.to_json() for r in runs], "distributions": distributions(runs)}
    paths["json"].write_text(json.dumps(payload, indent=1, sort_keys=True) + "\n", encoding="utf-8")
    with open(paths["csv"], "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["model", "method", "metric", "doc_id", "value", "status"])
        for r in runs:
            for x in r.lipschitz:
                w.writerow([r.model_id, r.method, "lipschitz", x.doc_id, _fmt(x.value), "empty-neighborhood" if x.empty else "ok"])
            for x in r.infidelity:
                w.writerow([r.model_id, r.method, "infidelity", x.doc_id, _fmt(x.value), "ok"])
            if r.failure is not None:
                w.writerow([r.model_id, r.method, "", "", "", f"failed: {r.failure}"])
    ok = [r for r in runs if r.failure is None]
    paths["lipschitz_svg"].write_text(
        svg.boxplot([(f"{r.model_id} {r.method}", [x.value for x in r.lipschitz if not x.empty]) for r in ok], "Local Lipschitz", "local Lipschitz", log=True),
        encoding="utf-8",
    )
    paths["infidelity_svg"].write_text(
        svg.boxplot([(f"{r.model_id} {r.method}", [x.value for x in r.infidelity]) for r in ok], "Infidelity", "infidelity", log=True),
        encoding="utf-8",
    )
    return paths


def candidate_points(runs: Sequence[EvaluationRun], aucs: dict[str, float]) -> tuple[list[CandidatePoint], dict[str, list[str]]]:
    """Median-summarized candidates, plus what each incomplete pair lacks."""
    points, missing = [], {}
    for r in runs:
        lacks = []
        if r.failure is not None:
            lacks.append(f"failed ({r.failure})")
        if aucs.get(r.model_id) is None:
            lacks.append("auc")
        lip = r.summary.get("lipschitz", {}).get("median")
        inf = r.summary.get("infidelity", {}).get("median")
        if lip is None:
            lacks.append("lipschitz")
        if inf is None:
            lacks.append("infidelity")
        if lacks:
            missing[f"{r.model_id} {r.method}"] = lacks
            continue
        points.append(CandidatePoint(r.model_id, r.method, float(aucs[r.model_id]), inf, lip))
    return points, missing


def overlap_summary(
    pairs: Sequence[Pair],
    docs: Sequence[Document],
    ctx: EvalContext,
    top_k: int = 10,
) -> list[dict]:
    """Mean truth-vs-surrogate top-k overlap per model with a truth pair."""
    by_model: dict[str, dict[str, Pair]] = {}
    for p in pairs:
        by_model.setdefault(p.model_id, {})[p.method] = p
    out = []
    for model_id, methods in by_model.items():
        if "truth" not in methods:
            continue
        truth_bp = BoundPair(methods["truth"], ctx)
        for method in ("shap", "lime"):
            if method not in methods:
                continue
            bp = BoundPair(methods[method], ctx)
            overlaps, rhos = [], []
            for d in docs:
                seed = derive_seed(ctx.seed, d.id, "attribution")
                rep = overlap_report(truth_bp.explain(d.tokens, seed), bp.explain(d.tokens, seed), top_k)
                overlaps.append(rep["overlap"])
                if rep["rank_correlation"] is not None:
                    rhos.append(rep["rank_correlation"])
            out.append(
                {
                    "model": model_id,
                    "surrogate": method,
                    "top_k": top_k,
                    "mean_overlap": float(np.mean(overlaps)),
                    "mean_rank_correlation": float(np.mean(rhos)) if rhos else None,
                    "n_docs": len(docs),
                }
            )
    return out
