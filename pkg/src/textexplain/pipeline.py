"""End-to-end orchestration behind the CLI subcommands."""

from __future__ import annotations

import json
import logging
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .config import RunConfig
from .embeddings import build_neighbor_index, load_embeddings, save_embeddings, train_embeddings
from .evaluation import (
    EvalContext,
    ExternalSpec,
    Pair,
    candidate_points,
    evaluate_suite,
    overlap_summary,
    sample_documents,
    write_evaluation,
)
from .models import (
    AdditiveBoostingClassifier,
    EmbeddingBagClassifier,
    ExternalModel,
    LogisticRegressionGD,
    RandomForestGini,
    load_model,
    predict_positive,
    save_model,
)
from .perturb import PerturbationConfig, derive_seed, in_neighbor_lists, make_neighborhood
from .text import TfidfVectorizer, read_corpus
from .tradeoff import auc, frontier_report, read_candidates, write_candidates, write_frontier_report

logger = logging.getLogger(__name__)

SPARSE_TRAINERS = {
    "logistic": LogisticRegressionGD,
    "additive": AdditiveBoostingClassifier,
    "forest": RandomForestGini,
}


@dataclass
class StageResult:
    outputs: dict = field(default_factory=dict)
    failures: dict = field(default_factory=dict)

    @property
    def partial(self) -> bool:
        return bool(self.failures)


def _write_json(path: Path, obj) -> None:
    path.write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def _labels(docs) -> np.ndarray:
    return np.array([d.label for d in docs], dtype=np.int64)


def _model_seed(cfg: RunConfig, model_id: str) -> int:
    return derive_seed(cfg.seed, "model", model_id)


def prepare_text(cfg: RunConfig, outdir: Path):
    train = read_corpus(cfg.train_corpus, prefix="train:")
    test = read_corpus(cfg.test_corpus, prefix="test:")
    vs = cfg.vectorizer
    vec = TfidfVectorizer(vs.min_df, vs.max_features, tuple(vs.ngram_range)).fit(train)
    _write_json(outdir / "vectorizer.json", vec.to_dict())
    if cfg.embeddings.path is not None:
        table = load_embeddings(cfg.embeddings.path, vocabulary=vec.vocabulary_)
    else:
        es = cfg.embeddings
        table = train_embeddings(train, dim=es.dim, window=es.window, min_count=es.min_count)
    save_embeddings(table, outdir / "embeddings.txt")
    return train, test, vec, table


def train(cfg: RunConfig, log=print) -> StageResult:
    """Fit the vectorizer, embeddings and every configured model; score test AUC."""
    outdir = Path(cfg.output_dir)
    (outdir / "models").mkdir(parents=True, exist_ok=True)
    train_docs, test_docs, vec, table = prepare_text(cfg, outdir)
    Xtr, Xte = vec.transform(train_docs), vec.transform(test_docs)
    ytr, yte = _labels(train_docs), _labels(test_docs)
    result = StageResult()
    aucs: dict[str, float | None] = {}
    logs: dict[str, dict] = {}
    for spec in cfg.models:
        t0 = time.perf_counter()
        try:
            params = {"seed": _model_seed(cfg, spec.id), **spec.params}
            if spec.kind in SPARSE_TRAINERS:
                model = SPARSE_TRAINERS[spec.kind](**params).fit(Xtr, ytr)
                scores = predict_positive(model, Xte)
            elif spec.kind == "embedding":
                model = EmbeddingBagClassifier(table=table, **params).fit(train_docs, ytr)
                scores = predict_positive(model, test_docs)
            else:
                with ExternalModel(spec.command, timeout=spec.timeout) as ext:
                    scores = predict_positive(ext, Xte if ext.representation == "sparse-vector" else test_docs)
                model = None
            if model is not None:
                path = outdir / "models" / f"{spec.id}.json"
                save_model(model, path)
                result.outputs[spec.id] = path
            aucs[spec.id] = auc(scores, yte)
            logs[spec.id] = {
                "kind": spec.kind,
                "params": {k: v for k, v in params.items()} if spec.kind != "external" else {"command": spec.command},
                "loss_curve": list(getattr(model, "loss_curve_", [])),
                "test_auc": aucs[spec.id],
            }
            logger.info("trained %s in %.1fs", spec.id, time.perf_counter() - t0)
        except Exception as exc:
            result.failures[spec.id] = f"{type(exc).__name__}: {exc}"
            logger.error("model %s failed: %s", spec.id, exc)
    _write_json(outdir / "auc.json", aucs)
    _write_json(outdir / "training_log.json", logs)
    lines = ["Model                AUC", "-------------------  ------"]
    for spec in cfg.models:
        a = aucs.get(spec.id)
        lines.append(f"{spec.id:<19}  {'failed' if a is None else f'{100 * a:.2f}'}")
    log("\n".join(lines))
    return result


def load_artifacts(cfg: RunConfig):
    outdir = Path(cfg.output_dir)
    if not (outdir / "vectorizer.json").exists():
        raise FileNotFoundError(f"no trained artifacts under {outdir}; run 'train' first")
    vec = TfidfVectorizer.from_dict(json.loads((outdir / "vectorizer.json").read_text(encoding="utf-8")))
    table = load_embeddings(outdir / "embeddings.txt")
    models = {}
    for spec in cfg.models:
        if spec.kind == "external":
            models[spec.id] = ExternalSpec(spec.command, spec.timeout, spec.id)
            continue
        path = outdir / "models" / f"{spec.id}.json"
        if path.exists():
            models[spec.id] = load_model(path)
    aucs = json.loads((outdir / "auc.json").read_text(encoding="utf-8")) if (outdir / "auc.json").exists() else {}
    return vec, table, models, aucs


def evaluate(cfg: RunConfig, workers: int = 1, log=print) -> StageResult:
    """Run both metrics for every configured pair and write the exports."""
    outdir = Path(cfg.output_dir)
    vec, table, models, aucs = load_artifacts(cfg)
    test_docs = read_corpus(cfg.test_corpus, prefix="test:")
    s = cfg.metrics
    result = StageResult()
    pairs = []
    for model_id, method in cfg.resolved_pairs():
        if model_id not in models:
            result.failures[f"{model_id} {method}"] = "model artifact missing"
            continue
        pairs.append(Pair(model_id, method, models[model_id], cfg.attribution_params(method)))
    ctx = EvalContext(vec, build_neighbor_index(table, s.k), s, cfg.seed)
    if any(p.method == "shap" and p.params.get("background") == "mean" for p in pairs):
        train_docs = read_corpus(cfg.train_corpus, prefix="train:")
        ctx.mean_background = np.asarray(vec.transform(train_docs).mean(axis=0)).ravel()
    lip_docs = sample_documents(test_docs, s.lipschitz_docs, cfg.seed, "lipschitz-sample")
    inf_docs = sample_documents(test_docs, s.infidelity_docs, cfg.seed, "infidelity-sample")
    runs = evaluate_suite(pairs, lip_docs, inf_docs, ctx, workers=workers)
    for r in runs:
        r.config["run"] = cfg.snapshot()
    result.outputs.update(write_evaluation(runs, outdir))
    for r in runs:
        if r.failure is not None:
            result.failures[f"{r.model_id} {r.method}"] = r.failure
    points, missing = candidate_points(runs, aucs)
    write_candidates(points, outdir / "candidates.csv")
    result.outputs["candidates"] = outdir / "candidates.csv"
    _write_json(outdir / "candidates_missing.json", missing)
    try:
        ov = overlap_summary(pairs, lip_docs, ctx, s.overlap_top_k)
    except Exception as exc:
        ov = []
        logger.warning("overlap report failed: %s", exc)
    _write_json(outdir / "overlap.json", ov)
    for r in runs:
        lip, inf = r.summary["lipschitz"], r.summary["infidelity"]
        status = "FAILED " + r.failure if r.failure else (
            f"lipschitz median={_g(lip['median'])} (n={lip['n']}, empty={lip['n_empty']})  "
            f"infidelity median={_g(inf['median'])} (n={inf['n']})"
        )
        log(f"{r.model_id:<12} {r.method:<9} {status}")
    for o in ov:
        log(f"overlap {o['model']} truth vs {o['surrogate']}: top-{o['top_k']} mean overlap {o['mean_overlap']:.2f}")
    return result


def _g(v) -> str:
    return "n/a" if v is None else f"{v:.6g}"


def frontier(cfg: RunConfig | None = None, candidates_path: Path | None = None, outdir: Path | None = None, log=print) -> dict:
    """Pareto frontier and weighted ranking from candidates.csv (or a supplied CSV)."""
    if candidates_path is None:
        if cfg is None:
            raise ValueError("need a config or a candidates file")
        candidates_path = Path(cfg.output_dir) / "candidates.csv"
        missing_path = Path(cfg.output_dir) / "candidates_missing.json"
        missing = json.loads(missing_path.read_text(encoding="utf-8")) if missing_path.exists() else {}
        if missing:
            detail = "; ".join(f"{k}: lacks {', '.join(v)}" for k, v in sorted(missing.items()))
            raise ValueError(f"incomplete metric columns: {detail}")
    if not Path(candidates_path).exists():
        raise FileNotFoundError(f"{candidates_path} not found; run 'evaluate' first")
    points = read_candidates(candidates_path)
    if not points:
        raise ValueError(f"{candidates_path} holds no candidates")
    fs = cfg.frontier if cfg is not None else None
    objectives = [tuple(o) for o in fs.objectives] if fs else [("auc", "max"), ("infidelity", "min")]
    weights = dict(fs.weights) if fs else {"auc": 1.0, "infidelity": 1.0, "lipschitz": 1.0}
    constraints = {k: tuple(v) for k, v in fs.constraints.items()} if fs else {}
    report = frontier_report(points, objectives, weights, constraints)
    outdir = Path(outdir or (cfg.output_dir if cfg else Path(candidates_path).parent))
    paths = write_frontier_report(report, outdir)
    log(paths["table"].read_text(encoding="utf-8").rstrip())
    report["paths"] = paths
    return report


def perturb_dump(cfg: RunConfig, doc_id: str, n: int) -> list[str]:
    """TSV lines ``doc_id, draw, replaced positions, tokens`` for ``n`` perturbations of one document."""
    outdir = Path(cfg.output_dir)
    docs = {d.id: d for d in read_corpus(cfg.test_corpus, prefix="test:")}
    docs.update({d.id: d for d in read_corpus(cfg.train_corpus, prefix="train:")})
    if doc_id not in docs:
        raise KeyError(f"unknown document id {doc_id!r} (ids look like 'train:12' or 'test:3')")
    emb_path = outdir / "embeddings.txt"
    if emb_path.exists():
        table = load_embeddings(emb_path)
    elif cfg.embeddings.path is not None:
        table = load_embeddings(cfg.embeddings.path)
    else:
        es = cfg.embeddings
        table = train_embeddings(list(docs.values()), es.dim, es.window, es.min_count)
    s = cfg.metrics
    index = build_neighbor_index(table, s.k)
    pcfg = PerturbationConfig(pi=s.pi, k=s.k, seed=derive_seed(cfg.seed, "neighborhood"))
    doc = docs[doc_id]
    lines = []
    for pd in make_neighborhood(doc, index, pcfg, n):
        assert in_neighbor_lists(doc.tokens, pd, index, s.k)
        lines.append(f"{doc_id}\t{pd.draw}\t{','.join(map(str, pd.replaced_positions))}\t{' '.join(pd.tokens)}")
    return lines
