"""Performance-vs-explanation-quality tradeoff analysis."""

from __future__ import annotations

import csv
import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np
from scipy.stats import rankdata, spearmanr

from . import svg
from .attributions import FEATURE, Attribution, top_k

MAXIMIZE = "max"
MINIMIZE = "min"
DEFAULT_DIRECTIONS = {"auc": MAXIMIZE, "infidelity": MINIMIZE, "lipschitz": MINIMIZE}
OBJECTIVE_FIELDS = ("auc", "infidelity", "lipschitz")


def auc(scores, labels) -> float:
    """Mann-Whitney AUC: P(score_pos > score_neg) + 0.5 P(tie), computed from average ranks."""
    s = np.asarray(scores, dtype=np.float64).ravel()
    y = np.asarray(labels).ravel()
    if s.shape != y.shape:
        raise ValueError("scores and labels differ in length")
    pos = y == 1
    n_pos = int(pos.sum())
    n_neg = int((y == 0).sum())
    if n_pos + n_neg != y.size:
        raise ValueError("labels must be 0/1")
    if n_pos == 0 or n_neg == 0:
        raise ValueError("AUC needs both classes")
    ranks = rankdata(s, method="average")
    u = float(ranks[pos].sum()) - n_pos * (n_pos + 1) / 2.0
    return u / (n_pos * n_neg)


@dataclass(frozen=True)
class CandidatePoint:
    model_id: str
    method: str
    auc: float
    infidelity: float
    lipschitz: float

    def __post_init__(self):
        for name in OBJECTIVE_FIELDS:
            v = getattr(self, name)
            if v is None or not math.isfinite(v):
                raise ValueError(f"{self.label}: {name} must be finite, got {v!r}")
        if not 0.0 <= self.auc <= 1.0:
            raise ValueError(f"{self.label}: auc must be in [0, 1]")
        if self.infidelity < 0 or self.lipschitz < 0:
            raise ValueError(f"{self.label}: metric values must be non-negative")

    @property
    def label(self) -> str:
        return f"{self.model_id} {self.method}"


@dataclass
class ParetoResult:
    optimal: list[CandidatePoint]
    dominated: list[tuple[CandidatePoint, CandidatePoint]]  # (point, a point dominating it)
    objectives: list[tuple[str, str]] = field(default_factory=list)


def _oriented(p: CandidatePoint, objectives) -> tuple[float, ...]:
    # larger is better after orientation
    return tuple(getattr(p, f) if d == MAXIMIZE else -getattr(p, f) for f, d in objectives)


def dominates(a: Sequence[float], b: Sequence[float]) -> bool:
    return all(x >= y for x, y in zip(a, b)) and any(x > y for x, y in zip(a, b))


def pareto_frontier(points: Sequence[CandidatePoint], objectives=(("auc", MAXIMIZE), ("infidelity", MINIMIZE))) -> ParetoResult:
    """Exhaustive pairwise dominance scan; the witness is the first dominating point in input order."""
    objectives = [(f, d) for f, d in objectives]
    for f, d in objectives:
        if f not in OBJECTIVE_FIELDS or d not in (MAXIMIZE, MINIMIZE):
            raise ValueError(f"bad objective ({f!r}, {d!r})")
    if not points:
        raise ValueError("need at least one point")
    vecs = [_oriented(p, objectives) for p in points]
    optimal, dominated = [], []
    for i, p in enumerate(points):
        witness = next((points[j] for j in range(len(points)) if j != i and dominates(vecs[j], vecs[i])), None)
        if witness is None:
            optimal.append(p)
        else:
            dominated.append((p, witness))
    return ParetoResult(optimal, dominated, objectives)


@dataclass
class RankingResult:
    ranked: list[tuple[int, CandidatePoint, float]]  # (rank, point, weighted score)
    excluded: list[tuple[CandidatePoint, str]]

    @property
    def empty(self) -> bool:
        return not self.ranked


def weighted_rank(
    points: Sequence[CandidatePoint],
    weights: dict[str, float],
    constraints: dict[str, tuple[float | None, float | None]] | None = None,
    directions: dict[str, str] | None = None,
) -> RankingResult:
    """Rank by a weighted sum of min-max normalized, direction-oriented objectives.

    Points violating a ``(low, high)`` constraint are excluded first; the
    normalization runs over the survivors. Equal scores share a rank and are
    ordered by ``(model_id, method)``.
    """
    directions = {**DEFAULT_DIRECTIONS, **(directions or {})}
    if any(w < 0 for w in weights.values()) or not any(w > 0 for w in weights.values()):
        raise ValueError("weights must be non-negative and not all zero")
    for f in list(weights) + list(constraints or {}):
        if f not in OBJECTIVE_FIELDS:
            raise ValueError(f"unknown objective {f!r}")
    kept, excluded = [], []
    for p in points:
        reason = None
        for f, (lo, hi) in (constraints or {}).items():
            v = getattr(p, f)
            if lo is not None and v < lo:
                reason = f"{f}={v:g} < {lo:g}"
            elif hi is not None and v > hi:
                reason = f"{f}={v:g} > {hi:g}"
            if reason:
                break
        if reason:
            excluded.append((p, reason))
        else:
            kept.append(p)
    if not kept:
        return RankingResult([], excluded)
    total = np.zeros(len(kept))
    for f, w in weights.items():
        if w == 0:
            continue
        col = np.array([getattr(p, f) for p in kept], dtype=np.float64)
        if directions[f] == MINIMIZE:
            col = -col
        lo, hi = col.min(), col.max()
        norm = (col - lo) / (hi - lo) if hi > lo else np.zeros_like(col)
        total += w * norm
    order = sorted(range(len(kept)), key=lambda i: (-total[i], kept[i].model_id, kept[i].method))
    ranked = []
    for pos, i in enumerate(order):
        if pos > 0 and total[i] == ranked[-1][2]:
            rank = ranked[-1][0]
        else:
            rank = pos + 1
        ranked.append((rank, kept[i], float(total[i])))
    return RankingResult(ranked, excluded)


def overlap_report(truth: Attribution, surrogate: Attribution, top_k_features: int = 10) -> dict:
    """Top-k (by |score|) overlap and Spearman correlation of signed scores over the union."""
    if truth.unit_kind != FEATURE or surrogate.unit_kind != FEATURE:
        raise ValueError("overlap needs feature-kind attributions")
    if truth.scores.size != surrogate.scores.size:
        raise ValueError("attributions live in different feature spaces")
    a = top_k(truth.scores, top_k_features)
    b = top_k(surrogate.scores, top_k_features)
    union = sorted(set(a) | set(b))
    rho = None
    if len(union) >= 2:
        ta, sb = truth.scores[union], surrogate.scores[union]
        if np.ptp(ta) > 0 and np.ptp(sb) > 0:
            rho = float(spearmanr(ta, sb).statistic)
    return {
        "top_k": top_k_features,
        "overlap": len(set(a) & set(b)),
        "truth_top": a,
        "surrogate_top": b,
        "rank_correlation": rho,
        "truth_method": truth.method,
        "surrogate_method": surrogate.method,
    }


def read_candidates(path: str | Path) -> list[CandidatePoint]:
    """Read a ``model,method,auc,infidelity,lipschitz`` CSV."""
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        missing = [c for c in ("model", "method", *OBJECTIVE_FIELDS) if c not in (reader.fieldnames or [])]
        if missing:
            raise ValueError(f"{path}: missing columns {missing}")
        return [
            CandidatePoint(r["model"], r["method"], float(r["auc"]), float(r["infidelity"]), float(r["lipschitz"]))
            for r in reader
        ]


def write_candidates(points: Iterable[CandidatePoint], path: str | Path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["model", "method", *OBJECTIVE_FIELDS])
        for p in points:
            w.writerow([p.model_id, p.method, repr(p.auc), repr(p.infidelity), repr(p.lipschitz)])


def format_table(points: Sequence[CandidatePoint], pareto: ParetoResult | None = None) -> str:
    opt = {(p.model_id, p.method) for p in (pareto.optimal if pareto else [])}
    rows = [("Model", "Attribution", "AUC", "Infidelity", "Lipschitz", "Frontier")]
    for p in points:
        rows.append((p.model_id, p.method, f"{100 * p.auc:.2f}", f"{p.infidelity:.6f}", f"{p.lipschitz:.6f}", "*" if (p.model_id, p.method) in opt else ""))
    widths = [max(len(r[i]) for r in rows) for i in range(len(rows[0]))]
    lines = ["  ".join(c.ljust(wd) for c, wd in zip(r, widths)).rstrip() for r in rows]
    lines.insert(1, "  ".join("-" * wd for wd in widths))
    return "\n".join(lines) + "\n"


def frontier_report(
    points: Sequence[CandidatePoint],
    objectives=(("auc", MAXIMIZE), ("infidelity", MINIMIZE)),
    weights: dict[str, float] | None = None,
    constraints: dict | None = None,
) -> dict:
    pareto = pareto_frontier(points, objectives)
    report = {
        "objectives": [list(o) for o in pareto.objectives],
        "points": [asdict(p) for p in points],
        "optimal": [asdict(p) for p in pareto.optimal],
        "dominated": [{"point": asdict(p), "witness": asdict(w)} for p, w in pareto.dominated],
    }
    if weights:
        rr = weighted_rank(points, weights, constraints)
        report["ranking"] = {
            "weights": weights,
            "constraints": {k: list(v) for k, v in (constraints or {}).items()},
            "ranked": [{"rank": r, "point": asdict(p), "score": s} for r, p, s in rr.ranked],
            "excluded": [{"point": asdict(p), "reason": why} for p, why in rr.excluded],
            "empty": rr.empty,
        }
        if rr.empty:
            report["ranking"]["explanation"] = "every candidate violates at least one constraint"
    report["_pareto"] = pareto
    return report


def write_frontier_report(report: dict, outdir: str | Path, quality_metric: str | None = None) -> dict[str, Path]:
    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    pareto: ParetoResult = report["_pareto"]
    points = [CandidatePoint(**d) for d in report["points"]]
    paths = {"json": outdir / "frontier.json", "table": outdir / "frontier.txt", "svg": outdir / "frontier.svg"}
    clean = {k: v for k, v in report.items() if not k.startswith("_")}
    paths["json"].write_text(json.dumps(clean, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    text = format_table(points, pareto)
    if "ranking" in report:
        text += "\nWeighted ranking\n"
        if report["ranking"]["empty"]:
            text += "  (empty: " + report["ranking"]["explanation"] + ")\n"
        for r in report["ranking"]["ranked"]:
            p = r["point"]
            text += f"  {r['rank']:>2}. {p['model_id']} {p['method']}  score={r['score']:.4f}\n"
        for e in report["ranking"]["excluded"]:
            p = e["point"]
            text += f"  excluded: {p['model_id']} {p['method']} ({e['reason']})\n"
    paths["table"].write_text(text, encoding="utf-8")
    metric = quality_metric or next((f for f, _ in pareto.objectives if f != "auc"), "infidelity")
    opt = {(p.model_id, p.method) for p in pareto.optimal}
    paths["svg"].write_text(
        svg.frontier_scatter(
            [(p.label, getattr(p, metric), p.auc, (p.model_id, p.method) in opt) for p in points],
            xlabel=metric,
            ylabel="AUC",
        ),
        encoding="utf-8",
    )
    return paths
