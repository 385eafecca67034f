"""Validated JSON run configuration."""

from __future__ import annotations

import json
import os
from pathlib import Path
from typing import Literal, Optional

from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

from .attributions import COMPATIBILITY

OUTPUT_DIR_ENV = "TEXTEXPLAIN_OUTPUT_DIR"

ModelKind = Literal["logistic", "additive", "forest", "embedding", "external"]
Method = Literal["truth", "lime", "shap", "saliency", "ig"]


class ConfigError(ValueError):
    pass


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)


class VectorizerSettings(_Strict):
    min_df: int = Field(1, ge=1)
    max_features: Optional[int] = Field(None, ge=1)
    ngram_range: tuple[int, int] = (1, 1)


class EmbeddingSettings(_Strict):
    path: Optional[Path] = None
    dim: int = Field(50, ge=1)
    window: int = Field(5, ge=1)
    min_count: int = Field(1, ge=1)


class ModelSpec(_Strict):
    id: str = Field(min_length=1)
    kind: ModelKind
    params: dict = Field(default_factory=dict)
    command: Optional[str] = None
    timeout: float = Field(30.0, gt=0)

    @model_validator(mode="after")
    def _external_needs_command(self):
        if self.kind == "external" and not self.command:
            raise ValueError(f"model {self.id!r}: external models need a 'command'")
        return self


class MetricSettings(_Strict):
    pi: float = Field(0.1, ge=0.0, le=1.0)
    k: int = Field(10, ge=1)
    eps: float = Field(0.25, gt=0.0)
    m: int = Field(15, ge=1)
    lipschitz_docs: int = Field(35, ge=1)
    infidelity_docs: int = Field(100, ge=1)
    n_draws: int = Field(100, ge=1)
    sigma_scale: float = Field(0.1, ge=0.0)
    full_support_noise: bool = False
    target: Literal["logit", "probability"] = "logit"
    overlap_top_k: int = Field(10, ge=1)


class FrontierSettings(_Strict):
    objectives: list[tuple[Literal["auc", "infidelity", "lipschitz"], Literal["max", "min"]]] = [
        ("auc", "max"),
        ("infidelity", "min"),
    ]
    weights: dict[str, float] = Field(default_factory=lambda: {"auc": 1.0, "infidelity": 1.0, "lipschitz": 1.0})
    constraints: dict[str, tuple[Optional[float], Optional[float]]] = Field(default_factory=dict)


DEFAULT_ATTRIBUTION_PARAMS = {
    "truth": {},
    "lime": {"n_samples": 1000, "kernel_width": 0.75, "n_report_features": 10},
    "shap": {"n_samples": 512, "background": "zero"},
    "saliency": {},
    "ig": {"steps": 32},
}


class RunConfig(_Strict):
    train_corpus: Path
    test_corpus: Path
    seed: int
    vectorizer: VectorizerSettings = VectorizerSettings()
    embeddings: EmbeddingSettings = EmbeddingSettings()
    models: list[ModelSpec] = Field(min_length=1)
    attributions: dict[Method, dict] = Field(default_factory=dict)
    pairs: Optional[list[tuple[str, Method]]] = None
    metrics: MetricSettings = MetricSettings()
    frontier: FrontierSettings = FrontierSettings()
    output_dir: Optional[Path] = None

    @field_validator("models")
    @classmethod
    def _unique_ids(cls, v):
        ids = [m.id for m in v]
        dup = sorted({i for i in ids if ids.count(i) > 1})
        if dup:
            raise ValueError(f"duplicate model ids: {dup}")
        return v

    @model_validator(mode="after")
    def _check_pairs(self):
        kinds = {m.id: m.kind for m in self.models}
        for model_id, method in self.pairs or []:
            if model_id not in kinds:
                raise ValueError(f"pair ({model_id}, {method}): unknown model id")
            kind = kinds[model_id]
            allowed = COMPATIBILITY[method]
            if kind not in allowed and not (kind == "external" and "external-sparse" in allowed):
                raise ValueError(f"pair ({model_id}, {method}): {method} cannot explain a {kind} model")
        for method, params in self.attributions.items():
            unknown = set(params) - set(DEFAULT_ATTRIBUTION_PARAMS[method])
            if unknown:
                raise ValueError(f"attribution {method}: unknown parameters {sorted(unknown)}")
        return self

    def attribution_params(self, method: str) -> dict:
        return {**DEFAULT_ATTRIBUTION_PARAMS[method], **self.attributions.get(method, {})}

    def resolved_pairs(self) -> list[tuple[str, str]]:
        if self.pairs is not None:
            return [tuple(p) for p in self.pairs]
        out = []
        for m in self.models:
            for method in ("truth", "lime", "shap", "saliency", "ig"):
                if m.kind in COMPATIBILITY[method]:
                    out.append((m.id, method))
        return out

    def snapshot(self) -> dict:
        return json.loads(self.model_dump_json())


def load_config(path: str | Path, seed: int | None = None, output_dir: str | Path | None = None) -> RunConfig:
    """Parse, resolve relative paths against the config's directory, and validate.

    Raises :class:`ConfigError` for schema violations and missing files.
    """
    path = Path(path)
    try:
        raw = json.loads(path.read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    if not isinstance(raw, dict):
        raise ConfigError("config must be a JSON object")
    if seed is not None:
        raw["seed"] = seed
    if output_dir is not None:
        raw["output_dir"] = str(output_dir)
    elif raw.get("output_dir") is None and os.environ.get(OUTPUT_DIR_ENV):
        raw["output_dir"] = os.environ[OUTPUT_DIR_ENV]
    base = path.parent
    for key in ("train_corpus", "test_corpus", "output_dir"):
        if raw.get(key) is not None and not Path(raw[key]).is_absolute():
            raw[key] = str(base / raw[key])
    emb = raw.get("embeddings")
    if isinstance(emb, dict) and emb.get("path") and not Path(emb["path"]).is_absolute():
        emb["path"] = str(base / emb["path"])
    try:
        cfg = RunConfig.model_validate(raw)
    except ValidationError as exc:
        raise ConfigError(str(exc)) from None
    missing = [str(p) for p in (cfg.train_corpus, cfg.test_corpus, cfg.embeddings.path) if p is not None and not p.exists()]
    if missing:
        raise ConfigError(f"missing input files: {', '.join(missing)}")
    if cfg.output_dir is None:
        raise ConfigError(f"no output directory: set 'output_dir', pass --out, or export {OUTPUT_DIR_ENV}")
    return cfg
