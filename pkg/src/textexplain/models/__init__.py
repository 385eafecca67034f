"""Classifiers spanning the interpretability spectrum, plus the external adapter."""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from ._base import (
    SPARSE_VECTOR,
    TOKEN_SEQUENCE,
    DivergenceError,
    RepresentationError,
    SingleClassError,
    logit,
    sigmoid,
)
from .additive import AdditiveBoostingClassifier
from .embedding import EmbeddingBagClassifier
from .external import AdapterProtocolError, ExternalModel, check_adapter
from .forest import RandomForestGini
from .linear import LogisticRegressionGD

MODEL_KINDS = {
    "logistic": LogisticRegressionGD,
    "additive": AdditiveBoostingClassifier,
    "forest": RandomForestGini,
    "embedding": EmbeddingBagClassifier,
}


def kind_of(model) -> str:
    for kind, cls in MODEL_KINDS.items():
        if isinstance(model, cls):
            return kind
    if isinstance(model, ExternalModel):
        return "external"
    raise TypeError(f"unknown model type {type(model).__name__}")


def predict_positive(model, X) -> np.ndarray:
    """Probability of class 1 for every row/document in ``X``."""
    return np.asarray(model.predict_proba(X))[:, 1]


def model_output(model, X, target: str = "logit") -> np.ndarray:
    if target == "logit":
        return np.asarray(model.decision_function(X), dtype=np.float64)
    if target == "probability":
        return predict_positive(model, X)
    raise ValueError(f"unknown target {target!r}")


def save_model(model, path: str | Path) -> None:
    payload = {"kind": kind_of(model), "model": model.to_dict()}
    Path(path).write_text(json.dumps(payload, sort_keys=True) + "\n", encoding="utf-8")


def load_model(path: str | Path):
    payload = json.loads(Path(path).read_text(encoding="utf-8"))
    return MODEL_KINDS[payload["kind"]].from_dict(payload["model"])


__all__ = [
    "AdapterProtocolError",
    "AdditiveBoostingClassifier",
    "DivergenceError",
    "EmbeddingBagClassifier",
    "ExternalModel",
    "LogisticRegressionGD",
    "MODEL_KINDS",
    "RandomForestGini",
    "RepresentationError",
    "SPARSE_VECTOR",
    "SingleClassError",
    "TOKEN_SEQUENCE",
    "check_adapter",
    "kind_of",
    "load_model",
    "logit",
    "model_output",
    "predict_positive",
    "save_model",
    "sigmoid",
]
