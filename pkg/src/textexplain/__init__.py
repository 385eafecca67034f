"""Local explanation quality metrics (Lipschitz robustness and infidelity) for text classifiers."""

from .attributions import Attribution, exact_shapley, integrated_gradients, kernel_shap, lime, saliency
from .metrics import infidelity, local_lipschitz
from .perturb import PerturbationConfig, make_neighborhood, perturb_document
from .text import Document, TfidfVectorizer, read_corpus, tokenize
from .tradeoff import CandidatePoint, auc, pareto_frontier, weighted_rank

__version__ = "0.1.0"

__all__ = [
    "Attribution",
    "CandidatePoint",
    "Document",
    "PerturbationConfig",
    "TfidfVectorizer",
    "auc",
    "exact_shapley",
    "infidelity",
    "integrated_gradients",
    "kernel_shap",
    "lime",
    "local_lipschitz",
    "make_neighborhood",
    "pareto_frontier",
    "perturb_document",
    "read_corpus",
    "saliency",
    "tokenize",
    "weighted_rank",
]
