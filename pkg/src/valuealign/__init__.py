"""Value codebooks and transport-based cultural alignment scores for text generators."""

from .core import (
    Codebook, CodeIndexSet, Corpus, Document, Origin, ValueCode, ValueExpression, ValueHistogram,
    cosine_matrix, cosine_similarity, derive_rng, normalize_histogram, renyi2_entropy,
    shannon_entropy,
)
from .recognizer import (
    RecognizerParams, corpus_histogram, document_distribution, sample_code_set, soft_assign,
)
from .uot import (
    AlignmentResult, CostMatrix, MetricConfig, TransportPlan, alignment_score, compare,
    cost_matrix, debiased_uot, unbalanced_sinkhorn, uot_objective,
)

__all__ = [
    "AlignmentResult", "CodeIndexSet", "Codebook", "Corpus", "CostMatrix", "Document",
    "MetricConfig", "Origin", "RecognizerParams", "TransportPlan", "ValueCode",
    "ValueExpression", "ValueHistogram", "alignment_score", "compare", "corpus_histogram",
    "cosine_matrix", "cosine_similarity", "cost_matrix", "debiased_uot", "derive_rng",
    "document_distribution", "normalize_histogram", "renyi2_entropy", "sample_code_set",
    "shannon_entropy", "soft_assign", "unbalanced_sinkhorn", "uot_objective",
]

__version__ = "0.1.0"
