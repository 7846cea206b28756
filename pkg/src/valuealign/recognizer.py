"""Soft assignment of value expressions to codebook codes."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
from scipy.special import softmax

from .core import (
    Codebook, CodeIndexSet, ValueExpression, ValueHistogram, as_distribution,
    cosine_matrix, stack_embeddings,
)

DEFAULT_SIGMA = 0.1
SAMPLING_FLOOR = 0.01


class NoValueContent(ValueError):
    """A document yielded no value expressions."""


@dataclass(frozen=True)
class RecognizerParams:
    sigma2: float = DEFAULT_SIGMA ** 2
    # codes below this probability are dropped from reports and never sampled
    min_code_prob: float = SAMPLING_FLOOR
    topic_weighted: bool = False

    def __post_init__(self):
        if not self.sigma2 > 0:
            raise ValueError("sigma2 must be positive")
        if not 0 <= self.min_code_prob < 1:
            raise ValueError("min_code_prob must lie in [0, 1)")


def estimate_sigma(codebook: Codebook, default: float = DEFAULT_SIGMA) -> float:
    """Mean over codes of the spread of member-to-centroid cosine similarity.

    Singleton codes and codes whose members all sit at the same similarity
    contribute ``default`` instead of zero.
    """
    if codebook.K == 0:
        raise ValueError("empty codebook")
    spreads = []
    for code in codebook.codes:
        if not code.members:
            raise ValueError(f"code {code.id} has no members")
        if len(code.members) < 2:
            spreads.append(default)
            continue
        sims = cosine_matrix(stack_embeddings(code.members), code.centroid)[:, 0]
        s = float(np.std(sims))
        spreads.append(s if s > 0 else default)
    return float(np.mean(spreads))


def params_for(codebook: Codebook, **kwargs) -> RecognizerParams:
    sigma = codebook.sigma if codebook.sigma is not None else estimate_sigma(codebook)
    return RecognizerParams(sigma2=sigma ** 2, **kwargs)


def soft_assign_matrix(E: np.ndarray, centroids: np.ndarray, sigma2: float) -> np.ndarray:
    """Rows of ``softmax_k(cos(e, c_k) / sigma2)`` for every row ``e`` of ``E``."""
    if centroids.shape[0] == 0:
        raise ValueError("empty codebook")
    return softmax(cosine_matrix(E, centroids) / sigma2, axis=1)


def soft_assign(expr: ValueExpression, codebook: Codebook, params: RecognizerParams) -> np.ndarray:
    if expr.embedding is None:
        raise ValueError("expression is not embedded")
    if codebook.K == 0:
        raise ValueError("empty codebook")
    return soft_assign_matrix(np.asarray(expr.embedding)[None, :], codebook.centroids(), params.sigma2)[0]


def document_distribution(doc_exprs: Sequence[ValueExpression], codebook: Codebook,
                          params: RecognizerParams) -> np.ndarray:
    if len(doc_exprs) == 0:
        raise NoValueContent("no value content")
    rows = soft_assign_matrix(stack_embeddings(doc_exprs), codebook.centroids(), params.sigma2)
    return rows.mean(axis=0)


def corpus_histogram(corpus_dists, topics: Optional[Sequence[str]] = None,
                     topic_weighted: bool = False, codebook_ref: str = "") -> ValueHistogram:
    """Average per-document distributions into a corpus-level histogram.

    With ``topic_weighted`` the documents are first averaged within each topic
    and the topic means are averaged uniformly.
    """
    dists = np.asarray(corpus_dists, dtype=float)
    if dists.ndim != 2 or dists.shape[0] == 0:
        raise ValueError("empty corpus")
    if not topic_weighted:
        mean = dists.mean(axis=0)
    else:
        if topics is None or len(topics) != dists.shape[0]:
            raise ValueError("topic weighting needs one topic per document")
        topics = np.asarray(topics)
        mean = np.mean([dists[topics == t].mean(axis=0) for t in sorted(set(topics.tolist()))], axis=0)
    # renormalize away accumulated rounding
    return ValueHistogram(mean / mean.sum(), codebook_ref)


def sample_code_set(dist, M: int, rng: np.random.Generator,
                    floor: float = SAMPLING_FLOOR) -> CodeIndexSet:
    """Draw ``M`` distinct codes sequentially, renormalizing after each draw.

    Codes with probability below ``floor`` are never drawn.  When fewer than
    ``M`` codes are eligible the returned set holds all of them, in drawn
    order, and is flagged as truncated.  ``prob`` is the product of the
    sequential draw probabilities.
    """
    p = as_distribution(dist)
    if M < 1:
        raise ValueError("M must be >= 1")
    weights = np.where(p >= floor, p, 0.0)
    if weights.sum() == 0:
        weights = np.zeros_like(p)
        weights[int(np.argmax(p))] = 1.0
    n_eligible = int((weights > 0).sum())
    draws = min(M, n_eligible)
    picked = []
    prob = 1.0
    for _ in range(draws):
        q = weights / weights.sum()
        k = int(rng.choice(len(q), p=q))
        prob *= q[k]
        picked.append(k)
        weights[k] = 0.0
    return CodeIndexSet(tuple(picked), prob=float(prob), truncated=draws < M)


def ordered_set_probabilities(dist, M: int) -> tuple[np.ndarray, np.ndarray]:
    """Enumerate every ordered M-tuple of distinct codes and its draw probability.

    Returns ``(tuples, probs)`` with ``tuples`` of shape ``(n, M)``.
    """
    p = as_distribution(dist)
    K = p.shape[0]
    if M > K:
        raise ValueError("M exceeds the number of codes")
    tuples = np.arange(K)[:, None]
    probs = p.copy()
    used = p.copy()
    for _ in range(1, M):
        r, k = np.nonzero(~_used_mask(tuples, K))
        remaining = 1.0 - used[r]
        with np.errstate(divide="ignore", invalid="ignore"):
            step = np.where(remaining > 0, p[k] / remaining, 0.0)
        probs = probs[r] * step
        tuples = np.concatenate([tuples[r], k[:, None]], axis=1)
        used = used[r] + p[k]
    return tuples, probs


def _used_mask(tuples: np.ndarray, K: int) -> np.ndarray:
    mask = np.zeros((tuples.shape[0], K), dtype=bool)
    mask[np.repeat(np.arange(tuples.shape[0]), tuples.shape[1]), tuples.ravel()] = True
    return mask


def without_replacement_entropy(dist, M: int) -> float:
    """Exact entropy of the ordered without-replacement M-tuple, by enumeration."""
    _, probs = ordered_set_probabilities(dist, M)
    nz = probs[probs > 0]
    return float(-(nz * np.log(nz)).sum())
