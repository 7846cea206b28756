"""Initial clustering and the iterative rate-distortion codebook search."""

from __future__ import annotations

import logging
from collections import defaultdict
from dataclasses import asdict, dataclass, field
from typing import Callable, Mapping, Optional, Sequence

import numpy as np
from sklearn.cluster import HDBSCAN
from sklearn.decomposition import PCA

from ..core import (
    Codebook, CodeIndexSet, Document, ValueCode, ValueExpression, cosine_matrix,
    derive_rng, shannon_entropy, stack_embeddings,
)
from ..gateway import Gateways
from ..recognizer import document_distribution, params_for, sample_code_set

log = logging.getLogger(__name__)

Reducer = Callable[[np.ndarray, int], np.ndarray]


@dataclass(frozen=True)
class OptimizerConfig:
    N1: int = 3
    N2: int = 3
    M: int = 3
    T: int = 10
    beta1: float = 0.3
    beta2: float = 0.08
    tau1: float = 1.0
    tau2: float = 0.9
    merge_sim: float = 0.9
    min_cluster_size: int = 5
    under_z: float = -0.5
    over_z: float = 1.0
    split_improvement: float = 0.01
    # +1 follows the printed score formula; -1 rewards global code coverage
    global_entropy_sign: int = 1
    reduce_dim: int = 5
    candidate_factor: int = 2
    name_top_n: int = 10
    min_split_age: int = 2
    seed: int = 0

    def __post_init__(self):
        for name in ("N1", "N2", "M", "T", "min_cluster_size", "candidate_factor",
                     "name_top_n", "reduce_dim"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1")
        if not 0 < self.tau2 <= 1:
            raise ValueError("tau2 must lie in (0, 1]")
        if self.global_entropy_sign not in (1, -1):
            raise ValueError("global_entropy_sign must be +1 or -1")

    @classmethod
    def from_dict(cls, d: Mapping) -> "OptimizerConfig":
        known = cls.__dataclass_fields__
        unknown = set(d) - set(known)
        if unknown:
            raise ValueError(f"unknown optimizer option(s): {sorted(unknown)}")
        return cls(**d)

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class ScoreBreakdown:
    distortion_term: float
    per_doc_entropy_term: float
    global_entropy_term: float
    total: float
    beta1: float
    beta2: float
    M: int
    global_entropy_sign: int = 1
    n_docs: int = 0
    skipped_docs: int = 0

    @classmethod
    def compose(cls, distortion_term, per_doc_entropy_term, global_entropy_term,
                cfg: OptimizerConfig, n_docs=0, skipped_docs=0) -> "ScoreBreakdown":
        total = (-(distortion_term - cfg.beta1 * cfg.M * per_doc_entropy_term)
                 - cfg.global_entropy_sign * cfg.beta2 * cfg.M * global_entropy_term)
        return cls(float(distortion_term), float(per_doc_entropy_term),
                   float(global_entropy_term), float(total), cfg.beta1, cfg.beta2, cfg.M,
                   cfg.global_entropy_sign, n_docs, skipped_docs)

    def recomposed(self) -> float:
        return (-(self.distortion_term - self.beta1 * self.M * self.per_doc_entropy_term)
                - self.global_entropy_sign * self.beta2 * self.M * self.global_entropy_term)

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class DistortionRecord:
    doc_id: str
    code_set: CodeIndexSet
    d: float
    q_weight: float

    def __post_init__(self):
        if not np.isfinite(self.d):
            raise ValueError(f"non-finite distortion for {self.doc_id!r}")


@dataclass
class StepResult:
    records: list[DistortionRecord]
    usage: np.ndarray
    score: ScoreBreakdown
    doc_dists: dict[str, np.ndarray]
    skipped: list[str] = field(default_factory=list)


# -- initialisation ------------------------------------------------------

def pca_reducer(X: np.ndarray, dim: int) -> np.ndarray:
    n_comp = min(dim, X.shape[0], X.shape[1])
    if n_comp >= X.shape[1]:
        return X
    return PCA(n_components=n_comp, svd_solver="full").fit_transform(X)


def _unit(X: np.ndarray) -> np.ndarray:
    norms = np.linalg.norm(X, axis=1, keepdims=True)
    if np.any(norms == 0):
        raise ValueError("degenerate embedding")
    return X / norms


def density_labels(Z: np.ndarray, min_cluster_size: int) -> np.ndarray:
    """HDBSCAN labels; ``-1`` marks noise.  Too few points means all noise."""
    if Z.shape[0] < max(min_cluster_size, 2):
        return np.full(Z.shape[0], -1)
    return HDBSCAN(min_cluster_size=min_cluster_size, copy=True).fit_predict(Z)


def _attach_noise(groups: list[list[int]], noise: Sequence[int], E: np.ndarray,
                  tau2: float) -> list[list[int]]:
    """Attach noise points to the closest cluster, or seed a new singleton.

    Points are processed in order and centroids are updated as points land,
    so a freshly spawned singleton can absorb later noise.
    """
    sums = [E[g].sum(axis=0) for g in groups]
    for i in noise:
        if sums:
            C = np.stack([s / len(g) for s, g in zip(sums, groups)])
            sims = cosine_matrix(E[i], C)[0]
            best = int(np.argmax(sims))
            if sims[best] >= tau2:
                groups[best].append(i)
                sums[best] = sums[best] + E[i]
                continue
        groups.append([i])
        sums.append(E[i].copy())
    return groups


def _merge_close(groups: list[list[int]], E: np.ndarray, merge_sim: float) -> list[list[int]]:
    """Repeatedly fuse the most similar pair of clusters above ``merge_sim``."""
    groups = [list(g) for g in groups]
    while len(groups) > 1:
        C = np.stack([E[g].mean(axis=0) for g in groups])
        S = cosine_matrix(C, C)
        np.fill_diagonal(S, -np.inf)
        i, j = np.unravel_index(int(np.argmax(S)), S.shape)
        if S[i, j] < merge_sim:
            break
        i, j = min(i, j), max(i, j)
        groups[i] = sorted(groups[i] + groups[j])
        del groups[j]
    return groups


def central_members(members: Sequence[ValueExpression], centroid: np.ndarray,
                    top_n: Optional[int] = None) -> list[ValueExpression]:
    sims = cosine_matrix(stack_embeddings(members), centroid)[:, 0]
    order = np.argsort(-sims, kind="stable")
    if top_n is not None:
        order = order[:top_n]
    return [members[i] for i in order]


def make_code(idx: int, members: list[ValueExpression]) -> ValueCode:
    code = ValueCode(id=idx, name="", centroid=np.zeros(0), members=list(members))
    code.recompute_centroid()
    return code


def name_codes(codes: Sequence[ValueCode], gateways, cfg: OptimizerConfig) -> None:
    namer = Gateways.coerce(gateways).namer
    names = namer.map(lambda c: namer.name_code(central_members(c.members, c.centroid, cfg.name_top_n)),
                      list(codes))
    for code, name in zip(codes, names):
        code.name = name


def init_codebook(exprs: Sequence[ValueExpression], cfg: OptimizerConfig, gateways,
                  reducer: Reducer = pca_reducer) -> Codebook:
    """Cluster embedded expressions into a first codebook.

    Embeddings are unit-normalized and reduced to ``cfg.reduce_dim`` dimensions
    for density clustering.  Noise points join the closest cluster when their
    cosine similarity reaches ``cfg.tau2`` and become singletons otherwise;
    clusters whose centroids are closer than ``cfg.merge_sim`` are fused.
    Centroids are means of the full-dimensional member embeddings.
    """
    if len(exprs) == 0:
        raise ValueError("no value expressions to cluster")
    E = stack_embeddings(exprs)
    Z = reducer(_unit(E), cfg.reduce_dim)
    labels = density_labels(Z, cfg.min_cluster_size)
    groups = [list(np.flatnonzero(labels == lab)) for lab in sorted(set(labels.tolist()) - {-1})]
    groups = _attach_noise(groups, list(np.flatnonzero(labels == -1)), E, cfg.tau2)
    groups = _merge_close(groups, E, cfg.merge_sim)
    # order codes by their first member so ids do not depend on label numbering
    groups.sort(key=lambda g: min(g))
    codes = [make_code(k, [exprs[i] for i in sorted(g)]) for k, g in enumerate(groups)]
    name_codes(codes, gateways, cfg)
    log.info("initial codebook: %d codes from %d expressions (%d noise)",
             len(codes), len(exprs), int((labels == -1).sum()))
    return Codebook(codes, iteration=0)


# -- scoring -------------------------------------------------------------

def distortion(doc: Document, code_set: CodeIndexSet, codebook: Codebook, cfg: OptimizerConfig,
               gateways, code_probs: Optional[np.ndarray] = None) -> float:
    """Negative mean cosine between a document and its ``N2`` reconstructions."""
    gw = Gateways.coerce(gateways)
    if any(k < 0 or k >= codebook.K for k in code_set):
        raise ValueError(f"code set {code_set.indices} is not valid for K={codebook.K}")
    probs = code_probs if code_probs is not None else np.full(codebook.K, 1.0 / codebook.K)
    codes = [(codebook.codes[k].name, float(probs[k])) for k in code_set]
    texts = [gw.decoder.reconstruct_document(doc.topic_id, codes, sample_index=j)
             for j in range(cfg.N2)]
    vecs = gw.embedder.embed_texts([doc.text] + texts)
    if vecs[0].shape != vecs[1].shape:
        raise ValueError("embedding dimension mismatch between document and reconstruction")
    sims = cosine_matrix(vecs[0], np.stack(vecs[1:]))[0]
    return float(-sims.mean())


def _score_document(doc, dist, codebook, cfg, gateways, iteration):
    rng = derive_rng(cfg.seed, "candidates", iteration, doc.id)
    candidates: list[CodeIndexSet] = []
    seen = set()
    for _ in range(cfg.candidate_factor * cfg.N1):
        s = sample_code_set(dist, cfg.M, rng)
        key = frozenset(s.indices)
        if key not in seen:
            seen.add(key)
            candidates.append(s)
    ds = [distortion(doc, s, codebook, cfg, gateways, dist) for s in candidates]
    order = np.argsort(ds, kind="stable")[:cfg.N1]
    kept = [(candidates[i], ds[i]) for i in order]
    w = np.array([s.prob for s, _ in kept])
    w = w / w.sum()
    return [DistortionRecord(doc.id, s, d, float(wi)) for (s, d), wi in zip(kept, w)]


def reconstruction_step(docs: Sequence[Document], exprs_by_doc: Mapping[str, Sequence[ValueExpression]],
                        codebook: Codebook, cfg: OptimizerConfig, gateways,
                        iteration: Optional[int] = None) -> StepResult:
    """Score a codebook by how well its codes let the decoder rebuild each document.

    For every document, ``candidate_factor * N1`` code sets are drawn from
    the document's code distribution and the ``N1`` with the lowest
    distortion are kept, weighted by their draw probabilities renormalized
    over the kept sets.  Documents without value expressions are skipped.
    """
    if codebook.K == 0:
        raise ValueError("empty codebook")
    if len(docs) == 0:
        raise ValueError("empty corpus")
    iteration = codebook.iteration if iteration is None else iteration
    params = params_for(codebook)
    codebook.sigma = float(np.sqrt(params.sigma2))
    dists: dict[str, np.ndarray] = {}
    skipped = []
    for doc in docs:
        exprs = exprs_by_doc.get(doc.id, [])
        if not exprs:
            skipped.append(doc.id)
            continue
        dists[doc.id] = document_distribution(exprs, codebook, params)
    if not dists:
        raise ValueError("no document carries value expressions")
    scored = [d for d in docs if d.id in dists]
    gw = Gateways.coerce(gateways)
    per_doc = gw.decoder.map(
        lambda doc: _score_document(doc, dists[doc.id], codebook, cfg, gateways, iteration), scored)
    records = [r for recs in per_doc for r in recs]

    N = len(scored)
    usage = np.sum([dists[d.id] for d in scored], axis=0)
    distortion_term = sum(r.q_weight * r.d for r in records) / N
    entropy_term = float(np.mean([shannon_entropy(dists[d.id]) for d in scored]))
    global_term = shannon_entropy(usage / usage.sum())
    score = ScoreBreakdown.compose(distortion_term, entropy_term, global_term, cfg,
                                   n_docs=N, skipped_docs=len(skipped))
    if skipped:
        log.warning("skipped %d document(s) without value expressions", len(skipped))
    return StepResult(records, usage, score, dists, skipped)


def code_distortions(records: Sequence[DistortionRecord], K: int) -> list[Optional[float]]:
    """Mean distortion of the records whose code set contains each code."""
    acc = defaultdict(list)
    for r in records:
        for k in r.code_set:
            acc[k].append(r.d)
    return [float(np.mean(acc[k])) if acc[k] else None for k in range(K)]
