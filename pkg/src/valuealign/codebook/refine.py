"""Usage-driven split and merge of codebook codes."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from sklearn.cluster import KMeans

from ..core import Codebook, ValueCode, cosine_matrix, derive_seed
from .builder import DistortionRecord, OptimizerConfig, code_distortions, make_code, name_codes

log = logging.getLogger(__name__)


@dataclass
class RefineReport:
    iteration: int
    K_before: int
    K_after: int
    z_scores: list[float] = field(default_factory=list)
    splits: list[str] = field(default_factory=list)
    merges: list[tuple[str, str]] = field(default_factory=list)
    no_variance: bool = False

    def to_dict(self) -> dict:
        return {"iteration": self.iteration, "K_before": self.K_before, "K_after": self.K_after,
                "z_scores": self.z_scores, "splits": self.splits,
                "merges": [list(m) for m in self.merges], "no_variance": self.no_variance}


def usage_zscores(n) -> Optional[np.ndarray]:
    """Population z-scores of code usage; ``None`` when usage is flat."""
    n = np.asarray(n, dtype=float)
    sd = n.std()
    if sd == 0 or not np.isfinite(sd):
        return None
    return (n - n.mean()) / sd


def relative_improvement(history: Sequence[float]) -> Optional[float]:
    """Relative drop in distortion across the last three recorded iterations."""
    window = list(history)[-3:]
    if len(window) < 2:
        return None
    first, last = window[0], window[-1]
    if first == 0:
        return 0.0
    return (first - last) / abs(first)


def should_split(code: ValueCode, z: float, cfg: OptimizerConfig) -> bool:
    if z <= cfg.over_z or code.age < cfg.min_split_age or len(code.members) < 2:
        return False
    gain = relative_improvement(code.distortion_history)
    return gain is not None and gain <= cfg.split_improvement


def split_code(code: ValueCode, seed: int) -> tuple[ValueCode, ValueCode]:
    X = code.member_matrix()
    labels = KMeans(n_clusters=2, n_init=10, random_state=seed).fit_predict(X)
    if labels.min() == labels.max():
        # identical embeddings; split by position so both halves are non-empty
        labels = (np.arange(len(labels)) >= len(labels) // 2).astype(int)
    halves = [[m for m, lab in zip(code.members, labels) if lab == side] for side in (0, 1)]
    a, b = make_code(-1, halves[0]), make_code(-1, halves[1])
    # provisional names until the namer runs
    a.name = b.name = code.name
    return a, b


def record_distortions(codebook: Codebook, records: Sequence[DistortionRecord]) -> None:
    for code, d in zip(codebook.codes, code_distortions(records, codebook.K)):
        if d is not None:
            code.distortion_history.append(d)


def refine_step(codebook: Codebook, records: Sequence[DistortionRecord], n, cfg: OptimizerConfig,
                gateways) -> tuple[Codebook, RefineReport]:
    """Split over-used stagnant codes, fold under-used codes into their neighbours.

    The iteration's per-code distortions are appended to each code's history
    before the split test.  Splits are applied before merges; new and merged
    codes are renamed, ids are recompacted and usage counters reset.
    """
    n = np.asarray(n, dtype=float)
    if n.shape != (codebook.K,):
        raise ValueError(f"usage vector has shape {n.shape}, expected ({codebook.K},)")
    it = codebook.iteration
    report = RefineReport(iteration=it, K_before=codebook.K, K_after=codebook.K)
    z = usage_zscores(n)
    codes = [_copy(c) for c in codebook.codes]
    record_distortions(Codebook(codes), records)
    if z is None:
        report.no_variance = True
        log.info("iteration %d: flat code usage, no refinement", it)
        for c in codes:
            c.age += 1
            c.usage = 0.0
        return Codebook(codes, it + 1, list(codebook.score_history)), report
    report.z_scores = [float(v) for v in z]

    # entries: (code, usage, z, is_new)
    pool = []
    for code, nk, zk in zip(codes, n, z):
        if should_split(code, zk, cfg):
            a, b = split_code(code, derive_seed(cfg.seed, "split", it, code.id))
            report.splits.append(code.name)
            pool.append([a, nk / 2, None, True])
            pool.append([b, nk / 2, None, True])
        else:
            pool.append([code, nk, zk, False])

    under = sorted((i for i, e in enumerate(pool) if e[2] is not None and e[2] < cfg.under_z),
                   key=lambda i: (pool[i][1], i))
    alive = [True] * len(pool)
    touched = [e[3] for e in pool]
    for i in under:
        if not alive[i] or touched[i] or sum(alive) < 2:
            continue
        others = [j for j in range(len(pool)) if alive[j] and j != i]
        sims = cosine_matrix(pool[i][0].centroid, np.stack([pool[j][0].centroid for j in others]))[0]
        j = others[int(np.argmax(sims))]
        src, dst = pool[i][0], pool[j][0]
        report.merges.append((src.name, dst.name))
        merged = make_code(-1, dst.members + src.members)
        merged.name = dst.name
        pool[j] = [merged, pool[j][1] + pool[i][1], None, True]
        alive[i] = False
        touched[j] = True

    out, fresh = [], []
    for e, ok in zip(pool, alive):
        if not ok:
            continue
        code = e[0]
        code.usage = 0.0
        if e[3]:
            code.age, code.distortion_history = 0, []
            fresh.append(code)
        else:
            code.age += 1
        out.append(code)
    if fresh:
        name_codes(fresh, gateways, cfg)
    # membership changed, so the assignment temperature is re-estimated
    result = Codebook(out, it + 1, list(codebook.score_history))
    result.reindex()
    report.K_after = result.K
    log.info("iteration %d: %d split(s), %d merge(s), K %d -> %d", it, len(report.splits),
             len(report.merges), report.K_before, report.K_after)
    return result, report


def _copy(code: ValueCode) -> ValueCode:
    return ValueCode(code.id, code.name, np.array(code.centroid, copy=True), list(code.members),
                     code.usage, list(code.distortion_history), code.age)
