"""Outer loop alternating reconstruction scoring and refinement, with checkpoints."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Mapping, Optional, Sequence

from ..core import Codebook, Document, ValueExpression
from ..gateway import Gateways
from .builder import OptimizerConfig, Reducer, ScoreBreakdown, init_codebook, pca_reducer, reconstruction_step
from .checkpoint import iteration_checkpoints, load_checkpoint, save_checkpoint
from .refine import RefineReport, record_distortions, refine_step

log = logging.getLogger(__name__)


class OptimizationError(RuntimeError):
    def __init__(self, message: str, checkpoint: Optional[Path] = None):
        super().__init__(message)
        self.checkpoint = checkpoint


@dataclass
class OptimizeResult:
    codebook: Codebook
    scores: list[ScoreBreakdown]
    refinements: list[RefineReport] = field(default_factory=list)
    stop_reason: str = ""
    initial_K: int = 0
    codebook_id: Optional[str] = None
    checkpoint: Optional[Path] = None

    @property
    def score_history(self) -> list[float]:
        return [s.total for s in self.scores]

    @property
    def K(self) -> int:
        return self.codebook.K


def _state(scores, refinements, initial_K, stop_reason=""):
    return {"scores": [s.to_dict() for s in scores],
            "refinements": [r.to_dict() for r in refinements],
            "initial_K": initial_K, "stop_reason": stop_reason}


def _restore(payload: dict):
    st = payload.get("state", {})
    scores = [ScoreBreakdown(**s) for s in st.get("scores", [])]
    refinements = []
    for r in st.get("refinements", []):
        r = dict(r)
        r["merges"] = [tuple(m) for m in r.get("merges", [])]
        refinements.append(RefineReport(**r))
    return scores, refinements, int(st.get("initial_K", 0))


def optimize(docs: Sequence[Document], exprs_by_doc: Mapping[str, Sequence[ValueExpression]],
             cfg: OptimizerConfig, gateways, checkpoint_dir=None, resume: bool = True,
             reducer: Reducer = pca_reducer,
             on_iteration: Optional[Callable[[int, ScoreBreakdown], None]] = None) -> OptimizeResult:
    """Search for a codebook that lets the decoder rebuild the corpus.

    Scores the current codebook, stops as soon as the score exceeds
    ``cfg.tau1`` or ``cfg.T`` scoring rounds have run, and otherwise refines.
    The returned codebook is always the last one that was scored.  With a
    ``checkpoint_dir`` every refined codebook is written to
    ``iter_NNN.json`` and, if ``resume`` is set, a later call continues from
    the newest one.
    """
    gw = Gateways.coerce(gateways)
    ckdir = Path(checkpoint_dir) if checkpoint_dir is not None else None
    config_echo = cfg.to_dict()
    embed = lambda texts: gw.embedder.embed_texts(list(texts))

    existing = iteration_checkpoints(ckdir) if ckdir is not None and resume else []
    if existing:
        codebook, payload = load_checkpoint(existing[-1], embed)
        if payload.get("config") != config_echo:
            raise OptimizationError(f"{existing[-1]} was written with a different optimizer config; "
                                    "remove the checkpoint directory or restore the config",
                                    existing[-1])
        scores, refinements, initial_K = _restore(payload)
        last_ckpt = existing[-1]
        log.info("resuming from %s (iteration %d)", last_ckpt, codebook.iteration)
    else:
        all_exprs = [e for d in docs for e in exprs_by_doc.get(d.id, [])]
        codebook = init_codebook(all_exprs, cfg, gw, reducer)
        scores, refinements, initial_K = [], [], codebook.K
        last_ckpt = None
        if ckdir is not None:
            last_ckpt = ckdir / "iter_000.json"
            save_checkpoint(last_ckpt, codebook, config_echo, _state(scores, refinements, initial_K))

    stop_reason = ""
    while True:
        t = len(scores) + 1
        try:
            step = reconstruction_step(docs, exprs_by_doc, codebook, cfg, gw, iteration=t)
            for code, nk in zip(codebook.codes, step.usage):
                code.usage = float(nk)
            codebook.score_history.append(step.score.total)
            scores.append(step.score)
            if on_iteration is not None:
                on_iteration(t, step.score)
            log.info("round %d: K=%d S=%.6f", t, codebook.K, step.score.total)
            if step.score.total > cfg.tau1:
                stop_reason = "score_threshold"
            elif t >= cfg.T:
                stop_reason = "max_iterations"
            if stop_reason:
                record_distortions(codebook, step.records)
                break
            codebook, report = refine_step(codebook, step.records, step.usage, cfg, gw)
            refinements.append(report)
            if ckdir is not None:
                last_ckpt = ckdir / f"iter_{t:03d}.json"
                save_checkpoint(last_ckpt, codebook, config_echo, _state(scores, refinements, initial_K))
        except OptimizationError:
            raise
        except Exception as exc:
            hint = f"; rerun to resume from {last_ckpt}" if last_ckpt is not None else ""
            raise OptimizationError(f"round {t} failed: {exc}{hint}", last_ckpt) from exc

    result = OptimizeResult(codebook, scores, refinements, stop_reason, initial_K)
    if ckdir is not None:
        result.checkpoint = ckdir / "final.json"
        result.codebook_id = save_checkpoint(result.checkpoint, codebook, config_echo,
                                             _state(scores, refinements, initial_K, stop_reason))
    return result
