"""End-to-end commands: extract, build a codebook, evaluate, validate, report."""

from __future__ import annotations

import json
import logging
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Mapping, Optional, Sequence

import numpy as np

from .codebook import load_checkpoint, optimize, read_checkpoint
from .codebook.checkpoint import atomic_write
from .config import GATEWAY_ROLES, RunConfig
from .core import Corpus, Document, Origin, ValueExpression, derive_rng
from .gateway import Gateway, GatewayConfig, Gateways, MockWorld, build_gateway
from .recognizer import corpus_histogram, document_distribution, params_for
from .report import codebook_table, evaluation_table, validity_table
from .stats import EAST_ASIA_US, CONTROL, CulturePairSets, ScoreCube, role_condition, validity_report
from .uot import compare, cost_matrix, report_record

log = logging.getLogger(__name__)

REQUIRED_FIELDS = ("id", "topic", "group", "text")


# -- ingestion -----------------------------------------------------------

def ingest_corpus(path, group: Optional[str] = None) -> Corpus:
    """Read a line-delimited corpus, keeping records tagged with ``group``.

    Malformed lines, missing fields, empty texts and duplicate ids are errors
    that cite line numbers; records of another group are skipped with a
    warning.  With ``group=None`` the first record's group is used.
    """
    path = Path(path)
    docs, empty, seen = [], [], {}
    with path.open(encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ValueError(f"{path}:{lineno}: malformed record ({exc.msg})") from None
            if not isinstance(rec, dict):
                raise ValueError(f"{path}:{lineno}: record is not an object")
            missing = [f for f in REQUIRED_FIELDS if f not in rec]
            if missing:
                raise ValueError(f"{path}:{lineno}: missing field(s) {missing}")
            if group is None:
                group = str(rec["group"])
            if str(rec["group"]) != group:
                log.warning("%s:%d: record for group %r skipped (expected %r)",
                            path, lineno, rec["group"], group)
                continue
            if not str(rec["text"]).strip():
                empty.append(lineno)
                continue
            doc_id = str(rec["id"])
            if doc_id in seen:
                raise ValueError(f"{path}:{lineno}: duplicate document id {doc_id!r} "
                                 f"(first seen on line {seen[doc_id]})")
            seen[doc_id] = lineno
            docs.append(Document(doc_id, str(rec["topic"]), group, str(rec["text"]),
                                 Origin(rec.get("origin", "human"))))
    if empty:
        raise ValueError(f"{path}: empty text on line(s) {empty}")
    if not docs:
        raise ValueError(f"{path}: no documents for group {group!r}")
    return Corpus(group, docs)


def write_documents(docs: Sequence[Document], path) -> Path:
    lines = [json.dumps({"id": d.id, "topic": d.topic_id, "group": d.group, "text": d.text,
                         "origin": d.origin.value}, ensure_ascii=False) for d in docs]
    atomic_write(Path(path), "\n".join(lines) + "\n")
    return Path(path)


def select_topics(topics: Sequence[str], fraction: float, seed: int) -> list[str]:
    """Seeded subset holding ``ceil(fraction * n)`` of the sorted topics."""
    topics = sorted(set(topics))
    if fraction >= 1:
        return topics
    n = max(1, int(np.ceil(fraction * len(topics))))
    rng = derive_rng(seed, "topic-subset", round(fraction, 6))
    picked = rng.choice(len(topics), size=n, replace=False)
    return [topics[i] for i in sorted(picked)]


# -- providers -----------------------------------------------------------

class _Providers:
    """Builds gateways from profiles, sharing one instance per distinct profile."""

    def __init__(self, cfg: RunConfig):
        self.cfg = cfg
        self.world = MockWorld.from_dict(cfg.mock_world) if cfg.mock_world else None
        self._cache: dict[str, Gateway] = {}

    def get(self, profile: dict) -> Gateway:
        key = json.dumps(profile, sort_keys=True)
        if key not in self._cache:
            gc = GatewayConfig.from_dict(profile)
            world = self.world
            if gc.provider_kind.value == "mock" and world is None:
                world = MockWorld(seed=self.cfg.seed)
            self._cache[key] = build_gateway(gc, world)
        return self._cache[key]

    def gateways(self) -> Gateways:
        gws = {role: self.get(self.cfg.gateway_profile(role)) for role in GATEWAY_ROLES}
        return Gateways(**gws)

    def examinee(self, name: str) -> Gateway:
        profile = dict(self.cfg.examinees[name])
        profile.setdefault("model_name", name)
        return self.get(profile)

    def provider_calls(self) -> int:
        total = 0
        for gw in self._cache.values():
            total += getattr(gw.chat, "calls", 0) + getattr(gw.embedder, "calls", 0)
        return total


# -- extraction ----------------------------------------------------------

def _read_extractions(path: Path) -> dict[str, list[dict]]:
    out = {}
    if path.is_file():
        for lineno, line in enumerate(path.read_text(encoding="utf-8").splitlines(), 1):
            if line.strip():
                try:
                    rec = json.loads(line)
                except json.JSONDecodeError:
                    raise ValueError(f"{path}:{lineno}: corrupt extraction cache line; delete the file") from None
                out[rec["doc_id"]] = rec["expressions"]
    return out


def extract_corpus(docs: Sequence[Document], extractor: Gateway, cache_path: Optional[Path] = None,
                   chunk: int = 64) -> dict[str, list[ValueExpression]]:
    """Value expressions per document, resuming from ``cache_path`` when present."""
    done = _read_extractions(cache_path) if cache_path is not None else {}
    todo = [d for d in docs if d.id not in done]

    def flush():
        if cache_path is None:
            return
        lines = [json.dumps({"doc_id": d.id, "group": d.group, "expressions": done[d.id]},
                            ensure_ascii=False, sort_keys=True) for d in docs if d.id in done]
        atomic_write(cache_path, "\n".join(lines) + "\n")

    for start in range(0, len(todo), chunk):
        batch = todo[start:start + chunk]
        try:
            results = extractor.map(extractor.extract_value_expressions, batch)
        finally:
            flush()
        for d, exprs in zip(batch, results):
            done[d.id] = [{"text": e.text, "code_name_hint": e.code_name_hint} for e in exprs]
    if todo:
        flush()
    return {d.id: [ValueExpression(r["text"], r.get("code_name_hint", ""), d.id) for r in done[d.id]]
            for d in docs}


def embed_expressions(exprs_by_doc: Mapping[str, Sequence[ValueExpression]], embedder: Gateway) -> None:
    flat = [e for v in exprs_by_doc.values() for e in v if e.embedding is None]
    if flat:
        for e, vec in zip(flat, embedder.embed_texts([e.text for e in flat])):
            e.embedding = vec


def _skip_tally(exprs_by_doc) -> int:
    return sum(1 for v in exprs_by_doc.values() if not v)


def cmd_extract(cfg: RunConfig, providers: Optional[_Providers] = None) -> dict[str, Path]:
    cfg.check_paths()
    providers = providers or _Providers(cfg)
    gws = providers.gateways()
    paths = {}
    for group, p in sorted(cfg.corpora.items()):
        corpus = ingest_corpus(cfg.resolve(p), group)
        path = cfg.out / "extractions" / f"{group}.jsonl"
        exprs = extract_corpus(corpus.documents, gws.extractor, path)
        log.info("group %s: %d docs, %d expressions, %d without value content", group,
                 corpus.size, sum(len(v) for v in exprs.values()), _skip_tally(exprs))
        paths[group] = path
    return paths


# -- codebook ------------------------------------------------------------

def cmd_build_codebook(cfg: RunConfig, providers: Optional[_Providers] = None,
                       resume: bool = True) -> Path:
    """Extract, embed and optimize; returns the final checkpoint path.

    A final checkpoint written under the same configuration is reused as is.
    """
    cfg.check_paths()
    ckdir = cfg.out / "codebook"
    final = ckdir / "final.json"
    opt = cfg.optimizer_config()
    if resume and final.is_file():
        payload = read_checkpoint(final)
        if payload.get("config") == opt.to_dict() and payload.get("run", {}).get("config_hash") == cfg.config_hash():
            log.info("reusing %s", final)
            return final
    stamp = ckdir / "run.json"
    if stamp.is_file() and json.loads(stamp.read_text(encoding="utf-8"))["config_hash"] != cfg.config_hash():
        raise RuntimeError(f"{ckdir} holds checkpoints of a different configuration; "
                           "choose another output_dir or delete that directory")
    atomic_write(stamp, json.dumps({"config_hash": cfg.config_hash()}) + "\n")
    providers = providers or _Providers(cfg)
    gws = providers.gateways()
    cmd_extract(cfg, providers)
    groups = cfg.training_groups or sorted(cfg.corpora)
    docs, exprs = [], {}
    for group in groups:
        corpus = ingest_corpus(cfg.resolve(cfg.corpora[group]), group)
        docs.extend(corpus.documents)
        exprs.update(extract_corpus(corpus.documents, gws.extractor,
                                    cfg.out / "extractions" / f"{group}.jsonl"))
    embed_expressions(exprs, gws.embedder)
    score_log = ckdir / "scores.jsonl"
    t0 = time.perf_counter()
    try:
        result = optimize(docs, exprs, opt, gws, checkpoint_dir=ckdir, resume=resume)
    except Exception as exc:
        raise RuntimeError(f"codebook build failed: {exc}. Checkpoints in {ckdir} are kept; "
                           "rerun the same command to resume.") from exc
    # stamp the run provenance into the final checkpoint
    payload = read_checkpoint(result.checkpoint)
    payload["run"] = {"config_hash": cfg.config_hash(), "seed": cfg.seed,
                      "training_groups": groups, "n_documents": len(docs),
                      "n_expressions": sum(len(v) for v in exprs.values()),
                      "skipped_documents": _skip_tally(exprs)}
    atomic_write(result.checkpoint, json.dumps(payload, sort_keys=True, indent=1, ensure_ascii=False) + "\n")
    lines = [json.dumps({"round": i + 1, **s.to_dict(), "config_hash": cfg.config_hash(),
                         "codebook_id": payload["codebook_id"]}, sort_keys=True)
             for i, s in enumerate(result.scores)]
    atomic_write(score_log, "\n".join(lines) + "\n")
    _write_timing(cfg.out / "codebook" / "timing.json", {"optimize_seconds": time.perf_counter() - t0})
    return result.checkpoint


def _write_timing(path: Path, data: dict) -> None:
    # wall-clock numbers live apart from reports so reports stay byte-identical
    atomic_write(path, json.dumps(data, indent=1, sort_keys=True) + "\n")


# -- evaluation ----------------------------------------------------------

@dataclass
class EvaluationReport:
    config_hash: str
    codebook_id: str
    seed: int
    K: int
    metric: dict
    topics: list[str]
    comparisons: list[dict] = field(default_factory=list)
    reference_pairs: list[dict] = field(default_factory=list)
    skipped_documents: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return asdict(self)

    def cube(self, method: str) -> ScoreCube:
        cube = ScoreCube()
        for c in self.comparisons:
            cube.add(method, c["group_a"], c["group_b"], c["r_display"], c["condition"])
        return cube

    def score(self, examinee: str, reference: str, condition: str = CONTROL) -> dict:
        for c in self.comparisons:
            if c["group_b"] == examinee and c["group_a"] == reference and c["condition"] == condition:
                return c
        raise KeyError((examinee, reference, condition))


def _generated_docs(gw: Gateway, name: str, condition: str, role: Optional[str],
                    topics: Sequence[str], per_topic: int) -> list[Document]:
    jobs = [(ti, t, k) for ti, t in enumerate(topics) for k in range(per_topic)]
    return gw.map(lambda j: gw.generate_examinee_document(
        j[1], role, doc_id=f"{name}:{condition}:{j[0]:04d}:{j[2]}", sample_index=j[2]), jobs)


def cmd_evaluate(cfg: RunConfig, codebook_path=None,
                 providers: Optional[_Providers] = None) -> EvaluationReport:
    """Score every examinee corpus against every reference group."""
    cfg.check_paths()
    providers = providers or _Providers(cfg)
    gws = providers.gateways()
    codebook_path = Path(codebook_path) if codebook_path else cfg.out / "codebook" / "final.json"
    codebook, payload = load_checkpoint(codebook_path, lambda t: gws.embedder.embed_texts(list(t)))
    cb_id = payload["codebook_id"]
    metric = cfg.metric_config()
    rec_opts = cfg.recognizer_options()
    params = params_for(codebook, **{k: v for k, v in rec_opts.items() if k != "sigma2"})
    if "sigma2" in rec_opts:
        params = type(params)(rec_opts["sigma2"], params.min_code_prob, params.topic_weighted)
    chash = cfg.config_hash()
    out = cfg.out / "evaluation"
    t0 = time.perf_counter()

    refs = {g: ingest_corpus(cfg.resolve(p), g) for g, p in sorted(cfg.corpora.items())}
    topics = select_topics([d.topic_id for c in refs.values() for d in c], cfg.topic_fraction, cfg.seed)
    keep = set(topics)

    def recognize(label: str, docs: Sequence[Document], cache: Optional[Path]):
        exprs = extract_corpus(docs, gws.extractor, cache)
        embed_expressions(exprs, gws.embedder)
        used = [d for d in docs if exprs[d.id]]
        skipped[label] = len(docs) - len(used)
        if not used:
            raise ValueError(f"corpus {label!r} has no document with value content")
        dists = np.stack([document_distribution(exprs[d.id], codebook, params) for d in used])
        hist = corpus_histogram(dists, [d.topic_id for d in used], params.topic_weighted, cb_id)
        return dists, hist

    skipped: dict[str, int] = {}
    ref_dists, ref_hists, costs = {}, {}, {}
    for g, corpus in refs.items():
        docs = [d for d in corpus if d.topic_id in keep]
        if not docs:
            raise ValueError(f"topic subset leaves no documents for group {g!r}")
        ref_dists[g], ref_hists[g] = recognize(g, docs, cfg.out / "extractions" / f"{g}.jsonl")
        costs[g] = cost_matrix(codebook.centroids(), ref_dists[g], metric)

    examinees: list[tuple[str, str, list[Document], Path]] = []
    for name, p in sorted(cfg.examinee_corpora.items()):
        corpus = ingest_corpus(cfg.resolve(p))
        docs = [d for d in corpus if d.topic_id in keep] or list(corpus)
        examinees.append((name, CONTROL, docs, out / "extractions" / f"{name}.jsonl"))
    for name in sorted(cfg.examinees):
        gw = providers.examinee(name)
        for role in [None] + list(cfg.priming_roles):
            cond = CONTROL if role is None else role_condition(role)
            docs = _generated_docs(gw, name, cond, role, topics, cfg.docs_per_topic)
            tag = f"{name}__{cond.replace(':', '-')}"
            write_documents(docs, out / "generated" / f"{tag}.jsonl")
            examinees.append((name, cond, docs, out / "extractions" / f"{tag}.jsonl"))

    report = EvaluationReport(chash, cb_id, cfg.seed, codebook.K, metric.to_dict(), topics)
    done = []
    try:
        for name, cond, docs, cache in examinees:
            label = name if cond == CONTROL else f"{name}[{cond}]"
            _, hist = recognize(label, docs, cache)
            for g in refs:
                res = compare(ref_hists[g].mass, hist.mass, costs[g], metric)
                rec = report_record(g, name, res, metric)
                rec.update(condition=cond, config_hash=chash, codebook_id=cb_id, seed=cfg.seed)
                report.comparisons.append(rec)
            done.append(label)
        for g1 in refs:
            for g2 in refs:
                if g1 != g2:
                    res = compare(ref_hists[g1].mass, ref_hists[g2].mass, costs[g1], metric)
                    rec = report_record(g1, g2, res, metric)
                    rec.update(config_hash=chash, codebook_id=cb_id, seed=cfg.seed)
                    report.reference_pairs.append(rec)
    except Exception as exc:
        _dump_jsonl(out / "partial_scores.jsonl", report.comparisons)
        atomic_write(out / "manifest.json", json.dumps(
            {"completed": done, "error": str(exc), "codebook": str(codebook_path),
             "config_hash": chash}, indent=1, sort_keys=True) + "\n")
        raise RuntimeError(f"evaluation failed after {len(done)} examinee corpora: {exc}; "
                           f"partial results in {out}") from exc
    report.skipped_documents = dict(sorted(skipped.items()))

    _dump_jsonl(out / "scores.jsonl", report.comparisons)
    report.cube(cfg.method_name).write_jsonl(out / "cube.jsonl")
    atomic_write(out / "report.json", json.dumps(report.to_dict(), indent=1, sort_keys=True) + "\n")
    atomic_write(out / "report.txt", evaluation_table(report.to_dict()))
    _write_timing(out / "timing.json", {"evaluate_seconds": time.perf_counter() - t0})
    return report


def _dump_jsonl(path: Path, records: Sequence[dict]) -> None:
    atomic_write(path, "".join(json.dumps(r, sort_keys=True) + "\n" for r in records))


# -- validation and reporting ------------------------------------------

def default_pairs(cube: ScoreCube) -> Optional[CulturePairSets]:
    return EAST_ASIA_US if set(cube.groups) <= set(EAST_ASIA_US.groups()) else None


def cmd_validate(cube_path, pairs: Optional[CulturePairSets] = None, fisher: bool = False,
                 outcome_method: Optional[str] = None, out_dir=None) -> dict:
    """All validity statistics for every method in a score cube."""
    cube = ScoreCube.read_jsonl(cube_path)
    if pairs is None:
        pairs = default_pairs(cube) or CulturePairSets([], [])
    report = validity_report(cube, pairs, fisher, outcome_method)
    report["cube"] = str(Path(cube_path).name)
    if out_dir is not None:
        out_dir = Path(out_dir)
        atomic_write(out_dir / "validity.json", json.dumps(report, indent=1, sort_keys=True) + "\n")
        atomic_write(out_dir / "validity.txt", validity_table(report))
    return report


def cmd_report(out_dir) -> str:
    """Collect every available table under ``out_dir`` into ``report.txt``."""
    out_dir = Path(out_dir)
    parts = []
    final = out_dir / "codebook" / "final.json"
    if final.is_file():
        parts.append(codebook_table(read_checkpoint(final)))
    ev = out_dir / "evaluation" / "report.json"
    if ev.is_file():
        parts.append(evaluation_table(json.loads(ev.read_text(encoding="utf-8"))))
    val = out_dir / "validation" / "validity.json"
    if val.is_file():
        parts.append(validity_table(json.loads(val.read_text(encoding="utf-8"))))
    if not parts:
        raise FileNotFoundError(f"nothing to report under {out_dir}")
    text = "\n".join(parts)
    atomic_write(out_dir / "report.txt", text)
    return text
