"""Planted-value corpora for offline runs and tests."""

from __future__ import annotations

import json
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .core import Corpus, Document, Origin, derive_rng
from .gateway.mock import MockWorld

TOPICS = [
    "raising children", "choosing a career", "caring for elders", "spending a bonus",
    "a dispute with neighbours", "moving to a new city", "preparing for exams",
    "a family holiday", "starting a business", "public transport etiquette",
    "volunteering", "retirement plans", "a wedding", "losing a job", "a pet",
    "friendship", "online arguments", "local festivals", "saving money", "mentoring",
]


def planted_world(n_codes: int = 10, dim: int = 64, seed: int = 0, noise: float = 0.15,
                  groups: Optional[dict] = None) -> MockWorld:
    return MockWorld(n_codes=n_codes, dim=dim, seed=seed, noise=noise, groups=groups)


def disjoint_groups(n_codes: int, names: Sequence[str] = ("A", "B")) -> dict:
    """Split the planted codes into contiguous, non-overlapping group profiles."""
    chunks = np.array_split(np.arange(n_codes), len(names))
    return {g: [int(k) for k in chunk] for g, chunk in zip(names, chunks)}


def overlapping_groups(n_codes: int, names: Sequence[str] = ("A", "B"), block: int = 3,
                       emphasis: float = 2.5) -> dict:
    """Profiles sharing every code, each group stressing its own block of codes.

    Group ``i`` puts weight ``emphasis`` on codes ``i*block .. i*block+block-1``
    counted from the front (first group) or back (others) and weight 1
    elsewhere.  Overlap keeps cross-group divergences small, which a mock
    examinee needs for positive control scores.
    """
    out = {}
    for i, g in enumerate(names):
        start = i * block if i == 0 else n_codes - block * i
        w = {k: 1.0 for k in range(n_codes)}
        for k in range(start, min(start + block, n_codes)):
            w[k] = emphasis
        out[g] = w
    return out


def planted_corpus(world: MockWorld, group: str, n_docs: int, codes_per_doc: int = 3,
                   seed: int = 0, topics: Sequence[str] = TOPICS,
                   profile: Optional[np.ndarray] = None, id_prefix: Optional[str] = None) -> Corpus:
    """Documents whose value content is drawn from ``group``'s code profile.

    Each document mentions ``codes_per_doc`` distinct planted codes (by their
    paraphrase cues) interleaved with filler sentences.
    """
    if profile is None:
        profile = world.group_profiles.get(group)
    if profile is None:
        profile = np.full(world.n_codes, 1.0 / world.n_codes)
    profile = np.asarray(profile, dtype=float)
    prefix = id_prefix if id_prefix is not None else group
    n_pick = min(codes_per_doc, int((profile > 0).sum()))
    docs = []
    for i in range(n_docs):
        rng = derive_rng(seed, "planted-doc", group, i)
        topic = topics[i % len(topics)]
        picks = rng.choice(world.n_codes, size=n_pick, replace=False, p=profile)
        text = world.document_text(topic, [int(k) for k in picks], rng)
        docs.append(Document(f"{prefix}-{i:04d}", topic, group, text, Origin.HUMAN))
    return Corpus(group, docs)


def write_corpus(corpus: Corpus, path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", encoding="utf-8") as fh:
        for d in corpus.documents:
            fh.write(json.dumps({"id": d.id, "topic": d.topic_id, "group": d.group,
                                 "text": d.text, "origin": d.origin.value},
                                ensure_ascii=False) + "\n")
    return path


def write_planted_run(directory, seed: int = 0, n_docs: int = 40, n_codes: int = 10,
                      groups: Sequence[str] = ("A", "B"), codes_per_doc: int = 3,
                      with_examinee: bool = True, fmt: str = "json",
                      profiles: Optional[dict] = None, docs_per_topic: int = 1) -> Path:
    """Write planted reference corpora, held-out samples and a run config.

    By default each group owns a contiguous block of the planted codes;
    ``profiles`` overrides this with any mapping accepted by
    :class:`MockWorld`.  For every group
    ``G`` a reference corpus ``G`` and an independent held-out sample ``G-heldout``
    (scored as an examinee) are written.  With ``with_examinee`` a mock
    examinee model that can be role-primed toward each group is configured.
    Returns the config path.
    """
    directory = Path(directory)
    if profiles is None:
        profiles = disjoint_groups(n_codes, groups)
    world = planted_world(n_codes=n_codes, seed=seed, groups=profiles)
    corpora, heldout = {}, {}
    for g in groups:
        ref = planted_corpus(world, g, n_docs, codes_per_doc, seed=seed)
        corpora[g] = str(write_corpus(ref, directory / "corpora" / f"{g}.jsonl").name)
        held = planted_corpus(world, f"{g}-heldout", n_docs, codes_per_doc, seed=seed + 7919,
                              profile=world.group_profiles[g])
        heldout[f"{g}-heldout"] = str(write_corpus(held, directory / "corpora" / f"{g}-heldout.jsonl").name)
    config = {
        "seed": seed,
        "output_dir": "out",
        "corpora": {g: f"corpora/{p}" for g, p in corpora.items()},
        "examinee_corpora": {g: f"corpora/{p}" for g, p in heldout.items()},
        "mock_world": world.to_dict(),
        "gateways": {"default": {"provider_kind": "mock", "model_name": "mock",
                                 "max_parallel": 1, "backoff_base": 0.0}},
    }
    if with_examinee:
        config["examinees"] = {"mock-examinee": {"provider_kind": "mock", "max_parallel": 1,
                                                 "backoff_base": 0.0,
                                                 "options": {"priming_strength": 0.6}}}
        config["priming_roles"] = list(groups)
        config["docs_per_topic"] = docs_per_topic
    directory.mkdir(parents=True, exist_ok=True)
    path = directory / f"run.{'yaml' if fmt == 'yaml' else 'json'}"
    if fmt == "yaml":
        import yaml
        path.write_text(yaml.safe_dump(config, sort_keys=True), encoding="utf-8")
    else:
        path.write_text(json.dumps(config, indent=1, sort_keys=True) + "\n", encoding="utf-8")
    return path
