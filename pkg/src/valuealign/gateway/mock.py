"""Deterministic offline providers built around a planted "value world".

A :class:`MockWorld` holds a set of ground-truth value codes.  Each code has a
display name, a paraphrase cue that appears in text instead of the name, and an
anchor direction in embedding space.  Texts that mention a cue embed near that
code's anchor; everything else embeds as a hashed bag of words.
"""

from __future__ import annotations

import hashlib
import json
import re
from collections import Counter
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from ..core import derive_rng, stable_hash
from .base import ChatClient, ChatRequest, EmbeddingClient, Gateway, GatewayConfig
from .prompts import TemplateId

VALUE_CATALOGUE = [
    ("Filial Devotion", "caring for aging parents"),
    ("Frugality", "spending money carefully"),
    ("Honesty", "telling the truth"),
    ("Individual Autonomy", "choosing one's own path"),
    ("Social Responsibility", "contributing to the community"),
    ("Fairness", "treating everyone equally"),
    ("Humility", "staying modest about success"),
    ("Animal Welfare", "protecting animals from cruelty"),
    ("Authenticity", "being true to oneself"),
    ("Relational Connectedness", "keeping close friendships"),
    ("Intellectual Curiosity", "asking questions about the world"),
    ("Prosocial Service", "volunteering for strangers"),
    ("Self Discipline", "sticking to daily routines"),
    ("Social Harmony", "avoiding open conflict"),
    ("Tradition", "observing ancestral customs"),
    ("Achievement", "striving for excellence at work"),
    ("Security", "saving for a stable future"),
    ("Environmental Stewardship", "reducing waste and pollution"),
    ("Religious Faith", "trusting in a higher power"),
    ("Free Expression", "speaking one's mind openly"),
    ("Educational Attainment", "studying hard for exams"),
    ("Family Loyalty", "standing by relatives"),
    ("Gratitude", "appreciating small kindnesses"),
    ("Perseverance", "enduring hardship without quitting"),
]

_CONTEXTS = [
    "in family life", "at work", "when times are hard", "among friends",
    "in public life", "as a guiding principle", "when raising children",
    "in old age", "during a crisis", "in daily decisions", "in school",
    "when making plans", "in the neighbourhood", "online",
]

_TEMPLATES = [
    "The author values {cue} {ctx}.",
    "The author believes that {cue} matters {ctx}.",
    "The author endorses {cue} {ctx}.",
    "The author treats {cue} as worthwhile {ctx}.",
]

_FILLER = [
    "the", "morning", "train", "was", "late", "again", "and", "rain", "fell",
    "over", "market", "street", "a", "cup", "of", "tea", "cooled", "on", "desk",
    "window", "light", "changed", "slowly", "bus", "stop", "crowded", "noisy",
    "old", "photograph", "kitchen", "table", "evening", "news", "report",
    "garden", "wall", "painted", "blue", "river", "bridge", "quiet", "letter",
]

_TOKEN = re.compile(r"[a-z0-9']+")


def _digest(token: str) -> int:
    return int.from_bytes(hashlib.blake2b(token.encode("utf-8"), digest_size=8).digest(), "little")


def hashed_bow(text: str, dim: int) -> np.ndarray:
    """Signed feature hashing of the token multiset, unit norm."""
    v = np.zeros(dim)
    for tok in _TOKEN.findall(text.lower()):
        h = _digest(tok)
        v[h % dim] += 1.0 if (h >> 32) & 1 else -1.0
    n = np.linalg.norm(v)
    if n == 0:
        v[0] = 1.0
        return v
    return v / n


@dataclass
class PlantedCode:
    index: int
    name: str
    cue: str
    anchor: np.ndarray


class MockWorld:
    """Ground-truth codes, group value profiles and the mock embedding geometry."""

    def __init__(self, n_codes: int = 10, dim: int = 64, seed: int = 0, noise: float = 0.15,
                 groups: Optional[dict] = None, anchors: Optional[np.ndarray] = None):
        self.n_codes = n_codes
        self.dim = dim
        self.seed = seed
        self.noise = noise
        rng = derive_rng(seed, "mock-world-anchors")
        if anchors is None:
            anchors = rng.standard_normal((n_codes, dim))
        anchors = np.asarray(anchors, dtype=float)
        if anchors.shape != (n_codes, dim):
            raise ValueError(f"anchors must have shape {(n_codes, dim)}")
        anchors = anchors / np.linalg.norm(anchors, axis=1, keepdims=True)
        self.codes = []
        for k in range(n_codes):
            if k < len(VALUE_CATALOGUE):
                name, cue = VALUE_CATALOGUE[k]
            else:
                name, cue = f"Value {k}", f"upholding principle {k:03d}"
            self.codes.append(PlantedCode(k, name, cue, anchors[k]))
        self._by_name = {c.name.lower(): c for c in self.codes}
        self._cue_re = re.compile("|".join(re.escape(c.cue) for c in
                                           sorted(self.codes, key=lambda c: -len(c.cue))))
        self._cue_index = {c.cue: c.index for c in self.codes}
        self.group_spec = groups or {}
        self.group_profiles = {g: self._profile(spec) for g, spec in self.group_spec.items()}

    def _profile(self, spec) -> np.ndarray:
        p = np.zeros(self.n_codes)
        if isinstance(spec, dict):
            for k, w in spec.items():
                p[int(k)] = float(w)
        else:
            p[list(spec)] = 1.0
        if p.sum() <= 0:
            raise ValueError("group profile has no mass")
        return p / p.sum()

    @classmethod
    def from_dict(cls, d: dict) -> "MockWorld":
        return cls(n_codes=d.get("n_codes", 10), dim=d.get("dim", 64), seed=d.get("seed", 0),
                   noise=d.get("noise", 0.15), groups=d.get("groups"))

    def to_dict(self) -> dict:
        return {"n_codes": self.n_codes, "dim": self.dim, "seed": self.seed,
                "noise": self.noise, "groups": self.group_spec}

    # -- text -------------------------------------------------------------

    def code_for_name(self, name: str) -> Optional[PlantedCode]:
        return self._by_name.get(name.strip().lower())

    def find_codes(self, text: str) -> list[int]:
        return [self._cue_index[m.group(0)] for m in self._cue_re.finditer(text)]

    def expression_text(self, k: int, rng: np.random.Generator) -> str:
        template = _TEMPLATES[rng.integers(len(_TEMPLATES))]
        ctx = _CONTEXTS[rng.integers(len(_CONTEXTS))]
        return template.format(cue=self.codes[k].cue, ctx=ctx)

    def filler_sentence(self, rng: np.random.Generator, n_words: int = 8) -> str:
        words = [_FILLER[i] for i in rng.integers(len(_FILLER), size=n_words)]
        return " ".join(words).capitalize() + "."

    def document_text(self, topic: str, code_ids: Sequence[int], rng: np.random.Generator,
                      n_filler: int = 2) -> str:
        parts = [f"Some thoughts on {topic}."]
        for k in code_ids:
            parts.append(self.expression_text(k, rng))
            for _ in range(n_filler):
                parts.append(self.filler_sentence(rng))
        return " ".join(parts)

    # -- geometry ---------------------------------------------------------

    def embed(self, text: str) -> np.ndarray:
        found = self.find_codes(text)
        noise = hashed_bow(text, self.dim)
        if found:
            counts = Counter(found)
            total = sum(counts.values())
            base = sum(self.codes[k].anchor * c for k, c in counts.items()) / total
            vec = base + self.noise * noise
        else:
            vec = noise
        return vec / np.linalg.norm(vec)


def split_sentences(text: str) -> list[str]:
    return [s.strip() for s in re.split(r"(?<=[.!?])\s+", text) if s.strip()]


class MockChatClient(ChatClient):
    """Answers every template from structured request fields, never from the prompt."""

    def __init__(self, world: MockWorld, model_name: str = "mock", options: Optional[dict] = None,
                 planted: Optional[dict] = None):
        self.world = world
        self.model_name = model_name
        self.options = options or {}
        # doc_id -> list of {"code_name", "description"} returned verbatim
        self.planted = planted or {}
        self.calls = 0

    def complete(self, request: ChatRequest) -> str:
        self.calls += 1
        handler = {
            TemplateId.EXTRACT_VALUES: self._extract,
            TemplateId.NAME_CODE: self._name,
            TemplateId.RECONSTRUCT_DOCUMENT: self._reconstruct,
            TemplateId.GENERATE_DOCUMENT: self._generate,
            TemplateId.ROLE_PRIMED_GENERATE: self._generate,
            TemplateId.FILTER_TOPIC_MATCH: lambda r: "VERDICT: POSSIBLE\nREASON: mock judge",
        }[request.template_id]
        return handler(request)

    def _extract(self, request: ChatRequest) -> str:
        doc_id = request.fields.get("doc_id")
        if doc_id in self.planted:
            records = self.planted[doc_id]
        else:
            records = []
            for sentence in split_sentences(request.fields["document"]):
                found = self.world.find_codes(sentence)
                if found:
                    records.append({"code_name": self.world.codes[found[0]].name.lower(),
                                    "description": sentence})
        body = json.dumps(records, indent=4, ensure_ascii=False)
        return f"Stance: the author argues a position on the topic.\n```python\n{body}\n```"

    def _name(self, request: ChatRequest) -> str:
        hints = [h for h in request.fields.get("hints", []) if h]
        if not hints:
            for line in request.fields["descriptions"].splitlines():
                hints.extend(self.world.codes[k].name for k in self.world.find_codes(line))
        if hints:
            counts = Counter(h.strip().lower() for h in hints)
            best = max(counts.values())
            # ties go to the most central member
            name = next(h for h in (x.strip().lower() for x in hints) if counts[h] == best)
            name = name.title()
        else:
            name = "Unnamed Value"
        return json.dumps({"code_name": name})

    def _reconstruct(self, request: ChatRequest) -> str:
        topic = request.fields["topic"]
        codes = sorted(request.fields["codes"], key=lambda c: stable_hash(c[0]))
        rng = derive_rng(self.world.seed, "reconstruct", topic, request.sample_index,
                         tuple(c[0] for c in codes))
        parts = [f"Some thoughts on {topic}."]
        for name, prob in codes:
            planted = self.world.code_for_name(name)
            reps = max(1, int(round(prob * 4)))
            for _ in range(reps):
                if planted is not None:
                    parts.append(self.world.expression_text(planted.index, rng))
                else:
                    parts.append(f"The author holds to principle {stable_hash(name)[:8]}.")
            parts.append(self.world.filler_sentence(rng))
        return " ".join(parts)

    def _generate(self, request: ChatRequest) -> str:
        topic = request.fields["topic"]
        role = request.fields.get("role")
        model = request.fields.get("model_name", self.model_name)
        world = self.world
        if not world.group_profiles:
            base = np.full(world.n_codes, 1.0 / world.n_codes)
        else:
            weights = self.options.get("profile") or {g: 1.0 for g in world.group_profiles}
            base = sum(float(w) * world.group_profiles[g] for g, w in weights.items())
            base = base / base.sum()
        if role is not None and role in world.group_profiles:
            s = float(self.options.get("priming_strength", 0.6))
            base = (1 - s) * base + s * world.group_profiles[role]
        rng = derive_rng(world.seed, "generate", topic, model, role or "", request.sample_index)
        n = min(int(self.options.get("codes_per_document", 3)), int((base > 0).sum()))
        picks = rng.choice(world.n_codes, size=n, replace=False, p=base)
        return world.document_text(topic, [int(k) for k in picks], rng)


class MockEmbeddingClient(EmbeddingClient):
    def __init__(self, world: MockWorld):
        self.world = world
        self.calls = 0

    def embed(self, texts: Sequence[str]) -> list[list[float]]:
        self.calls += 1
        return [self.world.embed(t).tolist() for t in texts]


def mock_gateway(world: MockWorld, config: Optional[GatewayConfig] = None,
                 planted: Optional[dict] = None) -> Gateway:
    config = config or GatewayConfig(max_parallel=1, backoff_base=0.0)
    chat = MockChatClient(world, config.model_name, config.options, planted)
    return Gateway(config, chat=chat, embedder=MockEmbeddingClient(world))
