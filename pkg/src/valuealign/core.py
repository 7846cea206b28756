"""Domain types and numeric primitives shared across the package."""

from __future__ import annotations

import enum
import hashlib
from dataclasses import dataclass, field
from typing import Iterable, Optional, Sequence

import numpy as np

PROB_ATOL = 1e-9

Embedding = np.ndarray
GroupId = str


class Origin(str, enum.Enum):
    HUMAN = "human"
    MODEL = "model"


@dataclass(frozen=True)
class Document:
    id: str
    topic_id: str
    group: GroupId
    text: str
    origin: Origin = Origin.HUMAN

    def __post_init__(self):
        if not self.text or not self.text.strip():
            raise ValueError(f"document {self.id!r} has empty text")
        if not isinstance(self.origin, Origin):
            object.__setattr__(self, "origin", Origin(self.origin))


@dataclass
class Corpus:
    group: GroupId
    documents: list[Document]

    def __post_init__(self):
        if not self.documents:
            raise ValueError("corpus must contain at least one document")
        seen = set()
        for doc in self.documents:
            if doc.id in seen:
                raise ValueError(f"duplicate document id {doc.id!r}")
            seen.add(doc.id)

    @property
    def size(self) -> int:
        return len(self.documents)

    def __len__(self):
        return len(self.documents)

    def __iter__(self):
        return iter(self.documents)

    def topics(self) -> list[str]:
        return sorted({d.topic_id for d in self.documents})


@dataclass
class ValueExpression:
    text: str
    code_name_hint: str = ""
    doc_id: str = ""
    embedding: Optional[Embedding] = None

    def __post_init__(self):
        if not self.text or not self.text.strip():
            raise ValueError("value expression text must be non-empty")


@dataclass
class ValueCode:
    id: int
    name: str
    centroid: Embedding
    members: list[ValueExpression] = field(default_factory=list)
    usage: float = 0.0
    distortion_history: list[float] = field(default_factory=list)
    # iterations survived since the code was (re)created
    age: int = 0

    def member_matrix(self) -> np.ndarray:
        return np.stack([m.embedding for m in self.members])

    def recompute_centroid(self) -> None:
        self.centroid = self.member_matrix().mean(axis=0)


@dataclass
class Codebook:
    codes: list[ValueCode]
    iteration: int = 0
    score_history: list[float] = field(default_factory=list)
    sigma: Optional[float] = None

    @property
    def K(self) -> int:
        return len(self.codes)

    def __len__(self):
        return len(self.codes)

    def centroids(self) -> np.ndarray:
        return np.stack([c.centroid for c in self.codes])

    def names(self) -> list[str]:
        return [c.name for c in self.codes]

    def reindex(self) -> None:
        for i, code in enumerate(self.codes):
            code.id = i

    def n_members(self) -> int:
        return sum(len(c.members) for c in self.codes)


@dataclass
class ValueHistogram:
    mass: np.ndarray
    codebook_ref: str = ""

    def __post_init__(self):
        self.mass = np.asarray(self.mass, dtype=float)
        _check_distribution(self.mass)

    @property
    def K(self) -> int:
        return self.mass.shape[0]


@dataclass
class CodeIndexSet:
    indices: tuple[int, ...]
    # probability of drawing this set (any order) without replacement
    prob: float = 1.0
    truncated: bool = False

    def __post_init__(self):
        self.indices = tuple(int(i) for i in self.indices)
        if len(set(self.indices)) != len(self.indices):
            raise ValueError(f"repeated code index in {self.indices}")

    @property
    def M(self) -> int:
        return len(self.indices)

    def __contains__(self, k):
        return k in self.indices

    def __iter__(self):
        return iter(self.indices)


def _check_distribution(p: np.ndarray) -> None:
    if p.ndim != 1 or p.size == 0:
        raise ValueError("not a distribution: expected a non-empty vector")
    if not np.all(np.isfinite(p)) or np.any(p < 0):
        raise ValueError("not a distribution: negative or non-finite entry")
    if abs(p.sum() - 1.0) > PROB_ATOL:
        raise ValueError(f"not a distribution: sums to {p.sum()!r}")


def as_distribution(p) -> np.ndarray:
    p = np.asarray(p, dtype=float)
    _check_distribution(p)
    return p


def cosine_similarity(a, b) -> float:
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.shape != b.shape:
        raise ValueError(f"dimension mismatch: {a.shape} vs {b.shape}")
    na, nb = np.linalg.norm(a), np.linalg.norm(b)
    if na == 0 or nb == 0:
        raise ValueError("degenerate embedding")
    return float(np.clip(a @ b / (na * nb), -1.0, 1.0))


def cosine_matrix(X, Y) -> np.ndarray:
    """Row-wise cosine similarities between two stacks of vectors."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    Y = np.atleast_2d(np.asarray(Y, dtype=float))
    if X.shape[1] != Y.shape[1]:
        raise ValueError(f"dimension mismatch: {X.shape[1]} vs {Y.shape[1]}")
    nx = np.linalg.norm(X, axis=1)
    ny = np.linalg.norm(Y, axis=1)
    if np.any(nx == 0) or np.any(ny == 0):
        raise ValueError("degenerate embedding")
    return np.clip((X / nx[:, None]) @ (Y / ny[:, None]).T, -1.0, 1.0)


def shannon_entropy(p) -> float:
    """Natural-log entropy with 0 log 0 = 0."""
    p = as_distribution(p)
    nz = p[p > 0]
    return float(-(nz * np.log(nz)).sum())


def renyi2_entropy(p) -> float:
    p = as_distribution(p)
    return float(-np.log((p * p).sum()))


def normalize_histogram(raw, codebook_ref: str = "") -> ValueHistogram:
    raw = np.asarray(raw, dtype=float)
    if np.any(raw < 0) or not np.all(np.isfinite(raw)):
        raise ValueError("histogram entries must be finite and non-negative")
    total = raw.sum()
    if total <= 0:
        raise ValueError("empty mass")
    return ValueHistogram(raw / total, codebook_ref)


def stable_hash(*parts) -> str:
    h = hashlib.sha256()
    for part in parts:
        h.update(repr(part).encode("utf-8"))
        h.update(b"\x1f")
    return h.hexdigest()


def derive_rng(seed: int, *keys) -> np.random.Generator:
    """Counter-style child generator: same (seed, keys) -> same stream."""
    words = [int(seed) & 0xFFFFFFFF]
    for key in keys:
        if isinstance(key, (int, np.integer)) and key >= 0:
            words.append(int(key) & 0xFFFFFFFF)
        else:
            words.append(int(stable_hash(key)[:8], 16))
    return np.random.default_rng(np.random.SeedSequence(words))


def derive_seed(seed: int, *keys) -> int:
    return int(derive_rng(seed, *keys).integers(0, 2**31 - 1))


def stack_embeddings(exprs: Sequence[ValueExpression]) -> np.ndarray:
    missing = [e.text for e in exprs if e.embedding is None]
    if missing:
        raise ValueError(f"{len(missing)} expression(s) are not embedded")
    return np.stack([np.asarray(e.embedding, dtype=float) for e in exprs])


def iter_chunks(items: Sequence, size: int) -> Iterable[Sequence]:
    for i in range(0, len(items), size):
        yield items[i:i + size]
