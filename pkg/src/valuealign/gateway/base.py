"""Provider-agnostic gateway: prompting, parsing, retries, caching."""

from __future__ import annotations

import ast
import enum
import json
import logging
import os
import re
import tempfile
import threading
import time
from abc import ABC, abstractmethod
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, asdict
from pathlib import Path
from typing import Callable, Optional, Sequence

import numpy as np

from ..core import Document, Origin, ValueExpression, stable_hash
from .prompts import (
    EXTRACT_VALUES, GENERATE_DOCUMENT, NAME_CODE, RECONSTRUCT_DOCUMENT,
    REPROMPT_SUFFIX, ROLE_PRIMED_GENERATE, TemplateId, format_value_list, role_adjective,
)

log = logging.getLogger(__name__)


class GatewayError(Exception):
    pass


class TransportError(GatewayError):
    pass


class ParseError(GatewayError):
    def __init__(self, message: str, raw: str = ""):
        super().__init__(message)
        self.raw = raw


class ProviderKind(str, enum.Enum):
    REMOTE_CHAT = "remote_chat"
    REMOTE_EMBED = "remote_embed"
    MOCK = "mock"


@dataclass
class GatewayConfig:
    provider_kind: ProviderKind = ProviderKind.MOCK
    endpoint: str = ""
    model_name: str = "mock"
    api_key_env: str = ""
    max_retries: int = 2
    request_timeout: float = 60.0
    max_parallel: int = 4
    cache_dir: Optional[str] = None
    temperature: float = 0.0
    backoff_base: float = 0.5
    # provider-specific settings (mock world, reply paths, ...)
    options: dict = field(default_factory=dict)

    def __post_init__(self):
        self.provider_kind = ProviderKind(self.provider_kind)
        if self.max_retries < 0:
            raise ValueError("max_retries must be >= 0")
        if self.max_parallel < 1:
            raise ValueError("max_parallel must be >= 1")

    @classmethod
    def from_dict(cls, d: dict) -> "GatewayConfig":
        known = {f for f in cls.__dataclass_fields__}
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown gateway fields: {sorted(unknown)}")
        return cls(**d)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["provider_kind"] = self.provider_kind.value
        return d


@dataclass
class ChatRequest:
    template_id: TemplateId
    prompt: str
    # structured inputs; mock providers answer from these instead of the prompt
    fields: dict
    temperature: float = 0.0
    sample_index: int = 0


class ChatClient(ABC):
    calls = 0

    @abstractmethod
    def complete(self, request: ChatRequest) -> str:
        ...


class EmbeddingClient(ABC):
    calls = 0

    @abstractmethod
    def embed(self, texts: Sequence[str]) -> list[list[float]]:
        ...


class ReplyCache:
    """One file per content hash; concurrent readers, serialized writers."""

    def __init__(self, root):
        self.root = Path(root)
        self.root.mkdir(parents=True, exist_ok=True)
        self._lock = threading.Lock()

    def _path(self, key: str) -> Path:
        return self.root / key[:2] / f"{key}.txt"

    def get(self, key: str) -> Optional[str]:
        path = self._path(key)
        if path.exists():
            return path.read_text(encoding="utf-8")
        return None

    def put(self, key: str, value: str) -> None:
        path = self._path(key)
        with self._lock:
            path.parent.mkdir(parents=True, exist_ok=True)
            fd, tmp = tempfile.mkstemp(dir=path.parent, suffix=".tmp")
            with os.fdopen(fd, "w", encoding="utf-8") as fh:
                fh.write(value)
            os.replace(tmp, path)


_CODE_BLOCK = re.compile(r"```(?:python|json)?\s*(.*?)```", re.DOTALL)


def _literal(text: str):
    try:
        return json.loads(text)
    except ValueError:
        return ast.literal_eval(text)


def parse_value_records(raw: str) -> list[dict]:
    """Pull the list of ``{code_name, description}`` records out of a reply."""
    blocks = _CODE_BLOCK.findall(raw)
    candidates = [b.strip() for b in blocks]
    if "[" in raw and "]" in raw:
        candidates.append(raw[raw.index("["): raw.rindex("]") + 1])
    for cand in candidates:
        try:
            records = _literal(cand)
        except (ValueError, SyntaxError):
            continue
        if not isinstance(records, list):
            continue
        out = []
        for rec in records:
            if not isinstance(rec, dict) or "description" not in rec or "code_name" not in rec:
                raise ParseError("record without code_name/description", raw)
            out.append({"code_name": str(rec["code_name"]).strip(),
                        "description": str(rec["description"]).strip()})
        return out
    raise ParseError("no structured record list in reply", raw)


def parse_code_name(raw: str) -> str:
    text = raw.strip()
    blocks = _CODE_BLOCK.findall(text)
    candidates = [b.strip() for b in blocks]
    if "{" in text and "}" in text:
        candidates.append(text[text.index("{"): text.rindex("}") + 1])
    for cand in candidates:
        try:
            obj = _literal(cand)
        except (ValueError, SyntaxError):
            continue
        if isinstance(obj, dict) and str(obj.get("code_name", "")).strip():
            return str(obj["code_name"]).strip()
    raise ParseError("no code_name field in reply", raw)


def parse_text(raw: str) -> str:
    text = raw.strip()
    if not text:
        raise ParseError("empty reply", raw)
    return text


class Gateway:
    """High-level operations over one chat client and/or one embedding client."""

    def __init__(self, config: GatewayConfig, chat: Optional[ChatClient] = None,
                 embedder: Optional[EmbeddingClient] = None,
                 sleep: Callable[[float], None] = time.sleep):
        self.config = config
        self.chat = chat
        self.embedder = embedder
        self.cache = ReplyCache(config.cache_dir) if config.cache_dir else None
        self._slots = threading.BoundedSemaphore(config.max_parallel)
        self._sleep = sleep
        self._memo: dict[str, np.ndarray] = {}
        self._memo_lock = threading.Lock()

    # -- plumbing ---------------------------------------------------------

    def _with_retry(self, fn: Callable[[], object]):
        attempts = self.config.max_retries + 1
        last = None
        for attempt in range(attempts):
            try:
                with self._slots:
                    return fn()
            except TransportError as exc:
                last = exc
                log.warning("provider call failed (attempt %d/%d): %s", attempt + 1, attempts, exc)
                if attempt + 1 < attempts:
                    self._sleep(self.config.backoff_base * 2 ** attempt)
        raise TransportError(f"provider failed after {attempts} attempt(s): {last}") from last

    def _chat_raw(self, request: ChatRequest) -> str:
        if self.chat is None:
            raise GatewayError("gateway has no chat client")
        key = stable_hash("chat", self.config.model_name, request.template_id.value,
                          request.prompt, request.temperature, request.sample_index)
        if self.cache is not None:
            hit = self.cache.get(key)
            if hit is not None:
                return hit
        raw = self._with_retry(lambda: self.chat.complete(request))
        if not isinstance(raw, str):
            raise TransportError(f"provider returned {type(raw).__name__}, expected text")
        if self.cache is not None:
            self.cache.put(key, raw)
        return raw

    def _chat(self, request: ChatRequest, parser: Callable[[str], object]):
        raw = self._chat_raw(request)
        try:
            return parser(raw)
        except ParseError:
            log.info("unparseable %s reply, re-prompting once", request.template_id.value)
        retry = ChatRequest(request.template_id, request.prompt + REPROMPT_SUFFIX,
                            request.fields, request.temperature, request.sample_index)
        return parser(self._chat_raw(retry))

    def map(self, fn: Callable, items: Sequence) -> list:
        """Apply ``fn`` over ``items`` with at most ``max_parallel`` workers, order kept."""
        if self.config.max_parallel == 1 or len(items) < 2:
            return [fn(x) for x in items]
        with ThreadPoolExecutor(max_workers=self.config.max_parallel) as pool:
            return list(pool.map(fn, items))

    # -- operations -------------------------------------------------------

    def extract_value_expressions(self, doc: Document) -> list[ValueExpression]:
        if not doc.text.strip():
            raise ValueError("document text must be non-empty")
        fields = {"document": doc.text, "doc_id": doc.id}
        request = ChatRequest(TemplateId.EXTRACT_VALUES, EXTRACT_VALUES.render(**fields),
                              fields, self.config.temperature)
        records = self._chat(request, parse_value_records)
        return [ValueExpression(text=r["description"], code_name_hint=r["code_name"], doc_id=doc.id)
                for r in records if r["description"]]

    def reconstruct_document(self, topic: str, codes: Sequence[tuple[str, float]],
                             sample_index: int = 0) -> str:
        if not codes:
            raise ValueError("reconstruction needs at least one code")
        if any(p < 0 for _, p in codes):
            raise ValueError("code probabilities must be non-negative")
        codes = [(str(n), float(p)) for n, p in codes]
        fields = {"topic": topic, "values": format_value_list(codes), "codes": codes,
                  "sample_index": sample_index}
        temperature = self.config.options.get("reconstruction_temperature", 1.0)
        request = ChatRequest(TemplateId.RECONSTRUCT_DOCUMENT, RECONSTRUCT_DOCUMENT.render(**fields),
                              fields, temperature, sample_index)
        return self._chat(request, parse_text)

    def name_code(self, members: Sequence[ValueExpression]) -> str:
        """Name a cluster; ``members`` must be ordered most-central first."""
        if not members:
            raise ValueError("cannot name an empty code")
        descriptions = [m.text for m in members]
        fields = {"descriptions": "\n".join(f"- {d}" for d in descriptions),
                  "hints": [m.code_name_hint for m in members]}
        request = ChatRequest(TemplateId.NAME_CODE, NAME_CODE.render(**fields),
                              fields, self.config.temperature)
        return self._chat(request, parse_code_name)

    def generate_examinee_document(self, topic: str, role_group: Optional[str] = None,
                                   doc_id: Optional[str] = None, sample_index: int = 0) -> Document:
        if not topic or not topic.strip():
            raise ValueError("topic must be non-empty")
        fields = {"topic": topic, "role": role_group, "model_name": self.config.model_name}
        if role_group is None:
            template = GENERATE_DOCUMENT
        else:
            template = ROLE_PRIMED_GENERATE
            fields["role_adjective"] = role_adjective(role_group)
        request = ChatRequest(template.template_id, template.render(**fields), fields,
                              self.config.options.get("generation_temperature", 1.0), sample_index)
        text = self._chat(request, parse_text)
        if doc_id is None:
            doc_id = f"{self.config.model_name}:{role_group or 'control'}:{stable_hash(topic)[:12]}"
        return Document(id=doc_id, topic_id=topic, group=role_group or self.config.model_name,
                        text=text, origin=Origin.MODEL)

    def embed_texts(self, texts: Sequence[str], batch_size: int = 64) -> list[np.ndarray]:
        if self.embedder is None:
            raise GatewayError("gateway has no embedding client")
        if not texts:
            raise ValueError("nothing to embed")
        if any(not t or not t.strip() for t in texts):
            raise ValueError("cannot embed empty text")
        keys = [stable_hash("embed", self.config.model_name, t) for t in texts]
        out: dict[str, np.ndarray] = {}
        todo: list[tuple[str, str]] = []
        for key, text in zip(keys, texts):
            if key in out:
                continue
            with self._memo_lock:
                vec = self._memo.get(key)
            if vec is None and self.cache is not None:
                hit = self.cache.get(key)
                if hit is not None:
                    vec = np.asarray(json.loads(hit), dtype=float)
            if vec is not None:
                out[key] = vec
            else:
                todo.append((key, text))
                out[key] = None
        for start in range(0, len(todo), batch_size):
            batch = todo[start:start + batch_size]
            vectors = self._with_retry(lambda: self.embedder.embed([t for _, t in batch]))
            if len(vectors) != len(batch):
                raise TransportError(f"embedder returned {len(vectors)} vectors for {len(batch)} texts")
            for (key, _), vec in zip(batch, vectors):
                arr = np.asarray(vec, dtype=float)
                out[key] = arr
                if self.cache is not None:
                    self.cache.put(key, json.dumps([float(x) for x in arr]))
        with self._memo_lock:
            self._memo.update(out)
        result = [out[k] for k in keys]
        dims = {v.shape for v in result}
        if len(dims) != 1:
            raise GatewayError(f"embedding dimension mismatch within batch: {sorted(dims)}")
        return result


@dataclass
class Gateways:
    """The per-role gateways one run needs."""

    extractor: Gateway
    decoder: Gateway
    namer: Gateway
    embedder: Gateway
    examinee: Optional[Gateway] = None

    @classmethod
    def single(cls, gateway: Gateway) -> "Gateways":
        return cls(gateway, gateway, gateway, gateway, gateway)

    @classmethod
    def coerce(cls, obj) -> "Gateways":
        return obj if isinstance(obj, Gateways) else cls.single(obj)
