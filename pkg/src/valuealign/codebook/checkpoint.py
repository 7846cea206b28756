"""JSON persistence of codebooks and optimizer state."""

from __future__ import annotations

import hashlib
import json
import os
import tempfile
from pathlib import Path
from typing import Callable, Optional, Sequence

import numpy as np

from ..core import Codebook, ValueCode, ValueExpression

FORMAT = "valuealign-codebook/1"

EmbedFn = Callable[[Sequence[str]], list]


def codebook_to_dict(codebook: Codebook, include_embeddings: bool = False) -> dict:
    codes = []
    for c in codebook.codes:
        members = []
        for m in c.members:
            rec = {"text": m.text, "doc_id": m.doc_id, "code_name_hint": m.code_name_hint}
            if include_embeddings:
                rec["embedding"] = [float(x) for x in m.embedding]
            members.append(rec)
        codes.append({
            "id": c.id,
            "name": c.name,
            "centroid": [float(x) for x in c.centroid],
            "n_k": float(c.usage),
            "distortion_history": [float(x) for x in c.distortion_history],
            "age": c.age,
            "members": members,
        })
    return {
        "iteration": codebook.iteration,
        "sigma": codebook.sigma,
        "score_history": [float(s) for s in codebook.score_history],
        "codes": codes,
    }


def codebook_from_dict(d: dict, embed: Optional[EmbedFn] = None) -> Codebook:
    """Rebuild a codebook; member embeddings come from the file or from ``embed``."""
    codes = []
    for rec in d["codes"]:
        members = [ValueExpression(m["text"], m.get("code_name_hint", ""), m.get("doc_id", ""),
                                   np.asarray(m["embedding"], dtype=float) if "embedding" in m else None)
                   for m in rec["members"]]
        codes.append(ValueCode(int(rec["id"]), rec["name"], np.asarray(rec["centroid"], dtype=float),
                               members, float(rec.get("n_k", 0.0)),
                               [float(x) for x in rec.get("distortion_history", [])],
                               int(rec.get("age", 0))))
    missing = [m for c in codes for m in c.members if m.embedding is None]
    if missing:
        if embed is None:
            raise ValueError("checkpoint has no member embeddings and no embedder was given")
        for m, vec in zip(missing, embed([m.text for m in missing])):
            m.embedding = np.asarray(vec, dtype=float)
    for c in codes:
        if c.members and c.centroid.shape != c.members[0].embedding.shape:
            raise ValueError(f"code {c.id}: centroid and member embedding dims differ")
    sigma = d.get("sigma")
    return Codebook(codes, int(d.get("iteration", 0)), [float(s) for s in d.get("score_history", [])],
                    None if sigma is None else float(sigma))


def dumps(payload: dict) -> str:
    return json.dumps(payload, sort_keys=True, indent=1, ensure_ascii=False) + "\n"


def atomic_write(path: Path, text: str) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.")
    try:
        with os.fdopen(fd, "w", encoding="utf-8") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def codebook_id(payload: dict) -> str:
    """Content hash of the codebook part of a checkpoint."""
    body = json.dumps(payload["codebook"], sort_keys=True, ensure_ascii=False)
    return hashlib.sha256(body.encode("utf-8")).hexdigest()[:16]


def save_checkpoint(path, codebook: Codebook, config: dict, state: Optional[dict] = None,
                    include_embeddings: bool = False) -> str:
    """Write a checkpoint and return its codebook id."""
    payload = {
        "format": FORMAT,
        "iteration": codebook.iteration,
        "config": config,
        "codebook": codebook_to_dict(codebook, include_embeddings),
        "state": state or {},
    }
    payload["codebook_id"] = codebook_id(payload)
    atomic_write(Path(path), dumps(payload))
    return payload["codebook_id"]


def read_checkpoint(path) -> dict:
    payload = json.loads(Path(path).read_text(encoding="utf-8"))
    if payload.get("format") != FORMAT:
        raise ValueError(f"{path}: not a codebook checkpoint (format {payload.get('format')!r})")
    return payload


def load_checkpoint(path, embed: Optional[EmbedFn] = None) -> tuple[Codebook, dict]:
    payload = read_checkpoint(path)
    return codebook_from_dict(payload["codebook"], embed), payload


def iteration_checkpoints(directory) -> list[Path]:
    return sorted(Path(directory).glob("iter_*.json"))
