"""Run configuration: one seed, corpus paths, provider profiles and module settings."""

from __future__ import annotations

import copy
import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Mapping, Optional

import yaml

from .codebook import OptimizerConfig
from .gateway import GatewayConfig
from .recognizer import RecognizerParams
from .uot import MetricConfig

GATEWAY_ROLES = ("extractor", "decoder", "namer", "embedder")

DEFAULT_MOCK = {"provider_kind": "mock", "model_name": "mock", "max_parallel": 1,
                "backoff_base": 0.0}


@dataclass
class RunConfig:
    corpora: dict[str, str]
    output_dir: str = "valuealign-out"
    seed: int = 0
    examinee_corpora: dict[str, str] = field(default_factory=dict)
    # provider profiles; roles missing here fall back to "default"
    gateways: dict[str, dict] = field(default_factory=lambda: {"default": dict(DEFAULT_MOCK)})
    # examinee model name -> provider profile used to generate documents
    examinees: dict[str, dict] = field(default_factory=dict)
    # groups to role-prime each generated examinee toward; the control run is always made
    priming_roles: list[str] = field(default_factory=list)
    docs_per_topic: int = 1
    mock_world: dict = field(default_factory=dict)
    optimizer: dict = field(default_factory=dict)
    metric: dict = field(default_factory=dict)
    recognizer: dict = field(default_factory=dict)
    topic_fraction: float = 1.0
    # groups whose corpora train the codebook; empty means all
    training_groups: list[str] = field(default_factory=list)
    method_name: str = "valuealign"
    base_dir: Optional[str] = None

    def __post_init__(self):
        if not self.corpora:
            raise ValueError("at least one reference corpus is required")
        if not 0 < self.topic_fraction <= 1:
            raise ValueError("topic_fraction must lie in (0, 1]")
        if self.docs_per_topic < 1:
            raise ValueError("docs_per_topic must be >= 1")
        unknown = set(self.training_groups) - set(self.corpora)
        if unknown:
            raise ValueError(f"training groups without a corpus: {sorted(unknown)}")
        self.optimizer_config()
        self.metric_config()
        self.recognizer_options()

    # -- loading ------------------------------------------------------------

    @classmethod
    def from_dict(cls, d: Mapping[str, Any], base_dir: Optional[str] = None) -> "RunConfig":
        known = set(cls.__dataclass_fields__)
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown config key(s): {sorted(unknown)}")
        d = copy.deepcopy(dict(d))
        if base_dir is not None:
            d.setdefault("base_dir", base_dir)
        return cls(**d)

    @classmethod
    def load(cls, path, overrides: Optional[Mapping[str, Any]] = None) -> "RunConfig":
        path = Path(path)
        text = path.read_text(encoding="utf-8")
        data = yaml.safe_load(text) if path.suffix in (".yaml", ".yml") else json.loads(text)
        if not isinstance(data, dict):
            raise ValueError(f"{path}: top level must be a mapping")
        data = merge_overrides(data, overrides or {})
        return cls.from_dict(data, base_dir=str(path.parent.resolve()))

    def check_paths(self) -> None:
        for label, mapping in (("corpus", self.corpora), ("examinee corpus", self.examinee_corpora)):
            for name, p in mapping.items():
                if not self.resolve(p).is_file():
                    raise FileNotFoundError(f"{label} for {name!r} not found: {self.resolve(p)}")

    def resolve(self, p) -> Path:
        p = Path(p)
        if not p.is_absolute() and self.base_dir:
            return Path(self.base_dir) / p
        return p

    @property
    def out(self) -> Path:
        return self.resolve(self.output_dir)

    # -- typed views -------------------------------------------------------

    def optimizer_config(self) -> OptimizerConfig:
        opts = dict(self.optimizer)
        opts.setdefault("seed", self.seed)
        return OptimizerConfig.from_dict(opts)

    def metric_config(self) -> MetricConfig:
        unknown = set(self.metric) - set(MetricConfig.__dataclass_fields__)
        if unknown:
            raise ValueError(f"unknown metric option(s): {sorted(unknown)}")
        return MetricConfig(**self.metric)

    def recognizer_options(self) -> dict:
        allowed = {"sigma2", "min_code_prob", "topic_weighted"}
        unknown = set(self.recognizer) - allowed
        if unknown:
            raise ValueError(f"unknown recognizer option(s): {sorted(unknown)}")
        RecognizerParams(**self.recognizer)
        return dict(self.recognizer)

    def gateway_profile(self, role: str) -> dict:
        profile = self.gateways.get(role, self.gateways.get("default"))
        if profile is None:
            raise ValueError(f"no gateway profile for role {role!r} and no default")
        profile = dict(profile)
        if profile.get("cache_dir"):
            profile["cache_dir"] = str(self.resolve(profile["cache_dir"]))
        GatewayConfig.from_dict(profile)
        return profile

    def to_dict(self) -> dict:
        d = {k: copy.deepcopy(getattr(self, k)) for k in self.__dataclass_fields__}
        d.pop("base_dir")
        return d

    def config_hash(self) -> str:
        """Digest of everything that can change a number; the output location is excluded."""
        d = self.to_dict()
        d.pop("output_dir")
        body = json.dumps(d, sort_keys=True, ensure_ascii=False)
        return hashlib.sha256(body.encode("utf-8")).hexdigest()[:12]


def merge_overrides(data: dict, overrides: Mapping[str, Any]) -> dict:
    """Apply dotted-key overrides (``optimizer.T``) on top of a config mapping."""
    data = copy.deepcopy(data)
    for key, value in overrides.items():
        if value is None:
            continue
        parts = key.split(".")
        node = data
        for p in parts[:-1]:
            node = node.setdefault(p, {})
        if isinstance(value, dict) and isinstance(node.get(parts[-1]), dict):
            node[parts[-1]] = {**node[parts[-1]], **value}
        else:
            node[parts[-1]] = value
    return data
