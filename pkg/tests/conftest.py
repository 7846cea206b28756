"""Shared fixtures and scripted providers."""

from __future__ import annotations

from typing import Callable, Optional, Sequence

import numpy as np
import pytest

from valuealign.core import ValueExpression
from valuealign.gateway import (
    ChatClient, ChatRequest, EmbeddingClient, Gateway, GatewayConfig, MockWorld, mock_gateway,
)
from valuealign.synthetic import planted_world

_CRITERIA: dict[int, tuple[str, str]] = {}


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    mark = item.get_closest_marker("criterion")
    if mark is None:
        return
    number, title = mark.args
    if report.when == "call" or (report.when == "setup" and not report.passed):
        _CRITERIA[number] = ("PASS" if report.passed else "FAIL", title)


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_CRITERIA):
        verdict, title = _CRITERIA[number]
        terminalreporter.write_line(f"{verdict}  criterion {number:2d}: {title}")


class ScriptedChat(ChatClient):
    """Chat client answering from a function of the request."""

    def __init__(self, reply: Callable[[ChatRequest], str]):
        self.reply = reply
        self.calls = 0
        self.requests: list[ChatRequest] = []

    def complete(self, request: ChatRequest) -> str:
        self.calls += 1
        self.requests.append(request)
        return self.reply(request)


class TableEmbedder(EmbeddingClient):
    """Embeds texts by table lookup, with a fallback function for unknown texts."""

    def __init__(self, table: dict, fallback: Optional[Callable[[str], Sequence[float]]] = None):
        self.table = table
        self.fallback = fallback
        self.calls = 0

    def embed(self, texts):
        self.calls += 1
        out = []
        for t in texts:
            if t in self.table:
                out.append(list(self.table[t]))
            elif self.fallback is not None:
                out.append(list(self.fallback(t)))
            else:
                raise KeyError(t)
        return out


def quiet_config(**kw) -> GatewayConfig:
    kw.setdefault("max_parallel", 1)
    kw.setdefault("backoff_base", 0.0)
    return GatewayConfig(**kw)


def scripted_gateway(reply, table=None, fallback=None, **cfg) -> Gateway:
    return Gateway(quiet_config(**cfg), chat=ScriptedChat(reply),
                   embedder=TableEmbedder(table or {}, fallback))


def planted_expressions(world: MockWorld, per_code: int, codes: Sequence[int], seed: int = 0):
    """Embedded expressions for the given planted codes, with ground-truth labels."""
    rng = np.random.default_rng(seed)
    exprs, labels = [], []
    for k in codes:
        for i in range(per_code):
            text = world.expression_text(k, rng) + f" ({i})"
            exprs.append(ValueExpression(text, world.codes[k].name.lower(), f"d{k}-{i}",
                                         world.embed(text)))
            labels.append(k)
    return exprs, np.array(labels)


def anchored_world(anchors: np.ndarray, noise: float = 0.05, seed: int = 0) -> MockWorld:
    anchors = np.asarray(anchors, dtype=float)
    return MockWorld(n_codes=anchors.shape[0], dim=anchors.shape[1], seed=seed, noise=noise,
                     anchors=anchors)


@pytest.fixture
def world() -> MockWorld:
    return planted_world(n_codes=10, seed=0)


@pytest.fixture
def gateway(world) -> Gateway:
    return mock_gateway(world)
