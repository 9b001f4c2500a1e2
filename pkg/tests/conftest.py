"""Shared test helpers: queued fake gateways and tiny corpus builders."""

from __future__ import annotations

import pytest

from autoresearch.gateway import CallableProvider, ChatRequest, ChatResponse, Gateway, Mode


class QueueProvider:
    """Serves queued responses per agent tag; strings mean plain text."""

    def __init__(self, scripts: dict[str, list]) -> None:
        self.scripts = {tag: list(queue) for tag, queue in scripts.items()}
        self.requests: list[ChatRequest] = []

    def send(self, request: ChatRequest) -> ChatResponse:
        self.requests.append(request)
        queue = self.scripts.get(request.agent)
        if not queue:
            raise AssertionError(f"no scripted response left for agent {request.agent!r}")
        entry = queue.pop(0)
        if isinstance(entry, str):
            return ChatResponse.from_text(entry)
        if isinstance(entry, ChatResponse):
            return entry
        return ChatResponse.from_payload(entry)


def queue_gateway(scripts: dict[str, list]) -> Gateway:
    return Gateway(QueueProvider(scripts), mode=Mode.LIVE, sleeper=None)


@pytest.fixture
def text_gateway():
    """Gateway factory: answers every request with the given fixed text."""

    def make(text: str) -> Gateway:
        return Gateway(
            CallableProvider(lambda req: ChatResponse.from_text(text)),
            mode=Mode.LIVE,
            sleeper=None,
        )

    return make
