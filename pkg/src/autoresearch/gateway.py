"""Provider-agnostic chat gateway with tool-call parsing and record/replay.

Every agent interaction in the pipeline goes through :class:`Gateway`, so a
run can be executed live, recorded to a transcript store, or replayed from
one with zero network activity. Transcript keys are content hashes of a
canonicalized request: stable field ordering plus whitespace-normalized
message content, so prompts that embed dynamic paths still key identically
across runs.
"""

from __future__ import annotations

import enum
import hashlib
import json
import logging
import os
import re
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable, Iterable, Mapping, Sequence

import jsonschema
import requests

from .config import API_KEY_VAR, ENDPOINT_VAR, MODEL_VAR
from .errors import CredentialsMissing, ProviderFailure, ReplayMiss, ToolArgParse

logger = logging.getLogger(__name__)

ROLES = ("system", "user", "assistant", "tool")


class Mode(enum.Enum):
    LIVE = "live"
    RECORD = "record"
    REPLAY = "replay"


@dataclass(frozen=True)
class ToolSchema:
    """Declares one callable tool: name, description, JSON-schema parameters."""

    name: str
    description: str = ""
    parameters: Mapping[str, Any] = field(default_factory=dict)


@dataclass(frozen=True)
class Message:
    role: str
    content: str

    def __post_init__(self) -> None:
        if self.role not in ROLES:
            raise ValueError(f"unknown message role: {self.role!r}")


@dataclass(frozen=True)
class ChatRequest:
    """One chat-completion request; first message must be the system prompt."""

    messages: tuple[Message, ...]
    tools: tuple[ToolSchema, ...] = ()
    temperature: float = 0.2
    model_id: str = "default-model"
    agent: str = ""  # caller tag, used by scripted providers and transcripts

    def __post_init__(self) -> None:
        if not self.messages:
            raise ValueError("request must contain at least one message")
        if self.messages[0].role != "system":
            raise ValueError("first message must carry the system role")
        if self.temperature < 0:
            raise ValueError("temperature must be non-negative")


@dataclass(frozen=True)
class ToolInvocation:
    name: str
    args: Mapping[str, Any] = field(default_factory=dict)


@dataclass(frozen=True)
class ChatResponse:
    """Either final text or a batch of tool invocations."""

    text: str | None = None
    tool_calls: tuple[ToolInvocation, ...] = ()
    meta: Mapping[str, Any] = field(default_factory=dict, compare=False)

    @classmethod
    def from_text(cls, content: str, **meta: Any) -> "ChatResponse":
        return cls(text=content, meta=meta)

    @classmethod
    def from_tool_calls(
        cls, calls: Iterable[tuple[str, Mapping[str, Any]]], **meta: Any
    ) -> "ChatResponse":
        return cls(
            tool_calls=tuple(ToolInvocation(name, dict(args)) for name, args in calls),
            meta=meta,
        )

    @property
    def is_text(self) -> bool:
        return not self.tool_calls

    def to_payload(self) -> dict[str, Any]:
        if self.tool_calls:
            return {
                "tool_calls": [
                    {"name": c.name, "args": dict(c.args)} for c in self.tool_calls
                ]
            }
        return {"text": self.text or ""}

    @classmethod
    def from_payload(cls, payload: Mapping[str, Any], **meta: Any) -> "ChatResponse":
        if "tool_calls" in payload:
            return cls.from_tool_calls(
                ((c["name"], c.get("args", {})) for c in payload["tool_calls"]), **meta
            )
        return cls.from_text(payload.get("text", ""), **meta)


def chat_request(
    system: str,
    user: str,
    *,
    tools: Sequence[ToolSchema] = (),
    temperature: float = 0.2,
    model_id: str = "default-model",
    agent: str = "",
    history: Sequence[Message] = (),
) -> ChatRequest:
    """Convenience constructor for the common system+user request shape."""
    messages = (Message("system", system), *history, Message("user", user))
    return ChatRequest(
        messages=messages,
        tools=tuple(tools),
        temperature=temperature,
        model_id=model_id,
        agent=agent,
    )


# --- canonicalization -----------------------------------------------------

_WS = re.compile(r"\s+")


def _normalize(text: str) -> str:
    return _WS.sub(" ", text).strip()


def canonicalize_request(request: ChatRequest) -> dict[str, Any]:
    """Stable dict form: sorted fields, whitespace-normalized content."""
    return {
        "agent": request.agent,
        "messages": [
            {"role": m.role, "content": _normalize(m.content)} for m in request.messages
        ],
        "model_id": request.model_id,
        "temperature": request.temperature,
        "tools": sorted(t.name for t in request.tools),
    }


def request_key(request: ChatRequest) -> str:
    blob = json.dumps(canonicalize_request(request), sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(blob.encode("utf-8")).hexdigest()


# --- transcript store -----------------------------------------------------


class TranscriptStore:
    """Newline-delimited transcript records under ``<root>/transcripts``.

    Appends are single atomic writes; identical keys resolve last-writer-wins
    at load time, which is safe because identical keys imply identical
    canonical requests.
    """

    FILENAME = "transcripts.ndjson"

    def __init__(self, root: str | Path) -> None:
        self.root = Path(root)
        self.path = self.root / self.FILENAME

    def append(self, request: ChatRequest, response: ChatResponse, *, now: float | None = None) -> str:
        key = request_key(request)
        record = {
            "key": key,
            "request": canonicalize_request(request),
            "response": response.to_payload(),
            "meta": {
                "model_id": request.model_id,
                "timestamp": time.time() if now is None else now,
                "attempts": response.meta.get("attempts", 1),
            },
        }
        self.root.mkdir(parents=True, exist_ok=True)
        line = json.dumps(record, sort_keys=True, separators=(",", ":")) + "\n"
        with open(self.path, "a", encoding="utf-8") as fh:
            fh.write(line)
            fh.flush()
        return key

    def _load(self) -> dict[str, dict[str, Any]]:
        records: dict[str, dict[str, Any]] = {}
        if not self.path.is_file():
            return records
        with open(self.path, encoding="utf-8") as fh:
            for line in fh:
                line = line.strip()
                if line:
                    record = json.loads(line)
                    records[record["key"]] = record
        return records

    def get(self, key: str) -> dict[str, Any] | None:
        return self._load().get(key)

    def keys(self) -> list[str]:
        return list(self._load())

    def records(self) -> list[dict[str, Any]]:
        return list(self._load().values())


# --- providers ------------------------------------------------------------


class TransientProviderError(Exception):
    """Internal: provider failure worth retrying (network blip, 5xx)."""


class Provider:
    """Anything that can answer a ChatRequest."""

    name = "provider"

    def send(self, request: ChatRequest) -> ChatResponse:  # pragma: no cover - interface
        raise NotImplementedError


class HttpProvider(Provider):
    """POSTs OpenAI-style chat payloads to a configurable endpoint."""

    name = "http"

    def __init__(self, endpoint: str, api_key: str, *, timeout_s: float = 120.0) -> None:
        self.endpoint = endpoint
        self.api_key = api_key
        self.timeout_s = timeout_s

    @classmethod
    def from_env(cls, env: Mapping[str, str] | None = None) -> "HttpProvider":
        env = os.environ if env is None else env
        endpoint = env.get(ENDPOINT_VAR)
        if not endpoint:
            raise CredentialsMissing(ENDPOINT_VAR)
        api_key = env.get(API_KEY_VAR)
        if not api_key:
            raise CredentialsMissing(API_KEY_VAR)
        return cls(endpoint, api_key)

    @staticmethod
    def model_from_env(env: Mapping[str, str] | None = None) -> str | None:
        env = os.environ if env is None else env
        return env.get(MODEL_VAR)

    def send(self, request: ChatRequest) -> ChatResponse:
        payload = {
            "model": request.model_id,
            "temperature": request.temperature,
            "messages": [{"role": m.role, "content": m.content} for m in request.messages],
        }
        if request.tools:
            payload["tools"] = [
                {
                    "type": "function",
                    "function": {
                        "name": t.name,
                        "description": t.description,
                        "parameters": dict(t.parameters) or {"type": "object"},
                    },
                }
                for t in request.tools
            ]
        try:
            resp = requests.post(
                self.endpoint,
                json=payload,
                headers={"Authorization": f"Bearer {self.api_key}"},
                timeout=self.timeout_s,
            )
        except requests.RequestException as exc:
            raise TransientProviderError(str(exc)) from exc
        if resp.status_code >= 500:
            raise TransientProviderError(f"provider returned {resp.status_code}")
        if resp.status_code != 200:
            raise ProviderFailure(f"provider returned {resp.status_code}: {resp.text[:200]}")
        return self._parse(resp.json())

    @staticmethod
    def _parse(body: Mapping[str, Any]) -> ChatResponse:
        try:
            message = body["choices"][0]["message"]
        except (KeyError, IndexError) as exc:
            raise ProviderFailure(f"malformed provider response: {exc}") from exc
        raw_calls = message.get("tool_calls") or []
        if raw_calls:
            calls = []
            for call in raw_calls:
                fn = call.get("function", {})
                try:
                    args = json.loads(fn.get("arguments") or "{}")
                except json.JSONDecodeError as exc:
                    raise ProviderFailure(f"unparsable tool arguments: {exc}") from exc
                calls.append((fn.get("name", ""), args))
            return ChatResponse.from_tool_calls(calls)
        return ChatResponse.from_text(message.get("content") or "")


class ScriptedProvider(Provider):
    """Serves pre-authored responses from fixture files, keyed by agent tag.

    A fixture directory holds ``<agent>.json`` files (optionally under a
    ``script/`` subdirectory), each of the form::

        {"responses": [{"text": "..."}, {"tool_calls": [{"name": ..., "args": {...}}]}]}

    Responses for an agent are consumed in order, which keeps mock pipeline
    runs deterministic for a fixed seed.
    """

    name = "scripted"

    def __init__(self, fixtures_dir: str | Path) -> None:
        root = Path(fixtures_dir)
        if (root / "script").is_dir():
            root = root / "script"
        if not root.is_dir():
            raise ProviderFailure(f"fixture directory not found: {fixtures_dir}")
        self.root = root
        self._queues: dict[str, list[dict[str, Any]]] = {}

    def _queue(self, agent: str) -> list[dict[str, Any]]:
        if agent not in self._queues:
            path = self.root / f"{agent}.json"
            if not path.is_file():
                raise ProviderFailure(f"no fixture script for agent {agent!r} in {self.root}")
            data = json.loads(path.read_text(encoding="utf-8"))
            self._queues[agent] = list(data["responses"])
        return self._queues[agent]

    def send(self, request: ChatRequest) -> ChatResponse:
        agent = request.agent or "default"
        queue = self._queue(agent)
        if not queue:
            raise ProviderFailure(f"fixture script for agent {agent!r} is exhausted")
        return ChatResponse.from_payload(queue.pop(0))


class CallableProvider(Provider):
    """Adapter for tests: wraps a plain function request -> response."""

    name = "callable"

    def __init__(self, fn: Callable[[ChatRequest], ChatResponse]) -> None:
        self.fn = fn

    def send(self, request: ChatRequest) -> ChatResponse:
        return self.fn(request)


# --- gateway --------------------------------------------------------------


class Gateway:
    """Front door for all chat completions, with bounded retries and transcripts."""

    def __init__(
        self,
        provider: Provider | None = None,
        store: TranscriptStore | None = None,
        mode: Mode = Mode.LIVE,
        *,
        retry_limit: int = 3,
        backoff_base_s: float = 0.5,
        sleeper: Callable[[float], None] | None = time.sleep,
    ) -> None:
        if mode in (Mode.LIVE, Mode.RECORD) and provider is None:
            raise ValueError(f"{mode.value} mode requires a provider")
        if mode in (Mode.RECORD, Mode.REPLAY) and store is None:
            raise ValueError(f"{mode.value} mode requires a transcript store")
        self.provider = provider
        self.store = store
        self.mode = mode
        self.retry_limit = retry_limit
        self.backoff_base_s = backoff_base_s
        self.sleeper = sleeper

    def complete(self, request: ChatRequest, mode: Mode | None = None) -> ChatResponse:
        mode = self.mode if mode is None else mode
        if mode is Mode.REPLAY:
            return self._replay(request)
        response = self._send_with_retries(request)
        self._check_tool_names(request, response)
        if mode is Mode.RECORD:
            assert self.store is not None
            self.store.append(request, response)
        return response

    def _replay(self, request: ChatRequest) -> ChatResponse:
        assert self.store is not None
        key = request_key(request)
        record = self.store.get(key)
        if record is None:
            raise ReplayMiss(f"no stored transcript for request key {key} (agent={request.agent!r})")
        return ChatResponse.from_payload(record["response"], replayed=True, attempts=1)

    def _send_with_retries(self, request: ChatRequest) -> ChatResponse:
        assert self.provider is not None
        last_error: Exception | None = None
        for attempt in range(1, self.retry_limit + 1):
            try:
                response = self.provider.send(request)
            except TransientProviderError as exc:
                last_error = exc
                logger.warning("provider attempt %d/%d failed: %s", attempt, self.retry_limit, exc)
                if attempt < self.retry_limit and self.sleeper is not None:
                    self.sleeper(self.backoff_base_s * (2 ** (attempt - 1)))
                continue
            meta = dict(response.meta)
            meta["attempts"] = attempt
            return ChatResponse(text=response.text, tool_calls=response.tool_calls, meta=meta)
        raise ProviderFailure(
            f"provider failed after {self.retry_limit} attempts: {last_error}"
        ) from last_error

    @staticmethod
    def _check_tool_names(request: ChatRequest, response: ChatResponse) -> None:
        if not response.tool_calls:
            return
        known = {t.name for t in request.tools}
        for call in response.tool_calls:
            if call.name not in known:
                raise ToolArgParse(f"response invoked undeclared tool {call.name!r}")


def extract_tool_calls(
    response: ChatResponse, tools: Sequence[ToolSchema] = ()
) -> list[ToolInvocation]:
    """Return schema-validated invocations; empty for text responses."""
    if response.is_text:
        return []
    schemas = {t.name: t for t in tools}
    validated: list[ToolInvocation] = []
    for call in response.tool_calls:
        schema = schemas.get(call.name)
        if schema is None:
            raise ToolArgParse(f"no schema for tool {call.name!r}")
        params = dict(schema.parameters) if schema.parameters else {"type": "object"}
        try:
            jsonschema.validate(dict(call.args), params)
        except jsonschema.ValidationError as exc:
            raise ToolArgParse(f"arguments for {call.name!r} fail schema: {exc.message}") from exc
        validated.append(call)
    return validated
