"""Prompt rendering and LLM completion with retry, an in-flight cap, and replay.

Replay mode keys recorded completions by a hash of the fully rendered
prompt plus the decoding configuration, so any template or binding edit
invalidates stale fixtures instead of silently reusing them.
"""
from __future__ import annotations

import hashlib
import json
import logging
import re
import threading
import time
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Callable, Mapping

import requests

log = logging.getLogger(__name__)

PLACEHOLDER_RE = re.compile(r"\{([A-Za-z_][A-Za-z0-9_]*)\}")

DEFAULT_MAX_ATTEMPTS = 3
DEFAULT_BACKOFF_BASE = 1.0
DEFAULT_MAX_INFLIGHT = 4


class GatewayError(Exception):
    pass


class UnknownTemplateError(GatewayError):
    pass


class MissingPlaceholderError(GatewayError):
    pass


class MissingFixtureEntryError(GatewayError):
    pass


class TransportFailure(GatewayError):
    pass


class RateLimitExceeded(TransportFailure):
    pass


@dataclass(frozen=True)
class PromptTemplate:
    template_id: str
    body: str
    required_placeholders: frozenset[str]

    @classmethod
    def from_body(cls, template_id: str, body: str) -> PromptTemplate:
        return cls(template_id, body, frozenset(PLACEHOLDER_RE.findall(body)))


def load_templates(directory: str | Path | None = None) -> dict[str, PromptTemplate]:
    """Load every *.txt file in the template directory; the stem is the id."""
    if directory is None:
        entries = resources.files("litkg.data").joinpath("templates").iterdir()
    else:
        entries = Path(directory).iterdir()
    templates: dict[str, PromptTemplate] = {}
    for entry in sorted(entries, key=lambda e: e.name):
        if entry.name.endswith(".txt"):
            template_id = entry.name[: -len(".txt")]
            templates[template_id] = PromptTemplate.from_body(
                template_id, entry.read_text(encoding="utf-8")
            )
    return templates


def template_hash(template: PromptTemplate) -> str:
    return hashlib.sha256(template.body.encode("utf-8")).hexdigest()


@dataclass(frozen=True)
class Decoding:
    mode: str = "greedy"
    seed: int | None = None
    temperature: float | None = None

    def canonical(self) -> str:
        payload: dict = {"mode": self.mode}
        if self.mode == "sample":
            payload["seed"] = self.seed
            payload["temperature"] = self.temperature
        return json.dumps(payload, sort_keys=True, separators=(",", ":"))


GREEDY = Decoding()


@dataclass(frozen=True)
class CompletionRequest:
    template_id: str
    bindings: Mapping[str, str]
    decoding: Decoding = GREEDY
    max_output_tokens: int = 2048


@dataclass(frozen=True)
class CompletionResult:
    text: str
    attempt_count: int
    transport_metadata: Mapping[str, str] = field(default_factory=dict)


def render(template: PromptTemplate, bindings: Mapping[str, str]) -> str:
    missing = sorted(template.required_placeholders - set(bindings))
    if missing:
        raise MissingPlaceholderError(
            f"template {template.template_id!r} missing bindings: {', '.join(missing)}"
        )
    unknown = sorted(set(bindings) - template.required_placeholders)
    if unknown:
        log.warning("template %s: ignoring unknown bindings %s", template.template_id, unknown)
    return PLACEHOLDER_RE.sub(lambda m: str(bindings[m.group(1)]), template.body)


def fixture_key(prompt: str, decoding: Decoding) -> str:
    digest = hashlib.sha256()
    digest.update(prompt.encode("utf-8"))
    digest.update(b"\x00")
    digest.update(decoding.canonical().encode("utf-8"))
    return digest.hexdigest()


class FixtureStore:
    """Replay store: prompt hash -> completion text, line-delimited JSON on disk.

    The file is rewritten sorted by hash on every put, so re-recording an
    existing prompt overwrites its entry and leaves the entry count unchanged.
    """

    def __init__(self, path: str | Path, entries: dict[str, tuple[dict, str]]):
        self.path = Path(path)
        self._entries = entries
        self._lock = threading.Lock()

    @classmethod
    def open(cls, path: str | Path, create: bool = False) -> FixtureStore:
        path = Path(path)
        entries: dict[str, tuple[dict, str]] = {}
        if path.exists():
            with path.open(encoding="utf-8") as fh:
                for line_no, line in enumerate(fh, start=1):
                    if not line.strip():
                        continue
                    try:
                        record = json.loads(line)
                        entries[record["prompt_hash"]] = (record["decoding"], record["text"])
                    except (json.JSONDecodeError, KeyError) as exc:
                        raise GatewayError(f"{path}:{line_no}: bad fixture entry: {exc}") from exc
        elif not create:
            raise GatewayError(f"fixture file not found: {path}")
        return cls(path, entries)

    def get(self, key: str) -> str | None:
        entry = self._entries.get(key)
        return entry[1] if entry is not None else None

    def put(self, key: str, decoding: Decoding, text: str) -> None:
        with self._lock:
            self._entries[key] = (json.loads(decoding.canonical()), text)
            self._rewrite()

    def _rewrite(self) -> None:
        with self.path.open("w", encoding="utf-8") as fh:
            for key in sorted(self._entries):
                decoding, text = self._entries[key]
                record = {"prompt_hash": key, "decoding": decoding, "text": text}
                fh.write(json.dumps(record, ensure_ascii=False, sort_keys=True) + "\n")

    def __len__(self) -> int:
        return len(self._entries)


Backend = Callable[[str, CompletionRequest], str]


def http_backend(endpoint: str, api_key: str = "", model: str = "",
                 session: requests.Session | None = None, timeout: float = 120.0) -> Backend:
    """JSON-over-HTTP chat-completion backend: one user message per request."""
    sess = session or requests.Session()

    def call(prompt: str, request: CompletionRequest) -> str:
        body: dict = {
            "model": model,
            "messages": [{"role": "user", "content": prompt}],
            "max_tokens": request.max_output_tokens,
        }
        if request.decoding.mode == "greedy":
            body["temperature"] = 0.0
        else:
            body["temperature"] = request.decoding.temperature
            if request.decoding.seed is not None:
                body["seed"] = request.decoding.seed
        headers = {"Authorization": f"Bearer {api_key}"} if api_key else {}
        try:
            resp = sess.post(endpoint, json=body, headers=headers, timeout=timeout)
        except requests.RequestException as exc:
            raise TransportFailure(str(exc)) from exc
        if resp.status_code == 429:
            raise RateLimitExceeded("rate limited by endpoint (429)")
        if resp.status_code != 200:
            raise TransportFailure(f"endpoint returned {resp.status_code}")
        try:
            return resp.json()["choices"][0]["message"]["content"]
        except (KeyError, IndexError, TypeError, ValueError) as exc:
            raise TransportFailure(f"malformed completion payload: {exc}") from exc

    return call


def backend_from_env(env: Mapping[str, str]) -> Backend | None:
    endpoint = env.get("LLM_ENDPOINT")
    if not endpoint:
        return None
    return http_backend(endpoint, env.get("LLM_API_KEY", ""), env.get("LLM_MODEL", ""))


class LlmGateway:
    """Completion front door shared by all pipeline stages.

    Exactly one of three modes applies per call: replay (fixtures only),
    live (backend only), or record (backend + fixture store, hits replayed,
    misses recorded).
    """

    def __init__(
        self,
        templates: dict[str, PromptTemplate] | None = None,
        *,
        fixtures: FixtureStore | None = None,
        backend: Backend | None = None,
        record: bool = False,
        max_attempts: int = DEFAULT_MAX_ATTEMPTS,
        backoff_base: float = DEFAULT_BACKOFF_BASE,
        max_inflight: int = DEFAULT_MAX_INFLIGHT,
        sleep: Callable[[float], None] = time.sleep,
    ):
        if backend is None and fixtures is None:
            raise GatewayError("gateway needs a live backend or replay fixtures")
        if record and (backend is None or fixtures is None):
            raise GatewayError("recording needs both a backend and a fixture store")
        self.templates = load_templates() if templates is None else templates
        self._fixtures = fixtures
        self._backend = backend
        self._record = record
        self._max_attempts = max_attempts
        self._backoff_base = backoff_base
        self._sleep = sleep
        self._limiter = threading.BoundedSemaphore(max_inflight)

    @property
    def replay_only(self) -> bool:
        return self._backend is None

    def template(self, template_id: str) -> PromptTemplate:
        try:
            return self.templates[template_id]
        except KeyError:
            raise UnknownTemplateError(f"no template {template_id!r} loaded") from None

    def render(self, template_id: str, bindings: Mapping[str, str]) -> str:
        return render(self.template(template_id), bindings)

    def complete(self, request: CompletionRequest) -> CompletionResult:
        prompt = self.render(request.template_id, request.bindings)
        key = fixture_key(prompt, request.decoding)
        if self._fixtures is not None:
            text = self._fixtures.get(key)
            if text is not None:
                return CompletionResult(text, 1, {"source": "replay", "prompt_hash": key})
            if self._backend is None:
                raise MissingFixtureEntryError(
                    f"no fixture entry for template {request.template_id!r} "
                    f"(prompt hash {key[:12]}...)"
                )
        text, attempts = self._call_with_retry(prompt, request)
        if self._record and self._fixtures is not None:
            self._fixtures.put(key, request.decoding, text)
        return CompletionResult(text, attempts, {"source": "live", "prompt_hash": key})

    def record_fixture(self, request: CompletionRequest, result: CompletionResult) -> None:
        if self._fixtures is None:
            raise GatewayError("no fixture store attached")
        prompt = self.render(request.template_id, request.bindings)
        self._fixtures.put(fixture_key(prompt, request.decoding), request.decoding, result.text)

    def _call_with_retry(self, prompt: str, request: CompletionRequest) -> tuple[str, int]:
        delay = self._backoff_base
        last: Exception | None = None
        for attempt in range(1, self._max_attempts + 1):
            try:
                with self._limiter:
                    return self._backend(prompt, request), attempt
            except TransportFailure as exc:
                last = exc
                log.warning("completion attempt %d/%d failed: %s", attempt, self._max_attempts, exc)
                if attempt < self._max_attempts:
                    self._sleep(delay)
                    delay *= 2
        raise TransportFailure(f"gave up after {self._max_attempts} attempts: {last}") from last
