"""Provider contracts and offline mocks.

Every external capability (embedding, chat completion, ASR, MT, TTS, judge)
sits behind one transport contract: HTTP JSON POST, 10 s timeout, 2 retries
with exponential backoff. Mocks implement the same interfaces in-process and
are fully deterministic, so the whole engine runs offline.
"""
from __future__ import annotations

import hashlib
import json
import re
import threading
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Iterable, Optional, Protocol

from .errors import ProviderError
from .tokenization import tokenize

DEFAULT_TIMEOUT = 10.0
RETRY_ATTEMPTS = 3  # 1 call + 2 retries
BACKOFF_BASE = 0.5
BACKOFF_FACTOR = 2.0


def with_retries(fn: Callable[[], object], attempts: int = RETRY_ATTEMPTS,
                 base: float = BACKOFF_BASE, factor: float = BACKOFF_FACTOR,
                 sleeper: Callable[[float], None] = time.sleep):
    """Run `fn`, retrying retriable provider failures with backoff."""
    delay = base
    for attempt in range(1, attempts + 1):
        try:
            return fn()
        except ProviderError as exc:
            if not exc.retriable or attempt == attempts:
                raise
            sleeper(delay)
            delay *= factor


class PermitGate:
    """Caps concurrent calls per provider (default 8 permits)."""

    def __init__(self, permits: int = 8):
        self._sem = threading.BoundedSemaphore(permits)

    def __enter__(self):
        self._sem.acquire()
        return self

    def __exit__(self, *exc):
        self._sem.release()
        return False


class HttpTransport:
    """JSON-over-POST transport shared by every real provider adapter."""

    def __init__(self, timeout: float = DEFAULT_TIMEOUT, headers: dict | None = None):
        import httpx

        self._client = httpx.Client(timeout=timeout, headers=headers or {})

    def post(self, url: str, payload: dict) -> dict:
        import httpx

        try:
            resp = self._client.post(url, json=payload)
        except httpx.TimeoutException as exc:
            raise ProviderError(f"timeout calling {url}", retriable=True) from exc
        except httpx.HTTPError as exc:
            raise ProviderError(f"transport error calling {url}: {exc}",
                                retriable=True) from exc
        if resp.status_code >= 500:
            raise ProviderError(f"{url} returned {resp.status_code}", retriable=True)
        if resp.status_code >= 400:
            raise ProviderError(f"{url} returned {resp.status_code}", retriable=False)
        return resp.json()


# ---------------------------------------------------------------------------
# Embeddings
# ---------------------------------------------------------------------------

class EmbeddingProvider(Protocol):
    provider_id: str
    dimension: int

    def embed(self, texts: list[str]) -> list[list[float]]: ...


def _stable_bucket(token: str, dimension: int) -> int:
    digest = hashlib.sha1(token.encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "big") % dimension


class MockEmbeddingProvider:
    """Hashes each token into one of `dimension` buckets, counts, and
    L2-normalizes. Deterministic, order-insensitive, offline."""

    def __init__(self, dimension: int = 256):
        self.provider_id = "mock"
        self.dimension = dimension

    def bucket(self, token: str) -> int:
        return _stable_bucket(token, self.dimension)

    def embed(self, texts: list[str]) -> list[list[float]]:
        out = []
        for text in texts:
            vec = [0.0] * self.dimension
            for tok in tokenize(text):
                vec[self.bucket(tok)] += 1.0
            norm = sum(v * v for v in vec) ** 0.5
            if norm > 0:
                vec = [v / norm for v in vec]
            out.append(vec)
        return out


class HttpEmbeddingProvider:
    """POST {texts: [...]} -> {vectors: [[...]]}."""

    def __init__(self, provider_id: str, url: str, dimension: int,
                 transport: HttpTransport | None = None):
        self.provider_id = provider_id
        self.dimension = dimension
        self.url = url
        self._transport = transport or HttpTransport()

    def embed(self, texts: list[str]) -> list[list[float]]:
        body = with_retries(lambda: self._transport.post(self.url, {"texts": texts}))
        return body["vectors"]


# ---------------------------------------------------------------------------
# Chat completion
# ---------------------------------------------------------------------------

@dataclass
class ChatResult:
    text: str
    finish_reason: str = "stop"  # stop | length | filtered | error
    usage: dict = field(default_factory=dict)


class ChatProvider(Protocol):
    provider_id: str

    def complete(self, messages: list[dict], temperature: float,
                 max_tokens: int) -> ChatResult: ...


_CTX_LINE = re.compile(r"^\[ctx:(?P<rid>[^\]]+)\]\s*(?P<text>.*)$", re.MULTILINE)


class MockChatProvider:
    """Deterministic templated answers that echo the first context passage,
    so grounding checks are exercisable offline. Counts calls for tests."""

    def __init__(self):
        self.provider_id = "mock"
        self.calls = 0

    def complete(self, messages: list[dict], temperature: float,
                 max_tokens: int) -> ChatResult:
        self.calls += 1
        joined = "\n".join(m.get("content", "") for m in messages)
        m = _CTX_LINE.search(joined)
        if m:
            text = f"Drawing on {m.group('rid')}: {m.group('text')}"
        else:
            text = ("I don't know the answer to that yet. "
                    "A health educator will review your question.")
        return ChatResult(text=text, usage={"prompt_tokens": len(joined.split()),
                                            "completion_tokens": len(text.split())})


class HttpChatProvider:
    """POST {model, messages, temperature, max_tokens} -> {text, finish_reason, usage}."""

    def __init__(self, provider_id: str, url: str, model: str,
                 transport: HttpTransport | None = None):
        self.provider_id = provider_id
        self.url = url
        self.model = model
        self._transport = transport or HttpTransport()

    def complete(self, messages: list[dict], temperature: float,
                 max_tokens: int) -> ChatResult:
        body = self._transport.post(self.url, {
            "model": self.model, "messages": messages,
            "temperature": temperature, "max_tokens": max_tokens,
        })
        return ChatResult(text=body.get("text", ""),
                          finish_reason=body.get("finish_reason", "stop"),
                          usage=body.get("usage", {}))


# ---------------------------------------------------------------------------
# Speech and translation
# ---------------------------------------------------------------------------

class AsrProvider(Protocol):
    provider_id: str

    def transcribe(self, uri: str, lang: str) -> tuple[str, float]: ...


class MockAsrProvider:
    """Maps fixture uris to registered texts; confidence is always 1.0."""

    def __init__(self, registry: dict[str, str] | None = None):
        self.provider_id = "mock"
        self.registry = dict(registry or {})

    @classmethod
    def from_file(cls, path: str | Path) -> "MockAsrProvider":
        with open(path, encoding="utf-8") as f:
            return cls(json.load(f))

    def register(self, uri: str, text: str) -> None:
        self.registry[uri] = text

    def transcribe(self, uri: str, lang: str) -> tuple[str, float]:
        if uri not in self.registry:
            raise ProviderError(f"no fixture for uri {uri!r}", retriable=False)
        text = self.registry[uri]
        if not text.strip():
            raise ProviderError("empty transcription", retriable=False)
        return text, 1.0


class HttpAsrProvider:
    def __init__(self, provider_id: str, url: str, transport: HttpTransport | None = None):
        self.provider_id = provider_id
        self.url = url
        self._transport = transport or HttpTransport()

    def transcribe(self, uri: str, lang: str) -> tuple[str, float]:
        body = self._transport.post(self.url, {"audio_uri": uri, "lang": lang})
        return body["text"], float(body.get("confidence", 0.0))


class MtProvider(Protocol):
    provider_id: str

    def translate(self, text: str, src: str, tgt: str) -> str: ...


class MockMtProvider:
    """Wraps text with a traceable marker instead of translating."""

    provider_id = "mock"

    def translate(self, text: str, src: str, tgt: str) -> str:
        return f"⟪{src}→{tgt}⟫{text}"


class HttpMtProvider:
    def __init__(self, provider_id: str, url: str, transport: HttpTransport | None = None):
        self.provider_id = provider_id
        self.url = url
        self._transport = transport or HttpTransport()

    def translate(self, text: str, src: str, tgt: str) -> str:
        return self._transport.post(self.url, {"text": text, "src": src, "tgt": tgt})["text"]


class TtsProvider(Protocol):
    provider_id: str

    def synthesize(self, text: str, lang: str) -> str: ...


class MockTtsProvider:
    provider_id = "mock"

    def synthesize(self, text: str, lang: str) -> str:
        digest = hashlib.sha1(f"{lang}:{text}".encode("utf-8")).hexdigest()
        return f"mock-tts://{digest[:20]}"


class HttpTtsProvider:
    def __init__(self, provider_id: str, url: str, transport: HttpTransport | None = None):
        self.provider_id = provider_id
        self.url = url
        self._transport = transport or HttpTransport()

    def synthesize(self, text: str, lang: str) -> str:
        return self._transport.post(self.url, {"text": text, "lang": lang})["audio_uri"]


# ---------------------------------------------------------------------------
# Hallucination judge
# ---------------------------------------------------------------------------

class JudgeProvider(Protocol):
    provider_id: str

    def assess(self, response: str, context: list[str]) -> bool:
        """True when the response asserts content absent from the context."""
        ...


class MockJudgeProvider:
    """Deterministic judge: flags the response when its lexical grounding
    recall against the context falls below `threshold`."""

    def __init__(self, threshold: float = 0.3, stopwords: Iterable[str] = ()):
        self.provider_id = "mock"
        self.threshold = threshold
        self.stopwords = frozenset(stopwords)

    def assess(self, response: str, context: list[str]) -> bool:
        resp_tokens = [t for t in tokenize(response) if t not in self.stopwords]
        if not resp_tokens:
            return False
        ctx_tokens = set()
        for passage in context:
            ctx_tokens.update(tokenize(passage))
        found = sum(1 for t in resp_tokens if t in ctx_tokens)
        return found / len(resp_tokens) < self.threshold


class ScriptedJudgeProvider:
    """Replays a fixed verdict sequence; for poll-aggregation tests."""

    def __init__(self, verdicts: Iterable[bool]):
        self.provider_id = "scripted"
        self._verdicts = list(verdicts)
        self._i = 0

    def assess(self, response: str, context: list[str]) -> bool:
        if self._i >= len(self._verdicts):
            raise ProviderError("script exhausted", retriable=False)
        verdict = self._verdicts[self._i]
        self._i += 1
        return verdict


class ChatJudgeProvider:
    """Adapts a chat provider into a yes/no hallucination judge."""

    PROMPT = ("Context:\n{context}\n\nResponse:\n{response}\n\n"
              "Does the response assert content absent from the context? "
              "Answer yes or no.")

    def __init__(self, chat: ChatProvider):
        self.provider_id = chat.provider_id
        self._chat = chat

    def assess(self, response: str, context: list[str]) -> bool:
        prompt = self.PROMPT.format(context="\n".join(context), response=response)
        result = self._chat.complete([{"role": "user", "content": prompt}],
                                     temperature=0.0, max_tokens=8)
        return result.text.strip().lower().startswith("y")
