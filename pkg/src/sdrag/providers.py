"""Uniform access to chat-completion, embedding, and vision endpoints.

Two interchangeable client families live here: :class:`HttpProvider` speaks
the standard JSON chat-completions / embeddings wire shape with retries and
client-side rate limiting, and :class:`MockProvider` replays a deterministic
:class:`MockScript` so every pipeline stage can run offline.
"""

from __future__ import annotations

import base64
import hashlib
import json
import os
import re
import threading
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable, Protocol, Sequence

import httpx
import numpy as np

from .errors import (
    AuthError,
    ConfigError,
    MalformedResponse,
    MockScriptExhausted,
    ProviderError,
    RateLimitExhausted,
    Timeout,
    UnsupportedImage,
)

VALID_ROLES = ("system", "user", "assistant")

_BACKOFF_BASE = 0.5
_BACKOFF_CAP = 30.0


@dataclass(frozen=True)
class ProviderConfig:
    """Connection settings for one endpoint role.

    The API key itself is never stored; ``api_key_env`` names the environment
    variable that holds it.
    """

    endpoint_url: str
    model_name: str
    api_key_env: str = ""
    timeout: float = 30.0
    max_retries: int = 3
    requests_per_minute: int = 60

    def __post_init__(self) -> None:
        if self.timeout <= 0:
            raise ConfigError("timeout must be > 0")
        if self.max_retries < 0:
            raise ConfigError("max_retries must be >= 0")
        if self.requests_per_minute <= 0:
            raise ConfigError("requests_per_minute must be > 0")

    def api_key(self) -> str | None:
        if not self.api_key_env:
            return None
        return os.environ.get(self.api_key_env)


@dataclass(frozen=True)
class Message:
    role: str
    content: str


@dataclass
class ChatRequest:
    """One chat call: ordered messages, optional sampling params and image."""

    messages: list[Message]
    params: Any | None = None  # GenerationParams; duck-typed via to_payload()
    image: bytes | None = None

    def __post_init__(self) -> None:
        if not self.messages:
            raise ValueError("messages must be non-empty")
        for m in self.messages:
            if m.role not in VALID_ROLES:
                raise ValueError(f"invalid role {m.role!r}")

    def text(self) -> str:
        """All message contents joined; used for mock matching."""
        return "\n".join(m.content for m in self.messages)


def user_request(content: str, *, system: str | None = None, params: Any | None = None,
                 image: bytes | None = None) -> ChatRequest:
    msgs = []
    if system is not None:
        msgs.append(Message("system", system))
    msgs.append(Message("user", content))
    return ChatRequest(messages=msgs, params=params, image=image)


class ChatClient(Protocol):
    def chat_complete(self, req: ChatRequest) -> str: ...


class EmbeddingClient(Protocol):
    def embed_batch(self, texts: Sequence[str]) -> list[np.ndarray]: ...


class VisionClient(Protocol):
    def vision_describe(self, image: bytes, prompt: str) -> str: ...


# --- image sniffing ----------------------------------------------------

_IMAGE_MAGICS = (
    (b"\x89PNG\r\n\x1a\n", "png"),
    (b"\xff\xd8\xff", "jpeg"),
    (b"GIF87a", "gif"),
    (b"GIF89a", "gif"),
    (b"BM", "bmp"),
    (b"II*\x00", "tiff"),
    (b"MM\x00*", "tiff"),
)


def sniff_image_format(data: bytes) -> str:
    """Return the raster format of ``data`` or raise :class:`UnsupportedImage`."""
    if not data:
        raise UnsupportedImage("empty image payload")
    for magic, name in _IMAGE_MAGICS:
        if data.startswith(magic):
            return name
    if len(data) >= 12 and data[:4] == b"RIFF" and data[8:12] == b"WEBP":
        return "webp"
    raise UnsupportedImage("unrecognized raster format")


# --- rate limiting ------------------------------------------------------

class TokenBucket:
    """Client-side token bucket: capacity = rpm, refill rpm/60 per second."""

    def __init__(self, requests_per_minute: int,
                 clock: Callable[[], float] = time.monotonic,
                 sleep: Callable[[float], None] = time.sleep) -> None:
        self._capacity = float(requests_per_minute)
        self._rate = requests_per_minute / 60.0
        self._tokens = self._capacity
        self._clock = clock
        self._sleep = sleep
        self._last = clock()
        self._lock = threading.Lock()

    def _refill(self) -> None:
        now = self._clock()
        self._tokens = min(self._capacity, self._tokens + (now - self._last) * self._rate)
        self._last = now

    def acquire(self) -> None:
        while True:
            with self._lock:
                self._refill()
                if self._tokens >= 1.0:
                    self._tokens -= 1.0
                    return
                wait = (1.0 - self._tokens) / self._rate
            self._sleep(wait)


# --- HTTP provider ------------------------------------------------------

class HttpProvider:
    """JSON chat-completions / embeddings client with retries.

    Shareable across threads: the only mutable state is the token bucket,
    which synchronizes internally.
    """

    def __init__(self, cfg: ProviderConfig, *,
                 transport: httpx.BaseTransport | None = None,
                 sleep: Callable[[float], None] = time.sleep,
                 clock: Callable[[], float] = time.monotonic) -> None:
        self.cfg = cfg
        self._sleep = sleep
        self._bucket = TokenBucket(cfg.requests_per_minute, clock=clock, sleep=sleep)
        self._client = httpx.Client(timeout=cfg.timeout, transport=transport)

    def close(self) -> None:
        self._client.close()

    # -- transport --

    def _headers(self) -> dict[str, str]:
        headers = {"Content-Type": "application/json"}
        key = self.cfg.api_key()
        if key:
            headers["Authorization"] = f"Bearer {key}"
        return headers

    def _post_json(self, payload: dict[str, Any]) -> dict[str, Any]:
        attempts = 1 + self.cfg.max_retries
        last: Exception | None = None
        for attempt in range(attempts):
            self._bucket.acquire()
            try:
                resp = self._client.post(self.cfg.endpoint_url, json=payload,
                                         headers=self._headers())
            except httpx.TimeoutException as exc:
                last = Timeout(f"request to {self.cfg.endpoint_url} timed out")
                last.__cause__ = exc
            except httpx.HTTPError as exc:
                last = ProviderError(f"transport failure: {exc}")
                last.__cause__ = exc
            else:
                if resp.status_code in (401, 403):
                    raise AuthError(f"endpoint rejected credentials "
                                    f"(HTTP {resp.status_code})")
                if resp.status_code == 429:
                    last = RateLimitExhausted(
                        f"rate limited after {attempts} attempts")
                elif resp.status_code >= 500:
                    last = ProviderError(
                        f"server error HTTP {resp.status_code} after {attempts} attempts")
                elif resp.status_code >= 400:
                    raise MalformedResponse(
                        f"endpoint returned HTTP {resp.status_code}: {resp.text[:200]}")
                else:
                    try:
                        return resp.json()
                    except ValueError as exc:
                        raise MalformedResponse("endpoint returned non-JSON body") from exc
            if attempt + 1 < attempts:
                self._sleep(min(_BACKOFF_BASE * (2 ** attempt), _BACKOFF_CAP))
        assert last is not None
        raise last

    # -- operations --

    def chat_complete(self, req: ChatRequest) -> str:
        payload: dict[str, Any] = {
            "model": self.cfg.model_name,
            "messages": self._wire_messages(req),
        }
        if req.params is not None:
            payload.update(req.params.to_payload())
        data = self._post_json(payload)
        try:
            content = data["choices"][0]["message"]["content"]
        except (KeyError, IndexError, TypeError) as exc:
            raise MalformedResponse("missing choices[0].message.content") from exc
        if not isinstance(content, str):
            raise MalformedResponse("message content is not a string")
        return content

    def _wire_messages(self, req: ChatRequest) -> list[dict[str, Any]]:
        wire: list[dict[str, Any]] = [
            {"role": m.role, "content": m.content} for m in req.messages
        ]
        if req.image is not None:
            fmt = sniff_image_format(req.image)
            url = (f"data:image/{fmt};base64,"
                   + base64.b64encode(req.image).decode("ascii"))
            # attach to the last user message as multimodal content parts
            for entry in reversed(wire):
                if entry["role"] == "user":
                    entry["content"] = [
                        {"type": "text", "text": entry["content"]},
                        {"type": "image_url", "image_url": {"url": url}},
                    ]
                    break
        return wire

    def embed_batch(self, texts: Sequence[str]) -> list[np.ndarray]:
        _check_embed_inputs(texts)
        data = self._post_json({"model": self.cfg.model_name, "input": list(texts)})
        try:
            rows = sorted(data["data"], key=lambda d: d["index"])
            vectors = [np.asarray(r["embedding"], dtype=np.float32) for r in rows]
        except (KeyError, TypeError, ValueError) as exc:
            raise MalformedResponse("embeddings payload malformed") from exc
        if len(vectors) != len(texts):
            raise MalformedResponse(
                f"expected {len(texts)} embeddings, got {len(vectors)}")
        dims = {v.shape for v in vectors}
        if len(dims) > 1 or any(v.ndim != 1 for v in vectors):
            from .errors import DimensionMismatch
            raise DimensionMismatch(f"inconsistent embedding dimensions: {dims}")
        return vectors

    def vision_describe(self, image: bytes, prompt: str) -> str:
        sniff_image_format(image)
        return self.chat_complete(user_request(prompt, image=image))


def _check_embed_inputs(texts: Sequence[str]) -> None:
    if not texts:
        raise ValueError("texts must be non-empty")
    for t in texts:
        if not t.strip():
            raise ValueError("each text must be non-empty after trimming")


# --- deterministic mock --------------------------------------------------

@dataclass(frozen=True)
class MockRule:
    """Canned reply, either keyed by a substring or played back in sequence."""

    response: str
    match: str | None = None


@dataclass
class MockScript:
    """Deterministic playback script for offline runs.

    ``chat`` rules answer chat/vision calls: rules with ``match`` fire when
    the substring occurs in the request text (prompt plus image fingerprint)
    and are never consumed; rules without ``match`` are consumed in order.
    Replies are memoized by request fingerprint so identical requests always
    see identical responses. Embeddings use a hashed term-frequency rule of
    dimension ``embedding_dim``.
    """

    chat: list[MockRule] = field(default_factory=list)
    embedding_dim: int = 8
    detections: dict[int, list[dict[str, Any]]] = field(default_factory=dict)
    table_structures: list[Any] = field(default_factory=list)

    @classmethod
    def from_dict(cls, raw: dict[str, Any]) -> "MockScript":
        rules = [
            MockRule(response=r["response"], match=r.get("match"))
            for r in raw.get("chat", [])
        ]
        detections = {int(k): v for k, v in raw.get("detections", {}).items()}
        return cls(
            chat=rules,
            embedding_dim=int(raw.get("embedding_dim", 8)),
            detections=detections,
            table_structures=raw.get("table_structures", []),
        )

    @classmethod
    def from_file(cls, path: str | Path) -> "MockScript":
        with open(path, "r", encoding="utf-8") as fh:
            return cls.from_dict(json.load(fh))


def _stable_bucket(token: str, dim: int) -> int:
    digest = hashlib.md5(token.encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "little") % dim


_MOCK_TOKEN_RE = re.compile(r"[a-z0-9]+")


def hashed_term_frequency(text: str, dim: int) -> np.ndarray:
    """Order-insensitive hashed term counts, L2-normalized, float32."""
    tokens = _MOCK_TOKEN_RE.findall(text.lower())
    if not tokens:
        raise ValueError("cannot embed text with no alphanumeric tokens")
    vec = np.zeros(dim, dtype=np.float64)
    for tok in tokens:
        vec[_stable_bucket(tok, dim)] += 1.0
    vec /= np.linalg.norm(vec)
    return vec.astype(np.float32)


class MockProvider:
    """Scripted provider implementing all three operations offline."""

    def __init__(self, script: MockScript,
                 embedder: Callable[[str], np.ndarray] | None = None) -> None:
        self.script = script
        self.model_name = "mock"
        self._seq = 0
        self._memo: dict[str, str] = {}
        self._embed_fn = embedder or (
            lambda text: hashed_term_frequency(text, script.embedding_dim))

    def _resolve(self, fingerprint: str) -> str:
        if fingerprint in self._memo:
            return self._memo[fingerprint]
        for rule in self.script.chat:
            if rule.match is not None and rule.match in fingerprint:
                self._memo[fingerprint] = rule.response
                return rule.response
        for i in range(self._seq, len(self.script.chat)):
            if self.script.chat[i].match is None:
                self._seq = i + 1
                self._memo[fingerprint] = self.script.chat[i].response
                return self.script.chat[i].response
        raise MockScriptExhausted(
            f"no scripted reply for request: {fingerprint[:120]!r}")

    def chat_complete(self, req: ChatRequest) -> str:
        fingerprint = req.text()
        if req.image is not None:
            fingerprint += "\n<image:" + hashlib.sha256(req.image).hexdigest() + ">"
        return self._resolve(fingerprint)

    def embed_batch(self, texts: Sequence[str]) -> list[np.ndarray]:
        _check_embed_inputs(texts)
        return [self._embed_fn(t) for t in texts]

    def vision_describe(self, image: bytes, prompt: str) -> str:
        sniff_image_format(image)
        return self.chat_complete(user_request(prompt, image=image))
