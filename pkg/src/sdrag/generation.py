"""Grounded answer generation with a machine-checkable refusal path."""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from importlib import resources
from typing import Callable

from .errors import ConfigError
from .providers import ChatClient, ChatRequest, Message
from .retrieval import RankedContext

#: The only string that counts as a refusal; detection is exact match after
#: trimming, never heuristic.
REFUSAL_TEXT = "This document doesn't contain the answer"


@dataclass(frozen=True)
class GenerationParams:
    max_new_tokens: int = 500
    temperature: float = 0.01
    top_p: float = 1.0
    top_k: int = 5
    repetition_penalty: float = 1.1

    def __post_init__(self) -> None:
        if self.max_new_tokens < 1:
            raise ConfigError("max_new_tokens must be >= 1")
        if self.temperature < 0:
            raise ConfigError("temperature must be >= 0")
        if not (0 < self.top_p <= 1):
            raise ConfigError("top_p must be in (0, 1]")
        if self.top_k < 1:
            raise ConfigError("top_k must be >= 1")
        if self.repetition_penalty < 1:
            raise ConfigError("repetition_penalty must be >= 1")

    def to_payload(self) -> dict:
        return {
            "max_tokens": self.max_new_tokens,
            "temperature": self.temperature,
            "top_p": self.top_p,
            "top_k": self.top_k,
            "repetition_penalty": self.repetition_penalty,
        }


@dataclass(frozen=True)
class GeneratedAnswer:
    text: str
    refused: bool
    contexts_used: tuple[str, ...] = field(default_factory=tuple)
    timing_ms: float = 0.0


def system_prompt() -> str:
    return resources.files("sdrag.data.prompts").joinpath(
        "generation_system.txt").read_text("utf-8").strip()


def build_prompt(query: str, contexts: list[RankedContext],
                 params: GenerationParams | None = None) -> ChatRequest:
    """Contexts labeled in rank order, then the original (unprocessed) query."""
    if not contexts:
        raise ValueError("contexts must be non-empty")
    parts = []
    for i, ctx in enumerate(contexts, start=1):
        parts.append(f"Context {i}:\n{ctx.chunk.text}")
    parts.append(f"Question: {query}")
    return ChatRequest(
        messages=[Message("system", system_prompt()),
                  Message("user", "\n\n".join(parts))],
        params=params,
    )


def generate_answer(query: str, contexts: list[RankedContext], llm: ChatClient,
                    params: GenerationParams | None = None,
                    clock: Callable[[], float] = time.perf_counter) -> GeneratedAnswer:
    params = params or GenerationParams()
    req = build_prompt(query, contexts, params)
    t0 = clock()
    text = llm.chat_complete(req)
    elapsed_ms = (clock() - t0) * 1000.0
    return GeneratedAnswer(
        text=text,
        refused=text.strip() == REFUSAL_TEXT,
        contexts_used=tuple(c.chunk.chunk_id for c in contexts),
        timing_ms=elapsed_ms,
    )
