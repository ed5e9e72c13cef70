"""Shared test fixtures and helpers."""

from __future__ import annotations

import numpy as np
import pytest

from sdrag.chunking import Chunk, ChunkSource, count_tokens
from sdrag.providers import MockProvider, MockRule, MockScript


def make_chunk(chunk_id: str, text: str, doc_role: str = "base") -> Chunk:
    return Chunk(
        chunk_id=chunk_id,
        doc_role=doc_role,
        text=text,
        token_count=max(1, count_tokens(text)),
        source=ChunkSource(document="test", start=0, end=len(text)),
    )


def scripted(*rules, dim: int = 8) -> MockProvider:
    """Mock provider from (match, response) pairs or bare response strings."""
    parsed = []
    for rule in rules:
        if isinstance(rule, tuple):
            parsed.append(MockRule(match=rule[0], response=rule[1]))
        else:
            parsed.append(MockRule(response=rule))
    return MockProvider(MockScript(chat=parsed, embedding_dim=dim))


class RecordingClient:
    """Wraps a client, recording every request for architectural assertions."""

    def __init__(self, inner) -> None:
        self.inner = inner
        self.chat_requests = []
        self.embed_requests = []

    def chat_complete(self, req):
        self.chat_requests.append(req)
        return self.inner.chat_complete(req)

    def embed_batch(self, texts):
        self.embed_requests.append(list(texts))
        return self.inner.embed_batch(texts)

    def vision_describe(self, image, prompt):
        return self.inner.vision_describe(image, prompt)


class VectorEmbedder:
    """Maps exact texts to preassigned vectors (for metric oracles)."""

    def __init__(self, mapping: dict[str, np.ndarray]) -> None:
        self.mapping = mapping

    def embed_batch(self, texts):
        return [np.asarray(self.mapping[t], dtype=np.float32) for t in texts]


@pytest.fixture
def tmp_corpus_pdf(tmp_path):
    """A small searchable two-page PDF."""
    from sdrag.pdfio import write_text_pdf

    path = tmp_path / "doc.pdf"
    write_text_pdf(str(path), [
        "The TTR test verifies transformer turns ratio. "
        "Isolate and tag the transformer first.",
        "Prospero had a powerful spirit obedient to his will. "
        "The island revealed many secrets.",
    ])
    return path
