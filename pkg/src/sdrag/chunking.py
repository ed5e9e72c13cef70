"""Fixed-size chunking and query preprocessing.

The bundled tokenizer is a deterministic segmenter: a token is either a
maximal run of characters that are neither whitespace nor ASCII punctuation,
or a single ASCII punctuation character. Chunk boundaries cut the original
string at token starts, so concatenating chunk texts reproduces the input
byte for byte.
"""

from __future__ import annotations

import re
import string
from dataclasses import dataclass
from functools import lru_cache
from importlib import resources

DEFAULT_MAX_TOKENS = 512

DOC_ROLES = ("base", "table_desc", "image_desc")

_PUNCT = re.escape(string.punctuation)
_TOKEN_RE = re.compile(rf"[^\s{_PUNCT}]+|[{_PUNCT}]")


@dataclass(frozen=True)
class ChunkSource:
    document: str
    start: int
    end: int


@dataclass(frozen=True)
class Chunk:
    chunk_id: str
    doc_role: str
    text: str
    token_count: int
    source: ChunkSource

    def __post_init__(self) -> None:
        if self.doc_role not in DOC_ROLES:
            raise ValueError(f"invalid doc_role {self.doc_role!r}")
        if self.token_count < 1:
            raise ValueError("token_count must be >= 1")


def token_spans(text: str) -> list[tuple[int, int]]:
    return [m.span() for m in _TOKEN_RE.finditer(text)]


def count_tokens(text: str) -> int:
    return sum(1 for _ in _TOKEN_RE.finditer(text))


def chunk_text(doc_role: str, text: str, max_tokens: int = DEFAULT_MAX_TOKENS,
               document: str = "", overlap: int = 0) -> list[Chunk]:
    """Split ``text`` into consecutive chunks of exactly ``max_tokens`` tokens
    (the final chunk may be shorter). Whitespace between chunks attaches to
    the preceding chunk, so with the default ``overlap=0`` concatenating the
    chunk texts reproduces the input exactly. A positive ``overlap`` makes
    each chunk start that many tokens before the previous chunk's end
    (sacrificing the concatenation property). Text with no tokens yields an
    empty list.
    """
    if max_tokens < 1:
        raise ValueError("max_tokens must be >= 1")
    if not (0 <= overlap < max_tokens):
        raise ValueError("overlap must satisfy 0 <= overlap < max_tokens")
    spans = token_spans(text)
    if not spans:
        return []
    step = max_tokens - overlap
    chunks = []
    i = 0
    start_tok = 0
    while True:
        end_tok = start_tok + max_tokens
        a = 0 if i == 0 else spans[start_tok][0]
        if end_tok >= len(spans):
            b = len(text)
            n_tok = len(spans) - start_tok
            last = True
        else:
            b = spans[end_tok][0] if overlap == 0 else spans[end_tok - 1][1]
            n_tok = max_tokens
            last = False
        chunks.append(Chunk(
            chunk_id=f"{doc_role}:{i:06d}",
            doc_role=doc_role,
            text=text[a:b],
            token_count=n_tok,
            source=ChunkSource(document=document, start=a, end=b),
        ))
        if last:
            return chunks
        i += 1
        start_tok += step


@lru_cache(maxsize=1)
def stopwords() -> frozenset[str]:
    """The frozen English stop-word list shipped with the package."""
    data = resources.files("sdrag.data").joinpath("stopwords.txt").read_text("utf-8")
    return frozenset(w for w in data.split() if w)


def preprocess_query(q: str) -> str:
    """Drop stop words (case-insensitive), keeping the remaining token order.

    Callers keep the original query around for generation; only retrieval
    embeds the preprocessed form.
    """
    stops = stopwords()
    kept = []
    for word in q.split():
        bare = word.strip(string.punctuation).lower()
        if bare and bare in stops:
            continue
        kept.append(word)
    return " ".join(kept)
