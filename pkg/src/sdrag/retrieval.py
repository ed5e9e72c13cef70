"""Two-stage retrieval: semantic top-K, then LLM reranking to top-N."""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass
from importlib import resources

from .chunking import Chunk, preprocess_query
from .errors import ConfigError
from .index import VectorIndex, index_search
from .providers import ChatClient, EmbeddingClient, user_request

DEFAULT_CANDIDATE_CHAR_BUDGET = 1500


@dataclass(frozen=True)
class RetrievalConfig:
    k_stage1: int = 10
    n_stage2: int = 3
    rerank_retries: int = 1
    candidate_char_budget: int = DEFAULT_CANDIDATE_CHAR_BUDGET

    def __post_init__(self) -> None:
        if not (1 <= self.n_stage2 <= self.k_stage1):
            raise ConfigError("need 1 <= n_stage2 <= k_stage1")
        if self.rerank_retries < 0:
            raise ConfigError("rerank_retries must be >= 0")


@dataclass(frozen=True)
class RankedContext:
    chunk: Chunk
    stage1_similarity: float
    stage2_rank: int | None = None
    rerank_source: str | None = None  # "llm" | "fallback"


def _prompt_template(name: str) -> str:
    return resources.files("sdrag.data.prompts").joinpath(name).read_text("utf-8")


def retrieve_stage1(index: VectorIndex, query: str, embedder: EmbeddingClient,
                    cfg: RetrievalConfig) -> list[RankedContext]:
    """Semantic search over the index; stop words removed before embedding."""
    processed = preprocess_query(query)
    if not processed.strip():
        processed = query  # all-stop-word query: embed the original
    vector = embedder.embed_batch([processed])[0]
    hits = index_search(index, vector, k=cfg.k_stage1)
    return [RankedContext(chunk=index.chunk(cid), stage1_similarity=sim)
            for cid, sim in hits]


def _parse_label_reply(reply: str, n_candidates: int) -> list[int] | None:
    """Strict JSON array of 1-based labels; dedup, drop invalid entries.
    Returns None when the reply is unusable (not JSON, not an array, or no
    valid label survives)."""
    try:
        data = json.loads(reply.strip())
    except ValueError:
        return None
    if not isinstance(data, list):
        return None
    labels: list[int] = []
    for item in data:
        if isinstance(item, bool) or not isinstance(item, int):
            continue
        if 1 <= item <= n_candidates and item not in labels:
            labels.append(item)
    return labels or None


def _rerank_prompt(query: str, candidates: list[RankedContext], budget: int) -> str:
    lines = []
    for i, ctx in enumerate(candidates, start=1):
        lines.append(f"[{i}] {ctx.chunk.text[:budget]}")
    return _prompt_template("rerank.txt").format(
        query=query, candidates="\n".join(lines), k=len(candidates))


def rerank_stage2(query: str, candidates: list[RankedContext], llm: ChatClient,
                  cfg: RetrievalConfig) -> list[RankedContext]:
    """Ask the LLM for a relevance order over the stage-1 candidates.

    The model must reply with a strict JSON array of candidate labels. After
    ``rerank_retries`` repair attempts the stage-1 order is used as fallback,
    so this never fails on output format.
    """
    if not candidates:
        raise ValueError("candidates must be non-empty")
    n = min(cfg.n_stage2, len(candidates))
    prompt = _rerank_prompt(query, candidates, cfg.candidate_char_budget)
    labels: list[int] | None = None
    request_text = prompt
    for attempt in range(1 + cfg.rerank_retries):
        reply = llm.chat_complete(user_request(request_text))
        labels = _parse_label_reply(reply, len(candidates))
        if labels is not None:
            break
        request_text = prompt + "\n\n" + _prompt_template("rerank_repair.txt").strip()
    if labels is None:
        chosen = list(range(1, n + 1))
        source = "fallback"
    else:
        chosen = labels[:n]
        for i in range(1, len(candidates) + 1):  # pad from stage-1 order
            if len(chosen) >= n:
                break
            if i not in chosen:
                chosen.append(i)
        source = "llm"
    return [
        dataclasses.replace(candidates[label - 1], stage2_rank=rank, rerank_source=source)
        for rank, label in enumerate(chosen, start=1)
    ]


def retrieve(index: VectorIndex, query: str, embedder: EmbeddingClient,
             llm: ChatClient, cfg: RetrievalConfig) -> list[RankedContext]:
    """Full two-stage retrieval; result carries ranks 1..n."""
    stage1 = retrieve_stage1(index, query, embedder, cfg)
    return rerank_stage2(query, stage1, llm, cfg)
