"""End-to-end flow (ingest -> index -> retrieve -> generate) and the
configuration model."""

from __future__ import annotations

import os
import re
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

import yaml

from .chunking import Chunk, chunk_text
from .errors import SdragError, ConfigError, StageError, StructureRecoveryFailure
from .generation import GeneratedAnswer, GenerationParams, generate_answer
from .index import VectorIndex, index_add, index_load, index_save
from .ingest import (
    CorpusBundle,
    HttpLayoutBackend,
    NullLayoutBackend,
    assemble_corpus,
    describe_image,
    describe_table,
    detect_elements,
    detect_scanned,
    load_corpus,
    load_document,
    ocr_convert,
    render_pages,
    table_to_html,
)
from .ingest.describe import ElementDescription
from .ingest.layout import LayoutBackend
from .providers import HttpProvider, MockProvider, MockScript, ProviderConfig
from .retrieval import RankedContext, RetrievalConfig, retrieve

PROVIDER_ROLES = ("table_llm", "vision_vlm", "generator_llm", "reranker_llm",
                  "judge_llm", "embedder")

_ENV_RE = re.compile(r"\$\{([A-Za-z_][A-Za-z0-9_]*)\}")


@dataclass(frozen=True)
class IngestSettings:
    dpi: int = 200
    detector_confidence: float = 0.5
    detector_url: str | None = None


@dataclass
class PipelineConfig:
    providers: dict[str, ProviderConfig]
    retrieval: RetrievalConfig = field(default_factory=RetrievalConfig)
    generation: GenerationParams = field(default_factory=GenerationParams)
    chunk_max_tokens: int = 512
    chunk_overlap: int = 0
    corpus_dir: Path = Path("corpus")
    index_path: Path = Path("index.sdrag")
    ingest: IngestSettings = field(default_factory=IngestSettings)

    def __post_init__(self) -> None:
        if self.chunk_max_tokens < 1:
            raise ConfigError("chunking.max_tokens must be >= 1")
        if not (0 <= self.chunk_overlap < self.chunk_max_tokens):
            raise ConfigError("chunking.overlap must be in [0, max_tokens)")
        missing = [r for r in PROVIDER_ROLES if r not in self.providers]
        if missing:
            raise ConfigError(f"missing provider roles: {', '.join(missing)}")


def _interpolate_env(value):
    if isinstance(value, str):
        return _ENV_RE.sub(lambda m: os.environ.get(m.group(1), ""), value)
    if isinstance(value, dict):
        return {k: _interpolate_env(v) for k, v in value.items()}
    if isinstance(value, list):
        return [_interpolate_env(v) for v in value]
    return value


def load_config(path: str | Path) -> PipelineConfig:
    """Read the YAML config file; ``${VAR}`` interpolates environment
    variables (API keys stay env-var references via ``api_key_env``)."""
    with open(path, "r", encoding="utf-8") as fh:
        raw = yaml.safe_load(fh) or {}
    raw = _interpolate_env(raw)
    providers = {}
    for role, block in (raw.get("providers") or {}).items():
        providers[role] = ProviderConfig(
            endpoint_url=block["endpoint_url"],
            model_name=block["model_name"],
            api_key_env=block.get("api_key_env", ""),
            timeout=float(block.get("timeout", 30.0)),
            max_retries=int(block.get("max_retries", 3)),
            requests_per_minute=int(block.get("requests_per_minute", 60)),
        )
    retrieval_raw = raw.get("retrieval") or {}
    generation_raw = raw.get("generation") or {}
    chunking_raw = raw.get("chunking") or {}
    paths_raw = raw.get("paths") or {}
    ingest_raw = raw.get("ingest") or {}
    return PipelineConfig(
        providers=providers,
        retrieval=RetrievalConfig(
            k_stage1=int(retrieval_raw.get("k_stage1", 10)),
            n_stage2=int(retrieval_raw.get("n_stage2", 3)),
            rerank_retries=int(retrieval_raw.get("rerank_retries", 1)),
        ),
        generation=GenerationParams(
            max_new_tokens=int(generation_raw.get("max_new_tokens", 500)),
            temperature=float(generation_raw.get("temperature", 0.01)),
            top_p=float(generation_raw.get("top_p", 1.0)),
            top_k=int(generation_raw.get("top_k", 5)),
            repetition_penalty=float(generation_raw.get("repetition_penalty", 1.1)),
        ),
        chunk_max_tokens=int(chunking_raw.get("max_tokens", 512)),
        chunk_overlap=int(chunking_raw.get("overlap", 0)),
        corpus_dir=Path(paths_raw.get("corpus_dir", "corpus")),
        index_path=Path(paths_raw.get("index_path", "index.sdrag")),
        ingest=IngestSettings(
            dpi=int(ingest_raw.get("dpi", 200)),
            detector_confidence=float(ingest_raw.get("detector_confidence", 0.5)),
            detector_url=ingest_raw.get("detector_url"),
        ),
    )


@dataclass
class ProviderSet:
    table_llm: object
    vision_vlm: object
    generator_llm: object
    reranker_llm: object
    judge_llm: object
    embedder: object

    def role(self, name: str):
        return getattr(self, name)


def build_providers(cfg: PipelineConfig | None,
                    mock_script: MockScript | None = None) -> ProviderSet:
    """Real HTTP clients from the config, or one shared scripted provider."""
    if mock_script is not None:
        mock = MockProvider(mock_script)
        return ProviderSet(*([mock] * len(PROVIDER_ROLES)))
    if cfg is None:
        raise ConfigError("either a config file or a mock script is required")
    return ProviderSet(**{role: HttpProvider(cfg.providers[role])
                          for role in PROVIDER_ROLES})


def build_layout_backend(cfg: PipelineConfig | None,
                         mock_script: MockScript | None = None) -> LayoutBackend:
    if mock_script is not None:
        from .ingest import ScriptedLayoutBackend
        return ScriptedLayoutBackend.from_mock_script(mock_script)
    if cfg is not None and cfg.ingest.detector_url:
        return HttpLayoutBackend(cfg.ingest.detector_url)
    return NullLayoutBackend()


class _Counting:
    """Wraps a provider client, counting calls per operation name."""

    def __init__(self, inner, counters: dict[str, int], key: str) -> None:
        self._inner = inner
        self._counters = counters
        self._key = key

    def chat_complete(self, req):
        self._counters[self._key] = self._counters.get(self._key, 0) + 1
        return self._inner.chat_complete(req)

    def embed_batch(self, texts):
        self._counters[self._key] = self._counters.get(self._key, 0) + 1
        return self._inner.embed_batch(texts)

    def vision_describe(self, image, prompt):
        self._counters[self._key] = self._counters.get(self._key, 0) + 1
        return self._inner.vision_describe(image, prompt)


@dataclass
class QueryResult:
    answer: GeneratedAnswer
    contexts: list[RankedContext]
    trace: dict

    def to_dict(self) -> dict:
        return {
            "answer": {
                "text": self.answer.text,
                "refused": self.answer.refused,
                "contexts_used": list(self.answer.contexts_used),
                "timing_ms": self.answer.timing_ms,
            },
            "contexts": [
                {
                    "chunk_id": c.chunk.chunk_id,
                    "doc_role": c.chunk.doc_role,
                    "text": c.chunk.text,
                    "stage1_similarity": c.stage1_similarity,
                    "stage2_rank": c.stage2_rank,
                    "rerank_source": c.rerank_source,
                }
                for c in self.contexts
            ],
            "trace": self.trace,
        }


def _stage(name: str, fn, *args, **kwargs):
    try:
        return fn(*args, **kwargs)
    except SdragError as exc:
        if isinstance(exc, StageError):
            raise
        raise StageError(name, exc) from exc


def ingest_document(input_path: str | Path, cfg: PipelineConfig,
                    providers: ProviderSet, layout_backend: LayoutBackend,
                    out_dir: str | Path | None = None,
                    ocr_engine=None) -> CorpusBundle:
    """Turn an input PDF into a corpus bundle: OCR when scanned, describe
    detected tables and images, assemble the three-document directory.

    A failing element description never blocks the base text; such elements
    are recorded in the bundle's error sidecar instead (partial corpus).
    """
    out = Path(out_dir) if out_dir is not None else cfg.corpus_dir
    doc = _stage("load", load_document, input_path)
    _, doc_scanned = detect_scanned(doc)
    if doc_scanned:
        doc = _stage("ocr", ocr_convert, doc, out_path=None, engine=ocr_engine,
                     dpi=cfg.ingest.dpi)
    pages = _stage("render", render_pages, doc, dpi=cfg.ingest.dpi)
    elements = _stage("detect", detect_elements, pages, layout_backend,
                      confidence_threshold=cfg.ingest.detector_confidence)
    descriptions: list[ElementDescription] = []
    errors: list[dict] = []
    for elem in elements:
        try:
            if elem.kind == "table":
                try:
                    html = table_to_html(elem, layout_backend, ocr_engine=ocr_engine)
                except StructureRecoveryFailure as exc:
                    if not exc.fallback_text:
                        raise
                    descriptions.append(ElementDescription(
                        element=elem, description=exc.fallback_text,
                        source_model="fallback", fallback=True))
                    continue
                descriptions.append(describe_table(elem, html, providers.table_llm))
            else:
                descriptions.append(describe_image(elem, providers.vision_vlm))
        except SdragError as exc:
            errors.append({"kind": elem.kind, "page": elem.page_index,
                           "bbox": list(elem.bbox), "error": str(exc)})
    return _stage("assemble", assemble_corpus, doc, descriptions, out,
                  errors=errors)


def ingest_and_index(input_path: str | Path, cfg: PipelineConfig,
                     providers: ProviderSet, layout_backend: LayoutBackend,
                     ocr_engine=None) -> tuple[CorpusBundle, VectorIndex]:
    """Full ingest-to-index composition: corpus bundle written to
    ``cfg.corpus_dir``, index persisted to ``cfg.index_path``."""
    bundle = ingest_document(input_path, cfg, providers, layout_backend,
                             ocr_engine=ocr_engine)
    idx = index_corpus(bundle.directory, cfg, providers)
    return bundle, idx


def index_corpus(corpus_dir: str | Path, cfg: PipelineConfig,
                 providers: ProviderSet,
                 out_path: str | Path | None = None) -> VectorIndex:
    """Chunk and embed the corpus documents into a persisted flat index."""
    out = Path(out_path) if out_path is not None else cfg.index_path
    base, tables, images, _ = _stage("load-corpus", load_corpus, corpus_dir)
    chunks: list[Chunk] = []
    base_text = "\n".join(base.per_page_text)
    chunks += chunk_text("base", base_text, cfg.chunk_max_tokens,
                         document="base.pdf", overlap=cfg.chunk_overlap)
    chunks += chunk_text("table_desc", tables, cfg.chunk_max_tokens,
                         document="tables.txt", overlap=cfg.chunk_overlap)
    chunks += chunk_text("image_desc", images, cfg.chunk_max_tokens,
                         document="images.txt", overlap=cfg.chunk_overlap)
    if not chunks:
        raise StageError("chunk", ConfigError("corpus produced no chunks"))
    vectors = _stage("embed", providers.embedder.embed_batch,
                     [c.text for c in chunks])
    idx = VectorIndex(dimension=int(vectors[0].shape[0]))
    _stage("index", index_add, idx, chunks, vectors)
    _stage("persist", index_save, idx, out)
    return idx


def answer_query(question: str, cfg: PipelineConfig, providers: ProviderSet,
                 index: VectorIndex | None = None,
                 clock: Callable[[], float] = time.perf_counter) -> QueryResult:
    """Retrieve then generate; the trace records per-stage timings and
    provider call counts (exactly one embed, rerank, and generate call)."""
    if index is None:
        index = _stage("load-index", index_load, cfg.index_path)
    counters: dict[str, int] = {"embed": 0, "rerank": 0, "generate": 0}
    embedder = _Counting(providers.embedder, counters, "embed")
    reranker = _Counting(providers.reranker_llm, counters, "rerank")
    generator = _Counting(providers.generator_llm, counters, "generate")

    t0 = clock()
    contexts = _stage("retrieve", retrieve, index, question, embedder, reranker,
                      cfg.retrieval)
    t1 = clock()
    answer = _stage("generate", generate_answer, question, contexts, generator,
                    cfg.generation, clock=clock)
    t2 = clock()
    trace = {
        "timings_ms": {
            "retrieve": (t1 - t0) * 1000.0,
            "generate": (t2 - t1) * 1000.0,
            "total": (t2 - t0) * 1000.0,
        },
        "provider_calls": counters,
    }
    return QueryResult(answer=answer, contexts=contexts, trace=trace)
