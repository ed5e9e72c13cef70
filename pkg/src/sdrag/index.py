"""Flat exact vector index: cosine top-K search plus binary persistence.

File format (little-endian throughout): magic ``SDRGIDX1`` (8 bytes),
format version u32, dimension u32, entry count u64, then per entry the
float32 vector values followed by a u32 length-prefixed UTF-8 JSON object
``{chunk_id, doc_role, text, source}``.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ._kernels import cosine_scores
from .chunking import Chunk, ChunkSource, count_tokens
from .errors import (
    CorruptIndex,
    DimensionMismatch,
    DuplicateChunkId,
    EmptyIndex,
    IoFailure,
)

MAGIC = b"SDRGIDX1"
FORMAT_VERSION = 1


@dataclass
class VectorIndex:
    """In-memory flat index; vectors are stored L2-normalized float32."""

    dimension: int
    normalized: bool = True
    _vectors: np.ndarray = field(default=None, repr=False)  # type: ignore[assignment]
    _chunks: list[Chunk] = field(default_factory=list, repr=False)

    def __post_init__(self) -> None:
        if self.dimension < 1:
            raise ValueError("dimension must be >= 1")
        if self._vectors is None:
            self._vectors = np.empty((0, self.dimension), dtype=np.float32)
        self._ids = {c.chunk_id: i for i, c in enumerate(self._chunks)}
        self._id_array: np.ndarray | None = None

    def __len__(self) -> int:
        return len(self._chunks)

    @property
    def vectors(self) -> np.ndarray:
        return self._vectors

    @property
    def chunks(self) -> list[Chunk]:
        return list(self._chunks)

    def chunk(self, chunk_id: str) -> Chunk:
        return self._chunks[self._ids[chunk_id]]


def index_add(idx: VectorIndex, chunks: list[Chunk], vectors: list[np.ndarray]) -> VectorIndex:
    """Append ``chunks`` with their ``vectors``, normalizing on insert."""
    if len(chunks) != len(vectors):
        raise ValueError(f"{len(chunks)} chunks but {len(vectors)} vectors")
    seen = set(idx._ids)
    for c in chunks:
        if c.chunk_id in seen:
            raise DuplicateChunkId(c.chunk_id)
        seen.add(c.chunk_id)
    rows = []
    for c, v in zip(chunks, vectors):
        v = np.asarray(v, dtype=np.float64).reshape(-1)
        if v.shape[0] != idx.dimension:
            raise DimensionMismatch(
                f"vector for {c.chunk_id} has dimension {v.shape[0]}, "
                f"index expects {idx.dimension}")
        norm = np.linalg.norm(v)
        if norm <= 0.0:
            raise ValueError(f"zero-norm vector for chunk {c.chunk_id}")
        rows.append((v / norm).astype(np.float32))
    if rows:
        idx._vectors = np.vstack([idx._vectors, np.stack(rows)])
        for c in chunks:
            idx._ids[c.chunk_id] = len(idx._chunks)
            idx._chunks.append(c)
        idx._id_array = None
    return idx


def index_search(idx: VectorIndex, query_vector: np.ndarray, k: int = 10) -> list[tuple[str, float]]:
    """Exact top-k by cosine similarity, descending, ties by chunk_id."""
    if len(idx) == 0:
        raise EmptyIndex("search against empty index")
    if k < 1:
        raise ValueError("k must be >= 1")
    q = np.asarray(query_vector, dtype=np.float64).reshape(-1)
    if q.shape[0] != idx.dimension:
        raise DimensionMismatch(
            f"query dimension {q.shape[0]} != index dimension {idx.dimension}")
    if not np.linalg.norm(q) > 0.0:
        raise ValueError("query vector has zero norm")
    scores = cosine_scores(idx._vectors, q)
    if idx._id_array is None:
        idx._id_array = np.array([c.chunk_id for c in idx._chunks])
    order = np.lexsort((idx._id_array, -scores))
    top = order[: min(k, len(idx))]
    return [(idx._chunks[i].chunk_id, float(scores[i])) for i in top]


# --- persistence ---------------------------------------------------------

def _chunk_meta_bytes(c: Chunk) -> bytes:
    meta = {
        "chunk_id": c.chunk_id,
        "doc_role": c.doc_role,
        "text": c.text,
        "source": {"document": c.source.document,
                   "start": c.source.start, "end": c.source.end},
    }
    return json.dumps(meta, ensure_ascii=False, separators=(",", ":")).encode("utf-8")


def index_save(idx: VectorIndex, path: str | Path) -> None:
    try:
        with open(path, "wb") as fh:
            fh.write(MAGIC)
            fh.write(struct.pack("<I", FORMAT_VERSION))
            fh.write(struct.pack("<I", idx.dimension))
            fh.write(struct.pack("<Q", len(idx)))
            for i, c in enumerate(idx._chunks):
                fh.write(idx._vectors[i].astype("<f4", copy=False).tobytes())
                meta = _chunk_meta_bytes(c)
                fh.write(struct.pack("<I", len(meta)))
                fh.write(meta)
    except OSError as exc:
        raise IoFailure(f"cannot write index to {path}: {exc}") from exc


def index_load(path: str | Path) -> VectorIndex:
    try:
        with open(path, "rb") as fh:
            raw = fh.read()
    except OSError as exc:
        raise IoFailure(f"cannot read index from {path}: {exc}") from exc
    if len(raw) < len(MAGIC) + 16 or raw[: len(MAGIC)] != MAGIC:
        raise CorruptIndex("bad magic")
    pos = len(MAGIC)
    version, dim = struct.unpack_from("<II", raw, pos)
    pos += 8
    if version != FORMAT_VERSION:
        raise CorruptIndex(f"unsupported format version {version}")
    if dim < 1:
        raise CorruptIndex("invalid dimension")
    (count,) = struct.unpack_from("<Q", raw, pos)
    pos += 8
    vec_bytes = dim * 4
    vectors = np.empty((count, dim), dtype=np.float32)
    chunks: list[Chunk] = []
    for i in range(count):
        if pos + vec_bytes + 4 > len(raw):
            raise CorruptIndex(f"truncated at entry {i}")
        vectors[i] = np.frombuffer(raw, dtype="<f4", count=dim, offset=pos)
        pos += vec_bytes
        (meta_len,) = struct.unpack_from("<I", raw, pos)
        pos += 4
        if pos + meta_len > len(raw):
            raise CorruptIndex(f"truncated metadata at entry {i}")
        try:
            meta = json.loads(raw[pos: pos + meta_len].decode("utf-8"))
            chunk = Chunk(
                chunk_id=meta["chunk_id"],
                doc_role=meta["doc_role"],
                text=meta["text"],
                token_count=max(1, count_tokens(meta["text"])),
                source=ChunkSource(**meta["source"]),
            )
        except (ValueError, KeyError, TypeError) as exc:
            raise CorruptIndex(f"invalid metadata at entry {i}: {exc}") from exc
        chunks.append(chunk)
        pos += meta_len
    if pos != len(raw):
        raise CorruptIndex(f"{len(raw) - pos} trailing bytes")
    idx = VectorIndex(dimension=dim, _vectors=vectors, _chunks=chunks)
    return idx
