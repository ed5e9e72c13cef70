"""Flat index: exact search vs brute force, normalization, persistence."""

from __future__ import annotations

import struct

import numpy as np
import pytest

from sdrag._kernels import cosine_scores_numpy, _build_numba_kernel
from sdrag.errors import (
    CorruptIndex,
    DimensionMismatch,
    DuplicateChunkId,
    EmptyIndex,
)
from sdrag.index import (
    FORMAT_VERSION,
    MAGIC,
    VectorIndex,
    index_add,
    index_load,
    index_save,
    index_search,
)

from conftest import make_chunk


def brute_force(idx: VectorIndex, query: np.ndarray, k: int) -> list[tuple[str, float]]:
    """Independent oracle: per-entry float64 cosine + explicit sort."""
    q = np.asarray(query, dtype=np.float64)
    scored = []
    for chunk, vec in zip(idx.chunks, idx.vectors):
        v = vec.astype(np.float64)
        denom = float(np.sqrt(np.dot(v, v)) * np.sqrt(np.dot(q, q)))
        sim = float(np.dot(v, q) / denom) if denom > 0 else 0.0
        scored.append((chunk.chunk_id, sim))
    scored.sort(key=lambda t: (-t[1], t[0]))
    return scored[: min(k, len(scored))]


def build_index(vectors: np.ndarray, prefix: str = "c") -> VectorIndex:
    idx = VectorIndex(dimension=vectors.shape[1])
    chunks = [make_chunk(f"{prefix}{i:04d}", f"text {i}") for i in range(len(vectors))]
    index_add(idx, chunks, [v for v in vectors])
    return idx


class TestAdd:
    def test_count_increases(self):
        idx = build_index(np.eye(3, dtype=np.float64))
        assert len(idx) == 3

    def test_duplicate_id(self):
        idx = VectorIndex(dimension=2)
        index_add(idx, [make_chunk("dup", "a")], [np.array([1.0, 0.0])])
        with pytest.raises(DuplicateChunkId):
            index_add(idx, [make_chunk("dup", "b")], [np.array([0.0, 1.0])])

    def test_normalized_on_insert(self):
        idx = VectorIndex(dimension=3)
        index_add(idx, [make_chunk("a", "a")], [np.array([3.0, 4.0, 0.0])])
        assert float(np.linalg.norm(idx.vectors[0])) == pytest.approx(1.0, abs=1e-6)

    def test_dimension_mismatch(self):
        idx = VectorIndex(dimension=3)
        with pytest.raises(DimensionMismatch):
            index_add(idx, [make_chunk("a", "a")], [np.array([1.0, 0.0])])

    def test_zero_vector_rejected(self):
        idx = VectorIndex(dimension=2)
        with pytest.raises(ValueError):
            index_add(idx, [make_chunk("a", "a")], [np.zeros(2)])


class TestSearch:
    def test_identity_query(self):
        rng = np.random.default_rng(1)
        vecs = rng.standard_normal((20, 8))
        idx = build_index(vecs)
        hits = index_search(idx, vecs[7], k=1)
        assert hits[0][0] == "c0007"
        assert hits[0][1] == pytest.approx(1.0, abs=1e-6)

    def test_orthogonal_query(self):
        idx = build_index(np.array([[1.0, 0.0], [0.0, 1.0]]))
        hits = dict(index_search(idx, np.array([1.0, 0.0]), k=2))
        assert hits["c0001"] == pytest.approx(0.0, abs=1e-12)

    def test_matches_brute_force(self):
        rng = np.random.default_rng(7)
        vecs = rng.standard_normal((100, 16))
        idx = build_index(vecs)
        for k in (1, 3, 10, 100, 250):
            q = rng.standard_normal(16)
            got = index_search(idx, q, k=k)
            want = brute_force(idx, q, k)
            assert [cid for cid, _ in got] == [cid for cid, _ in want]
            assert [sim for _, sim in got] == pytest.approx(
                [sim for _, sim in want], abs=1e-12)

    def test_tie_break_by_chunk_id(self):
        same = np.array([0.6, 0.8])
        idx = VectorIndex(dimension=2)
        index_add(idx, [make_chunk("zz", "a"), make_chunk("aa", "b")],
                  [same.copy(), same.copy()])
        hits = index_search(idx, same, k=2)
        assert [cid for cid, _ in hits] == ["aa", "zz"]

    def test_k_clamped(self):
        idx = build_index(np.eye(4))
        assert len(index_search(idx, np.ones(4), k=10)) == 4

    def test_empty_index(self):
        idx = VectorIndex(dimension=2)
        with pytest.raises(EmptyIndex):
            index_search(idx, np.array([1.0, 0.0]), k=1)

    def test_bad_k_and_dim(self):
        idx = build_index(np.eye(3))
        with pytest.raises(ValueError):
            index_search(idx, np.ones(3), k=0)
        with pytest.raises(DimensionMismatch):
            index_search(idx, np.ones(4), k=1)

    def test_scale_invariance(self):
        rng = np.random.default_rng(3)
        vecs = rng.standard_normal((50, 8))
        q = rng.standard_normal(8)
        baseline = [cid for cid, _ in index_search(build_index(vecs), q, k=10)]
        for scale in (0.5, 2.0, 3.7, 1e-3, 1e3):
            scaled = [cid for cid, _ in index_search(build_index(vecs * scale), q, k=10)]
            assert scaled == baseline
            # scaling the query must not change anything either
            requeried = [cid for cid, _ in
                         index_search(build_index(vecs), q * scale, k=10)]
            assert requeried == baseline


class TestKernelEquivalence:
    def test_numba_matches_numpy(self):
        rng = np.random.default_rng(11)
        matrix = rng.standard_normal((200, 24)).astype(np.float32)
        q = rng.standard_normal(24)
        a = cosine_scores_numpy(matrix, q)
        b = _build_numba_kernel()(matrix, q)
        assert np.allclose(a, b, atol=1e-12)
        assert list(np.argsort(-a)) == list(np.argsort(-b))

    def test_zero_row_scores_zero(self):
        matrix = np.array([[0.0, 0.0], [1.0, 0.0]], dtype=np.float32)
        scores = cosine_scores_numpy(matrix, np.array([1.0, 0.0]))
        assert scores[0] == 0.0 and scores[1] == pytest.approx(1.0)

    def test_env_flag_selects_numpy(self):
        import subprocess, sys
        out = subprocess.run(
            [sys.executable, "-c",
             "from sdrag._kernels import KERNEL_BACKEND; print(KERNEL_BACKEND)"],
            capture_output=True, text=True, env={"PATH": "/usr/bin:/bin",
                                                 "SDRAG_KERNEL": "numpy"})
        assert out.stdout.strip() == "numpy"


class TestPersistence:
    def _roundtrip(self, idx, tmp_path, name="idx.bin"):
        path = tmp_path / name
        index_save(idx, path)
        return path, index_load(path)

    def test_roundtrip_bit_exact(self, tmp_path):
        rng = np.random.default_rng(5)
        idx = build_index(rng.standard_normal((50, 12)))
        path, loaded = self._roundtrip(idx, tmp_path)
        assert loaded.dimension == idx.dimension
        assert len(loaded) == len(idx)
        assert loaded.vectors.tobytes() == idx.vectors.tobytes()
        assert [c.chunk_id for c in loaded.chunks] == [c.chunk_id for c in idx.chunks]
        assert [c.text for c in loaded.chunks] == [c.text for c in idx.chunks]
        # save(load(x)) reproduces the file bytes exactly
        path2 = tmp_path / "again.bin"
        index_save(loaded, path2)
        assert path2.read_bytes() == path.read_bytes()

    def test_truncated_file(self, tmp_path):
        idx = build_index(np.eye(4))
        path, _ = self._roundtrip(idx, tmp_path)
        raw = path.read_bytes()
        path.write_bytes(raw[: len(raw) - 7])
        with pytest.raises(CorruptIndex):
            index_load(path)

    def test_bad_magic(self, tmp_path):
        path = tmp_path / "bad.bin"
        path.write_bytes(b"NOTANIDX" + b"\x00" * 32)
        with pytest.raises(CorruptIndex, match="magic"):
            index_load(path)

    def test_version_bump(self, tmp_path):
        idx = build_index(np.eye(2))
        path, _ = self._roundtrip(idx, tmp_path)
        raw = bytearray(path.read_bytes())
        raw[len(MAGIC): len(MAGIC) + 4] = struct.pack("<I", FORMAT_VERSION + 1)
        path.write_bytes(bytes(raw))
        with pytest.raises(CorruptIndex, match="version"):
            index_load(path)

    def test_search_after_reload(self, tmp_path):
        rng = np.random.default_rng(9)
        idx = build_index(rng.standard_normal((30, 6)))
        _, loaded = self._roundtrip(idx, tmp_path)
        q = rng.standard_normal(6)
        assert index_search(loaded, q, k=5) == index_search(idx, q, k=5)
