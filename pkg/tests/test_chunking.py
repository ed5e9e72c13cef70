"""Chunker round-trip, fixed sizes, and query preprocessing."""

from __future__ import annotations

import random

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from sdrag.chunking import (
    chunk_text,
    count_tokens,
    preprocess_query,
    stopwords,
    token_spans,
)


def words(n: int, prefix: str = "w") -> str:
    return " ".join(f"{prefix}{i}" for i in range(n))


class TestChunkText:
    def test_exactly_two_full_chunks(self):
        text = words(1024)
        chunks = chunk_text("base", text)
        assert [c.token_count for c in chunks] == [512, 512]
        assert "".join(c.text for c in chunks) == text

    def test_remainder_chunk(self):
        text = words(513)
        chunks = chunk_text("base", text)
        assert [c.token_count for c in chunks] == [512, 1]

    def test_long_random_roundtrip(self):
        rng = random.Random(42)
        pieces = []
        for _ in range(10_000):
            pieces.append(rng.choice(["alpha", "beta,", "42", "x.y", "(z)", "end!"]))
            pieces.append(rng.choice([" ", "  ", "\n", "\t", " \n "]))
        text = "".join(pieces)
        chunks = chunk_text("base", text)
        assert "".join(c.text for c in chunks) == text
        assert all(c.token_count == 512 for c in chunks[:-1])
        assert 1 <= chunks[-1].token_count <= 512

    def test_empty_and_whitespace_only(self):
        assert chunk_text("base", "") == []
        assert chunk_text("base", "   \n\t ") == []

    def test_token_counts_match_tokenizer(self):
        text = "Hello, world! This is a test-case; ok?"
        chunks = chunk_text("base", text, max_tokens=4)
        for c in chunks:
            assert count_tokens(c.text) == c.token_count
        assert sum(c.token_count for c in chunks) == count_tokens(text)

    def test_unique_ids_and_sources(self):
        text = words(30)
        chunks = chunk_text("base", text, max_tokens=7, document="doc.pdf")
        ids = [c.chunk_id for c in chunks]
        assert len(set(ids)) == len(ids)
        for c in chunks:
            assert text[c.source.start: c.source.end] == c.text
            assert c.source.document == "doc.pdf"

    def test_punctuation_counts_as_tokens(self):
        assert count_tokens("don't") == 3  # don / ' / t
        assert count_tokens("a.b") == 3
        assert count_tokens("...") == 3

    def test_overlap_repeats_boundary_tokens(self):
        text = words(20)
        chunks = chunk_text("base", text, max_tokens=8, overlap=3)
        # starts advance by max_tokens - overlap = 5 tokens: 0, 5, 10, 15
        assert [c.token_count for c in chunks] == [8, 8, 8, 5]
        for prev, nxt in zip(chunks, chunks[1:]):
            assert nxt.text.split()[:3] == prev.text.split()[-3:]
        assert chunks[-1].text.split()[-1] == "w19"

    def test_overlap_zero_is_default_behavior(self):
        text = words(20)
        assert chunk_text("base", text, max_tokens=8) == \
            chunk_text("base", text, max_tokens=8, overlap=0)

    def test_overlap_bounds(self):
        with pytest.raises(ValueError):
            chunk_text("base", "a b c", max_tokens=4, overlap=4)
        with pytest.raises(ValueError):
            chunk_text("base", "a b c", max_tokens=4, overlap=-1)

    @given(st.text(
        alphabet=st.sampled_from(list("ab .,\n\t!?-—é9")), min_size=1, max_size=400),
        st.integers(min_value=1, max_value=64))
    @settings(max_examples=200, deadline=None)
    def test_roundtrip_property(self, text, max_tokens):
        chunks = chunk_text("base", text, max_tokens=max_tokens)
        if not token_spans(text):
            assert chunks == []
        else:
            assert "".join(c.text for c in chunks) == text
            assert all(c.token_count == max_tokens for c in chunks[:-1])


class TestPreprocessQuery:
    def test_stops_removed(self):
        assert preprocess_query("What is the TTR test") == "What TTR test"

    def test_all_stopwords(self):
        assert preprocess_query("and the is") == ""

    def test_untouched(self):
        assert preprocess_query("transformer") == "transformer"

    def test_case_insensitive_order_preserved(self):
        assert preprocess_query("The Transformer IS a model AND it works") == \
            "Transformer model works"

    def test_punctuation_tokens_survive(self):
        assert preprocess_query("what? is the deal?") == "what? deal?"

    def test_frozen_list_contents(self):
        stops = stopwords()
        assert {"and", "the", "is"} <= stops
        # question words must be retained by design
        assert not {"what", "who", "when", "where", "why", "how"} & stops
