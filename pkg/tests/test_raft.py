"""RAFT dataset construction: records, template, split, emission."""

from __future__ import annotations

import json
import random

import pytest

from sdrag.errors import (
    CorpusTooSmall,
    EmptyGeneration,
    InvariantViolation,
    TooFewRecords,
)
from sdrag.raft import (
    ChatFormattedExample,
    RaftConfig,
    RaftRecord,
    build_dataset,
    build_record,
    emit_jsonl,
    format_chat,
    generate_cot_answer,
    generate_question,
    parse_template,
    render_template,
    sample_distractors,
    split_train_test,
)

from conftest import RecordingClient, make_chunk, scripted


def chunks(n: int) -> list:
    return [make_chunk(f"ch{i:03d}", f"chunk body {i} about topic {i % 5}")
            for i in range(n)]


def record(seed: int = 1, n_chunks: int = 3) -> RaftRecord:
    cs = chunks(n_chunks)
    rng = random.Random(seed)
    return build_record("What is topic 0?", cs[0], cs[1:3], "Reasoning. Answer: x",
                        rng, record_id=f"rec{seed:04d}")


class TestGenerateQuestion:
    def test_scripted_verbatim(self):
        llm = scripted("What is the TTR test?")
        assert generate_question(chunks(1)[0], llm) == "What is the TTR test?"

    def test_empty_chunk_rejected(self):
        with pytest.raises(ValueError):
            generate_question(make_chunk("e", " "), scripted("q"))

    def test_empty_reply_retries_then_raises(self):
        llm = RecordingClient(scripted("", ""))
        with pytest.raises(EmptyGeneration):
            generate_question(chunks(1)[0], llm)
        assert len(llm.chat_requests) == 2

    def test_empty_then_good(self):
        assert generate_question(chunks(1)[0], scripted("", "Q?")) == "Q?"


class TestSampleDistractors:
    def test_forced_choice_on_three_chunks(self):
        cs = chunks(3)
        out = sample_distractors(cs, "ch000", 2, random.Random(0))
        assert sorted(d.chunk_id for d in out) == ["ch001", "ch002"]

    def test_seed_determinism(self):
        cs = chunks(10)
        a = sample_distractors(cs, "ch004", 2, random.Random(7))
        b = sample_distractors(cs, "ch004", 2, random.Random(7))
        assert [d.chunk_id for d in a] == [d.chunk_id for d in b]

    def test_never_includes_oracle(self):
        cs = chunks(6)
        rng = random.Random(3)
        for _ in range(200):
            out = sample_distractors(cs, "ch002", 2, rng)
            assert "ch002" not in {d.chunk_id for d in out}

    def test_corpus_too_small(self):
        with pytest.raises(CorpusTooSmall):
            sample_distractors(chunks(2), "ch000", 2, random.Random(0))


class TestCotAnswer:
    def test_oracle_exclusivity(self):
        cs = chunks(3)
        llm = RecordingClient(scripted("Reasoning. Answer: 42"))
        generate_cot_answer("What?", cs[0], llm)
        prompt = llm.chat_requests[0].messages[-1].content
        assert cs[0].text in prompt
        assert cs[1].text not in prompt and cs[2].text not in prompt

    def test_scripted_verbatim(self):
        out = generate_cot_answer("Q?", chunks(1)[0],
                                  scripted("Step 1: read. Answer: done"))
        assert out == "Step 1: read. Answer: done"


class TestBuildRecord:
    def test_fixed_seed_fixed_permutation(self):
        assert record(seed=5).presented_order == record(seed=5).presented_order

    def test_oracle_exactly_once(self):
        r = record()
        assert list(r.presented_order).count("ch000") == 1
        assert len(r.presented_order) == 3

    def test_invariant_oracle_in_distractors(self):
        cs = chunks(3)
        with pytest.raises(InvariantViolation):
            RaftRecord("r", "q", cs[0], (cs[0], cs[1]), "a",
                       ("ch000", "ch000", "ch001"))

    def test_invariant_duplicate_distractors(self):
        cs = chunks(2)
        with pytest.raises(InvariantViolation):
            RaftRecord("r", "q", cs[0], (cs[1], cs[1]), "a",
                       ("ch000", "ch001", "ch001"))

    def test_position_frequencies_uniform(self):
        cs = chunks(3)
        rng = random.Random(123)
        counts = [0, 0, 0]
        n = 6000
        for _ in range(n):
            r = build_record("q", cs[0], cs[1:3], "a", rng)
            counts[r.presented_order.index("ch000")] += 1
        for c in counts:
            assert abs(c / n - 1 / 3) < 0.03


class TestFormatChat:
    def test_role_marker_order(self):
        rendered = render_template(format_chat(record()))
        assert rendered.index("<|user|>") < rendered.index("<|assistant|>")

    def test_all_documents_present(self):
        r = record()
        user = format_chat(r).messages[0][1]
        for cid in r.presented_order:
            assert r.document_text(cid) in user
        assert "Document 1:" in user and "Document 3:" in user
        assert r.question in user

    def test_assistant_is_cot(self):
        r = record()
        example = format_chat(r)
        assert example.messages[-1] == ("assistant", r.cot_answer)

    def test_template_roundtrip(self):
        example = format_chat(record())
        assert parse_template(render_template(example)) == example

    def test_template_roundtrip_with_system(self):
        example = ChatFormattedExample(messages=(
            ("system", "be helpful"), ("user", "hi\nthere"), ("assistant", "ok")))
        rendered = render_template(example, eos_token="<eos>")
        assert parse_template(rendered, eos_token="<eos>") == example

    def test_generation_prompt_suffix(self):
        example = ChatFormattedExample(messages=(("user", "hi"),))
        rendered = render_template(example, add_generation_prompt=True)
        assert rendered.endswith("<|assistant|>")


class TestSplit:
    def test_hundred_records(self):
        records = [record(seed=i) for i in range(100)]
        train, test = split_train_test(records, rng=random.Random(0))
        assert (len(train), len(test)) == (90, 10)

    def test_ten_records(self):
        records = [record(seed=i) for i in range(10)]
        train, test = split_train_test(records, rng=random.Random(0))
        assert (len(train), len(test)) == (9, 1)

    def test_exact_partition(self):
        records = [record(seed=i) for i in range(25)]
        train, test = split_train_test(records, rng=random.Random(4))
        train_ids = {r.record_id for r in train}
        test_ids = {r.record_id for r in test}
        assert not train_ids & test_ids
        assert train_ids | test_ids == {r.record_id for r in records}

    def test_too_few(self):
        with pytest.raises(TooFewRecords):
            split_train_test([record()], rng=random.Random(0))


class TestEmitJsonl:
    def test_three_lines(self, tmp_path):
        path = tmp_path / "r.jsonl"
        emit_jsonl([record(seed=i) for i in range(3)], path)
        assert len(path.read_text().splitlines()) == 3

    def test_roundtrip(self, tmp_path):
        path = tmp_path / "r.jsonl"
        records = [record(seed=i) for i in range(4)]
        emit_jsonl(records, path)
        loaded = [json.loads(line) for line in path.read_text().splitlines()]
        assert loaded == [r.to_raw_dict() for r in records]

    def test_empty_is_zero_bytes(self, tmp_path):
        path = tmp_path / "empty.jsonl"
        emit_jsonl([], path)
        assert path.read_bytes() == b""

    def test_reemission_byte_identical(self, tmp_path):
        records = [record(seed=i) for i in range(5)]
        p1, p2 = tmp_path / "a.jsonl", tmp_path / "b.jsonl"
        emit_jsonl(records, p1)
        emit_jsonl(records, p2)
        assert p1.read_bytes() == p2.read_bytes()

    def test_schema_fields(self, tmp_path):
        path = tmp_path / "r.jsonl"
        emit_jsonl([record()], path)
        row = json.loads(path.read_text())
        assert set(row) == {"record_id", "question", "oracle", "distractors",
                            "cot_answer", "presented_order"}
        assert set(row["oracle"]) == {"chunk_id", "text"}
        assert len(row["distractors"]) == 2


class TestBuildDataset:
    def test_cardinality(self):
        cs = chunks(5)
        llm = scripted(*[f"Q{i}?" if i % 2 == 0 else f"A{i}." for i in range(10)])
        records = build_dataset(cs, llm, RaftConfig(rng_seed=3))
        assert len(records) == 5
        assert [r.oracle.chunk_id for r in records] == [c.chunk_id for c in cs]

    def test_determinism_with_seed(self, tmp_path):
        def run(path):
            cs = chunks(4)
            llm = scripted(*[f"reply {i}" for i in range(8)])
            records = build_dataset(cs, llm, RaftConfig(rng_seed=7))
            emit_jsonl(records, path)
            return path.read_bytes()

        assert run(tmp_path / "a.jsonl") == run(tmp_path / "b.jsonl")
