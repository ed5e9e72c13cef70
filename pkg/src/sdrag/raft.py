"""RAFT training-dataset construction.

Each corpus chunk yields one record: a generated question, the chunk itself
as the oracle document, randomly sampled distractor chunks, and a
chain-of-thought answer generated from the oracle alone. Records render to
chat format under the role-marker template grammar and split 90:10.
"""

from __future__ import annotations

import json
import random
import re
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Iterable, Sequence

from .chunking import Chunk
from .errors import (
    CorpusTooSmall,
    EmptyGeneration,
    InvariantViolation,
    IoFailure,
    TooFewRecords,
)
from .providers import ChatClient, user_request

DEFAULT_EOS_TOKEN = "</s>"


@dataclass(frozen=True)
class RaftConfig:
    num_questions_per_chunk: int = 1
    num_distract_docs: int = 2
    split_ratio: float = 0.9
    rng_seed: int = 0

    def __post_init__(self) -> None:
        if self.num_questions_per_chunk < 1:
            raise ValueError("num_questions_per_chunk must be >= 1")
        if self.num_distract_docs < 1:
            raise ValueError("num_distract_docs must be >= 1")
        if not (0 < self.split_ratio < 1):
            raise ValueError("split_ratio must be in (0, 1)")


@dataclass(frozen=True)
class RaftRecord:
    record_id: str
    question: str
    oracle: Chunk
    distractors: tuple[Chunk, ...]
    cot_answer: str
    presented_order: tuple[str, ...]  # chunk ids as shown in the prompt

    def __post_init__(self) -> None:
        ids = [d.chunk_id for d in self.distractors]
        if self.oracle.chunk_id in ids:
            raise InvariantViolation("oracle appears among distractors")
        if len(set(ids)) != len(ids):
            raise InvariantViolation("distractor ids must be pairwise distinct")
        expected = sorted(ids + [self.oracle.chunk_id])
        if sorted(self.presented_order) != expected:
            raise InvariantViolation("presented_order must permute oracle + distractors")

    def document_text(self, chunk_id: str) -> str:
        if chunk_id == self.oracle.chunk_id:
            return self.oracle.text
        for d in self.distractors:
            if d.chunk_id == chunk_id:
                return d.text
        raise KeyError(chunk_id)

    def to_raw_dict(self) -> dict:
        return {
            "record_id": self.record_id,
            "question": self.question,
            "oracle": {"chunk_id": self.oracle.chunk_id, "text": self.oracle.text},
            "distractors": [
                {"chunk_id": d.chunk_id, "text": d.text} for d in self.distractors
            ],
            "cot_answer": self.cot_answer,
            "presented_order": list(self.presented_order),
        }


@dataclass(frozen=True)
class ChatFormattedExample:
    messages: tuple[tuple[str, str], ...]  # (role, content), assistant last

    def to_dict(self) -> dict:
        return {"messages": [{"role": r, "content": c} for r, c in self.messages]}


def _prompt(name: str) -> str:
    return resources.files("sdrag.data.prompts").joinpath(name).read_text("utf-8")


def generate_question(chunk: Chunk, llm: ChatClient) -> str:
    if not chunk.text.strip():
        raise ValueError("chunk text must be non-empty")
    prompt = _prompt("raft_question.txt").format(chunk=chunk.text)
    reply = llm.chat_complete(user_request(prompt)).strip()
    if not reply:
        retry = prompt + "\n\nReply with exactly one question."
        reply = llm.chat_complete(user_request(retry)).strip()
    if not reply:
        raise EmptyGeneration(f"empty question for chunk {chunk.chunk_id}")
    return reply


def sample_distractors(corpus_chunks: Sequence[Chunk], oracle_id: str, n: int,
                       rng: random.Random) -> list[Chunk]:
    """Uniform sample without replacement from the non-oracle chunks."""
    pool = [c for c in corpus_chunks if c.chunk_id != oracle_id]
    if len(pool) < n:
        raise CorpusTooSmall(
            f"need {n} distractors but only {len(pool)} non-oracle chunks")
    return rng.sample(pool, n)


def generate_cot_answer(question: str, oracle: Chunk, llm: ChatClient) -> str:
    """CoT answer from the oracle alone; distractors never reach this call."""
    if not question.strip() or not oracle.text.strip():
        raise ValueError("question and oracle must be non-empty")
    prompt = _prompt("raft_cot.txt").format(oracle=oracle.text, question=question)
    reply = llm.chat_complete(user_request(prompt)).strip()
    if not reply:
        raise EmptyGeneration(f"empty CoT answer for chunk {oracle.chunk_id}")
    return reply


def build_record(question: str, oracle: Chunk, distractors: Sequence[Chunk],
                 cot: str, rng: random.Random, record_id: str | None = None) -> RaftRecord:
    """Assemble one record; the oracle position is a seeded uniform shuffle."""
    order = [oracle.chunk_id] + [d.chunk_id for d in distractors]
    rng.shuffle(order)
    return RaftRecord(
        record_id=record_id or f"raft-{oracle.chunk_id}",
        question=question,
        oracle=oracle,
        distractors=tuple(distractors),
        cot_answer=cot,
        presented_order=tuple(order),
    )


def format_chat(record: RaftRecord) -> ChatFormattedExample:
    """User turn: instruction + shuffled documents + question; assistant: CoT."""
    parts = [_prompt("raft_instruction.txt").strip(), ""]
    for i, cid in enumerate(record.presented_order, start=1):
        parts.append(f"Document {i}:\n{record.document_text(cid)}")
        parts.append("")
    parts.append(f"Question: {record.question}")
    user = "\n".join(parts)
    return ChatFormattedExample(messages=(
        ("user", user),
        ("assistant", record.cot_answer),
    ))


def render_template(example: ChatFormattedExample, eos_token: str = DEFAULT_EOS_TOKEN,
                    add_generation_prompt: bool = False) -> str:
    """Serialize messages under the role-marker grammar:
    ``<|role|>\\n{content}{eos}\\n`` per message, optionally followed by a
    bare ``<|assistant|>`` generation prompt."""
    out = []
    for role, content in example.messages:
        out.append(f"<|{role}|>\n{content}{eos_token}\n")
    if add_generation_prompt:
        out.append("<|assistant|>")
    return "".join(out)


_TEMPLATE_RE = re.compile(r"<\|(system|user|assistant)\|>\n")


def parse_template(rendered: str, eos_token: str = DEFAULT_EOS_TOKEN) -> ChatFormattedExample:
    """Inverse of :func:`render_template` (generation prompt not included)."""
    marks = list(_TEMPLATE_RE.finditer(rendered))
    if not marks or marks[0].start() != 0:
        raise ValueError("rendered text does not start with a role marker")
    messages = []
    for i, m in enumerate(marks):
        end = marks[i + 1].start() if i + 1 < len(marks) else len(rendered)
        body = rendered[m.end(): end]
        if not body.endswith(eos_token + "\n"):
            raise ValueError(f"message {i} not terminated by eos token")
        messages.append((m.group(1), body[: -len(eos_token) - 1]))
    return ChatFormattedExample(messages=tuple(messages))


def split_train_test(records: Sequence[RaftRecord], ratio: float = 0.9,
                     rng: random.Random | None = None) -> tuple[list[RaftRecord], list[RaftRecord]]:
    """Seeded shuffle, then |train| = round(ratio * n), half-up."""
    if len(records) < 2:
        raise TooFewRecords(f"need >= 2 records, got {len(records)}")
    if not (0 < ratio < 1):
        raise ValueError("ratio must be in (0, 1)")
    shuffled = list(records)
    (rng or random.Random(0)).shuffle(shuffled)
    n_train = int(ratio * len(shuffled) + 0.5)
    return shuffled[:n_train], shuffled[n_train:]


def emit_jsonl(items: Iterable[RaftRecord | ChatFormattedExample | dict],
               path: str | Path) -> None:
    """One compact JSON object per line, stable field order; an empty input
    produces a zero-byte file."""
    lines = []
    for item in items:
        if isinstance(item, RaftRecord):
            obj = item.to_raw_dict()
        elif isinstance(item, ChatFormattedExample):
            obj = item.to_dict()
        else:
            obj = item
        lines.append(json.dumps(obj, ensure_ascii=False, separators=(",", ":")))
    try:
        with open(path, "w", encoding="utf-8") as fh:
            for line in lines:
                fh.write(line)
                fh.write("\n")
    except OSError as exc:
        raise IoFailure(f"cannot write {path}: {exc}") from exc


def build_dataset(chunks: Sequence[Chunk], llm: ChatClient,
                  cfg: RaftConfig) -> list[RaftRecord]:
    """One record per chunk per question (C chunks -> C * q records)."""
    rng = random.Random(cfg.rng_seed)
    records = []
    for chunk in chunks:
        for qi in range(cfg.num_questions_per_chunk):
            question = generate_question(chunk, llm)
            distractors = sample_distractors(chunks, chunk.chunk_id,
                                             cfg.num_distract_docs, rng)
            cot = generate_cot_answer(question, chunk, llm)
            records.append(build_record(
                question, chunk, distractors, cot, rng,
                record_id=f"{chunk.chunk_id}#q{qi}",
            ))
    return records
