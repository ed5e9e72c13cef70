"""Chat-format JSONL ingestion, rendering, tokenization, and the split."""

from __future__ import annotations

import json
import random
from dataclasses import dataclass
from pathlib import Path

from .errors import EmptyDataset, SchemaError
from .template import DEFAULT_EOS_TOKEN, ROLES, render_messages
from .tokenizer import VocabTokenizer


def read_chat_jsonl(path: str | Path) -> list[list[tuple[str, str]]]:
    """Parse ``{"messages": [{"role", "content"}...]}`` lines."""
    examples = []
    try:
        lines = Path(path).read_text("utf-8").splitlines()
    except OSError as exc:
        raise EmptyDataset(f"cannot read dataset {path}: {exc}") from exc
    for line_no, line in enumerate(lines, start=1):
        if not line.strip():
            continue
        try:
            raw = json.loads(line)
        except ValueError as exc:
            raise SchemaError(f"line {line_no}: invalid JSON") from exc
        msgs = raw.get("messages") if isinstance(raw, dict) else None
        if not isinstance(msgs, list) or not msgs:
            raise SchemaError(f"line {line_no}: missing messages array")
        parsed = []
        for m in msgs:
            if (not isinstance(m, dict) or m.get("role") not in ROLES
                    or not isinstance(m.get("content"), str)):
                raise SchemaError(f"line {line_no}: malformed message entry")
            parsed.append((m["role"], m["content"]))
        if parsed[-1][0] != "assistant":
            raise SchemaError(f"line {line_no}: assistant message must be last")
        examples.append(parsed)
    if not examples:
        raise EmptyDataset(f"no examples in {path}")
    return examples


@dataclass
class PreparedDataset:
    train: list[list[int]]
    test: list[list[int]]
    tokenizer: VocabTokenizer
    rendered_train: list[str]
    rendered_test: list[str]


def split_examples(items: list, ratio: float, seed: int) -> tuple[list, list]:
    """Seeded shuffle; |train| = round(ratio * n), half-up."""
    shuffled = list(items)
    random.Random(seed).shuffle(shuffled)
    n_train = int(ratio * len(shuffled) + 0.5)
    return shuffled[:n_train], shuffled[n_train:]


def prepare_dataset(jsonl_path: str | Path, max_seq_length: int,
                    split_ratio: float = 0.9, seed: int = 0,
                    eos_token: str = DEFAULT_EOS_TOKEN) -> PreparedDataset:
    """Render every example through the chat template, build the vocabulary,
    tokenize with truncation at ``max_seq_length``, and split train/test."""
    examples = read_chat_jsonl(jsonl_path)
    rendered = [render_messages(msgs, eos_token=eos_token) for msgs in examples]
    train_txt, test_txt = split_examples(rendered, split_ratio, seed)
    tokenizer = VocabTokenizer.build(rendered)
    return PreparedDataset(
        train=[tokenizer.encode(t, max_length=max_seq_length) for t in train_txt],
        test=[tokenizer.encode(t, max_length=max_seq_length) for t in test_txt],
        tokenizer=tokenizer,
        rendered_train=train_txt,
        rendered_test=test_txt,
    )
