"""Shared fixtures for the harness tests."""

from __future__ import annotations

import json
from pathlib import Path

import pytest


def chat_line(user: str, assistant: str, system: str | None = None) -> str:
    messages = []
    if system is not None:
        messages.append({"role": "system", "content": system})
    messages.append({"role": "user", "content": user})
    messages.append({"role": "assistant", "content": assistant})
    return json.dumps({"messages": messages})


def write_dataset(path: Path, n: int = 20) -> Path:
    lines = []
    for i in range(n):
        lines.append(chat_line(
            f"Document 1:\nfact {i} about transformers\n\n"
            f"Question: what is fact {i}?",
            f"Reasoning over fact {i}. Answer: fact {i} concerns transformers."))
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    return path


@pytest.fixture
def dataset_path(tmp_path) -> Path:
    return write_dataset(tmp_path / "chat.jsonl")
