"""The committed shared fixture stays in lockstep with the chat template.

The fine-tuning harness renders the same fixture independently and must
produce these exact bytes; this test pins the producing side.
"""

from __future__ import annotations

import json
from pathlib import Path

from sdrag.raft import ChatFormattedExample, parse_template, render_template

FIXTURES = Path(__file__).resolve().parent.parent / "fixtures" / "shared"


def load_examples() -> list[ChatFormattedExample]:
    out = []
    for line in (FIXTURES / "chat_examples.jsonl").read_text("utf-8").splitlines():
        raw = json.loads(line)
        out.append(ChatFormattedExample(messages=tuple(
            (m["role"], m["content"]) for m in raw["messages"])))
    return out


def test_render_matches_committed_bytes():
    rendered = json.loads((FIXTURES / "rendered.json").read_text("utf-8"))
    examples = load_examples()
    assert len(rendered) == len(examples) == 3
    for example, want in zip(examples, rendered):
        assert render_template(example) == want


def test_committed_renders_parse_back():
    rendered = json.loads((FIXTURES / "rendered.json").read_text("utf-8"))
    for example, text in zip(load_examples(), rendered):
        assert parse_template(text) == example
