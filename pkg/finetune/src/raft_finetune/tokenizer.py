"""Deterministic word-level tokenizer built from the training corpus."""

from __future__ import annotations

import json
import re
from dataclasses import dataclass
from pathlib import Path

from .template import DEFAULT_EOS_TOKEN, ROLE_MARKERS

PAD = "<pad>"
UNK = "<unk>"

SPECIALS = (PAD, UNK, *ROLE_MARKERS.values(), DEFAULT_EOS_TOKEN)

# specials first, then newlines, then non-space runs that stop at a special
_SPECIAL_ALT = "|".join(re.escape(s) for s in SPECIALS[2:])
_TOKEN_RE = re.compile(
    _SPECIAL_ALT + r"|\n|(?:(?!" + _SPECIAL_ALT + r")[^\s])+")


def split_tokens(text: str) -> list[str]:
    return _TOKEN_RE.findall(text)


@dataclass
class VocabTokenizer:
    vocab: dict[str, int]

    @classmethod
    def build(cls, texts: list[str]) -> "VocabTokenizer":
        seen = set()
        for text in texts:
            seen.update(split_tokens(text))
        vocab = {tok: i for i, tok in enumerate(SPECIALS)}
        for tok in sorted(seen):
            if tok not in vocab:
                vocab[tok] = len(vocab)
        return cls(vocab=vocab)

    def __len__(self) -> int:
        return len(self.vocab)

    @property
    def pad_id(self) -> int:
        return self.vocab[PAD]

    @property
    def unk_id(self) -> int:
        return self.vocab[UNK]

    @property
    def eos_id(self) -> int:
        return self.vocab[DEFAULT_EOS_TOKEN]

    def encode(self, text: str, max_length: int | None = None) -> list[int]:
        ids = [self.vocab.get(tok, self.unk_id) for tok in split_tokens(text)]
        if max_length is not None:
            ids = ids[:max_length]
        return ids

    def decode(self, ids: list[int]) -> str:
        inverse = {i: t for t, i in self.vocab.items()}
        return " ".join(inverse.get(i, UNK) for i in ids)

    def save(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.vocab, ensure_ascii=False,
                                         sort_keys=True), encoding="utf-8")

    @classmethod
    def load(cls, path: str | Path) -> "VocabTokenizer":
        return cls(vocab=json.loads(Path(path).read_text("utf-8")))
