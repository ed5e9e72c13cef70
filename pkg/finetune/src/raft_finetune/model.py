"""Tiny causal language models built locally from a registry.

The registry keeps toy-scale bases reproducible: a (base_model_id, seed,
vocab_size) triple always yields identical weights, which makes base-weight
checksums meaningful across training and serving.
"""

from __future__ import annotations

import hashlib
import math

import torch
from torch import nn

from .errors import IncompatibleAdapter

MODEL_REGISTRY: dict[str, dict] = {
    "tiny-causal-lm": dict(d_model=64, n_heads=2, n_layers=2, max_seq_len=4096),
    "tiny-causal-lm-wide": dict(d_model=128, n_heads=4, n_layers=2,
                                max_seq_len=4096),
}


class SelfAttention(nn.Module):
    def __init__(self, d_model: int, n_heads: int) -> None:
        super().__init__()
        self.n_heads = n_heads
        self.head_dim = d_model // n_heads
        self.q_proj = nn.Linear(d_model, d_model)
        self.k_proj = nn.Linear(d_model, d_model)
        self.v_proj = nn.Linear(d_model, d_model)
        self.o_proj = nn.Linear(d_model, d_model)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        b, t, d = x.shape
        shape = (b, t, self.n_heads, self.head_dim)
        q = self.q_proj(x).view(shape).transpose(1, 2)
        k = self.k_proj(x).view(shape).transpose(1, 2)
        v = self.v_proj(x).view(shape).transpose(1, 2)
        scores = q @ k.transpose(-2, -1) / math.sqrt(self.head_dim)
        mask = torch.triu(torch.ones(t, t, dtype=torch.bool, device=x.device),
                          diagonal=1)
        scores = scores.masked_fill(mask, float("-inf"))
        out = torch.softmax(scores, dim=-1) @ v
        return self.o_proj(out.transpose(1, 2).reshape(b, t, d))


class Block(nn.Module):
    def __init__(self, d_model: int, n_heads: int) -> None:
        super().__init__()
        self.ln1 = nn.LayerNorm(d_model)
        self.attn = SelfAttention(d_model, n_heads)
        self.ln2 = nn.LayerNorm(d_model)
        self.mlp = nn.Sequential(
            nn.Linear(d_model, d_model * 4), nn.GELU(),
            nn.Linear(d_model * 4, d_model))

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        x = x + self.attn(self.ln1(x))
        return x + self.mlp(self.ln2(x))


class TinyCausalLM(nn.Module):
    def __init__(self, vocab_size: int, d_model: int, n_heads: int,
                 n_layers: int, max_seq_len: int) -> None:
        super().__init__()
        self.vocab_size = vocab_size
        self.max_seq_len = max_seq_len
        self.tok_emb = nn.Embedding(vocab_size, d_model)
        self.pos_emb = nn.Embedding(max_seq_len, d_model)
        self.blocks = nn.ModuleList(Block(d_model, n_heads)
                                    for _ in range(n_layers))
        self.ln_f = nn.LayerNorm(d_model)
        self.lm_head = nn.Linear(d_model, vocab_size, bias=False)

    def forward(self, ids: torch.Tensor) -> torch.Tensor:
        t = ids.shape[1]
        pos = torch.arange(t, device=ids.device)
        x = self.tok_emb(ids) + self.pos_emb(pos)[None, :, :]
        for block in self.blocks:
            x = block(x)
        return self.lm_head(self.ln_f(x))

    @torch.no_grad()
    def generate_greedy(self, ids: torch.Tensor, n_tokens: int = 1) -> torch.Tensor:
        for _ in range(n_tokens):
            logits = self.forward(ids[:, -self.max_seq_len:])
            nxt = logits[:, -1, :].argmax(dim=-1, keepdim=True)
            ids = torch.cat([ids, nxt], dim=1)
        return ids


def build_base_model(base_model_id: str, vocab_size: int, seed: int) -> TinyCausalLM:
    if base_model_id not in MODEL_REGISTRY:
        raise IncompatibleAdapter(
            f"unknown base model {base_model_id!r}; known: "
            f"{sorted(MODEL_REGISTRY)}")
    torch.manual_seed(seed)
    return TinyCausalLM(vocab_size=vocab_size, **MODEL_REGISTRY[base_model_id])


def state_checksum(model: nn.Module, exclude_substring: str = "lora_") -> str:
    """sha256 over all non-LoRA parameters and buffers, sorted by name.

    LoRA wrapping nests the original linear under a ``base`` submodule;
    that path segment is stripped so checksums compare across wrapping.
    """
    digest = hashlib.sha256()
    state = model.state_dict()
    entries = {}
    for name in state:
        if exclude_substring in name:
            continue
        entries[name.replace(".base.", ".")] = state[name]
    for name in sorted(entries):
        digest.update(name.encode())
        digest.update(entries[name].detach().cpu().contiguous().numpy().tobytes())
    return digest.hexdigest()
