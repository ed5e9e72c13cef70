"""Adapter deployment: merge into the base or emit a serving reference."""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import torch

from .errors import IncompatibleAdapter
from .lora import apply_lora, load_lora_state, merge_lora
from .model import TinyCausalLM, build_base_model
from .tokenizer import VocabTokenizer
from .train import MANIFEST_NAME, VOCAB_NAME, WEIGHTS_NAME


@dataclass
class DeployableRef:
    """Serving reference: either merged weights or adapter-attached config."""

    base_model_id: str
    mode: str  # "merged" | "adapter"
    adapter_dir: str
    quantization_bits: int
    merged_weights: str | None = None

    def to_dict(self) -> dict:
        return {
            "base_model_id": self.base_model_id,
            "mode": self.mode,
            "adapter_dir": self.adapter_dir,
            "quantization_bits": self.quantization_bits,
            "merged_weights": self.merged_weights,
        }

    def save(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2,
                                         sort_keys=True) + "\n",
                              encoding="utf-8")

    @classmethod
    def load(cls, path: str | Path) -> "DeployableRef":
        return cls(**json.loads(Path(path).read_text("utf-8")))


def read_manifest(adapter_dir: str | Path) -> dict:
    return json.loads((Path(adapter_dir) / MANIFEST_NAME).read_text("utf-8"))


def _quantize_int4(weight: torch.Tensor) -> torch.Tensor:
    """Symmetric per-row 4-bit quantize-dequantize."""
    scale = weight.abs().amax(dim=-1, keepdim=True).clamp(min=1e-8) / 7.0
    q = torch.clamp(torch.round(weight / scale), -8, 7)
    return q * scale


def load_adapted_model(adapter_dir: str | Path, base_model_id: str,
                       merged: bool = True) -> tuple[TinyCausalLM, VocabTokenizer]:
    """Rebuild the base from its registry seed, attach the adapter, and
    optionally merge the LoRA updates into the base weights."""
    adapter_dir = Path(adapter_dir)
    manifest = read_manifest(adapter_dir)
    if manifest["base_model_id"] != base_model_id:
        raise IncompatibleAdapter(
            f"adapter was trained on {manifest['base_model_id']!r}, "
            f"requested base is {base_model_id!r}")
    model = build_base_model(base_model_id, manifest["vocab_size"],
                             manifest["base_seed"])
    apply_lora(model, tuple(manifest["target_modules"]), manifest["r"],
               manifest["alpha"], manifest["dropout"])
    state = torch.load(adapter_dir / WEIGHTS_NAME, weights_only=True)
    load_lora_state(model, state)
    if merged:
        merge_lora(model)
    model.eval()
    tokenizer = VocabTokenizer.load(adapter_dir / VOCAB_NAME)
    return model, tokenizer


def merge_or_serve(adapter_dir: str | Path, base_model_id: str,
                   mode: str = "merged",
                   quantization_bits: int | None = None) -> DeployableRef:
    """Produce the deployable reference (validates adapter/base compatibility).

    ``merged`` folds the adapter into the base and saves full weights, with an
    optional 4-bit weight quantization pass; ``adapter`` emits an
    adapter-attached serving config.
    """
    adapter_dir = Path(adapter_dir)
    manifest = read_manifest(adapter_dir)
    bits = quantization_bits if quantization_bits is not None \
        else int(manifest.get("quantization_bits", 0))
    if mode == "adapter":
        if manifest["base_model_id"] != base_model_id:
            raise IncompatibleAdapter(
                f"adapter was trained on {manifest['base_model_id']!r}, "
                f"requested base is {base_model_id!r}")
        return DeployableRef(base_model_id=base_model_id, mode="adapter",
                             adapter_dir=str(adapter_dir),
                             quantization_bits=bits)
    model, _ = load_adapted_model(adapter_dir, base_model_id, merged=True)
    if bits == 4:
        with torch.no_grad():
            for module in model.modules():
                if isinstance(module, torch.nn.Linear):
                    module.weight.copy_(_quantize_int4(module.weight))
    merged_path = adapter_dir / "merged_weights.pt"
    torch.save(model.state_dict(), merged_path)
    return DeployableRef(base_model_id=base_model_id, mode="merged",
                         adapter_dir=str(adapter_dir),
                         quantization_bits=bits,
                         merged_weights=str(merged_path))
