"""Training configuration."""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import yaml


@dataclass
class TrainConfig:
    dataset_path: Path
    output_dir: Path
    base_model_id: str = "tiny-causal-lm"
    lora_rank: int = 8
    lora_alpha: float = 32.0
    lora_dropout: float = 0.05
    learning_rate: float = 2.0e-05
    epochs: int = 3
    max_seq_length: int = 2048
    half_precision: bool = True
    quantization_bits: int = 4
    split_ratio: float = 0.9
    # not stated by the training recipe; ours, recorded in the manifest
    batch_size: int = 4
    seed: int = 0
    target_modules: tuple[str, ...] = ("q_proj", "k_proj", "v_proj", "o_proj")

    def __post_init__(self) -> None:
        if not (0 < self.lora_dropout < 1):
            raise ValueError("lora_dropout must be in (0, 1)")
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")
        if self.lora_rank < 1:
            raise ValueError("lora_rank must be >= 1")
        if not (0 < self.split_ratio < 1):
            raise ValueError("split_ratio must be in (0, 1)")
        if self.max_seq_length < 2:
            raise ValueError("max_seq_length must be >= 2")
        self.dataset_path = Path(self.dataset_path)
        self.output_dir = Path(self.output_dir)


def load_train_config(path: str | Path) -> TrainConfig:
    raw = yaml.safe_load(Path(path).read_text("utf-8")) or {}
    if "target_modules" in raw:
        raw["target_modules"] = tuple(raw["target_modules"])
    return TrainConfig(**raw)
