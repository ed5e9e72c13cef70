"""Supervised fine-tuning loop over LoRA parameters only."""

from __future__ import annotations

import json
import time
from dataclasses import dataclass, field
from pathlib import Path

import torch
from torch import nn

from .config import TrainConfig
from .data import PreparedDataset, prepare_dataset
from .errors import DatasetTooSmall, OutOfMemory
from .lora import apply_lora, lora_parameters, lora_state_dict, trainable_fraction
from .model import build_base_model, state_checksum

MANIFEST_NAME = "adapter_manifest.json"
WEIGHTS_NAME = "lora_weights.pt"
VOCAB_NAME = "vocab.json"
LOG_NAME = "train_log.json"


@dataclass
class TrainLog:
    epochs: list[dict] = field(default_factory=list)  # one row per epoch
    wall_time_s: float = 0.0

    def to_dict(self) -> dict:
        return {"epochs": self.epochs, "wall_time_s": self.wall_time_s}


def _batches(rows: list[list[int]], batch_size: int, pad_id: int):
    for i in range(0, len(rows), batch_size):
        group = rows[i: i + batch_size]
        width = max(len(r) for r in group)
        batch = torch.full((len(group), width), pad_id, dtype=torch.long)
        for j, row in enumerate(group):
            batch[j, : len(row)] = torch.tensor(row, dtype=torch.long)
        yield batch


def _lm_loss(model: nn.Module, batch: torch.Tensor, pad_id: int) -> torch.Tensor:
    logits = model(batch[:, :-1])
    targets = batch[:, 1:]
    return nn.functional.cross_entropy(
        logits.reshape(-1, logits.shape[-1]), targets.reshape(-1),
        ignore_index=pad_id)


def _epoch_loss(model: nn.Module, rows: list[list[int]], batch_size: int,
                pad_id: int) -> float:
    model.eval()
    total, count = 0.0, 0
    with torch.no_grad():
        for batch in _batches(rows, batch_size, pad_id):
            total += float(_lm_loss(model, batch, pad_id))
            count += 1
    return total / max(count, 1)


def train(cfg: TrainConfig, dataset: PreparedDataset | None = None,
          ) -> tuple[Path, TrainLog]:
    """Run SFT over the LoRA parameters and save the adapter directory.

    Base weights are frozen and checksummed before and after: the run aborts
    if they moved. Returns (adapter_dir, TrainLog) with one log row per epoch.
    """
    if dataset is None:
        dataset = prepare_dataset(cfg.dataset_path, cfg.max_seq_length,
                                  split_ratio=cfg.split_ratio, seed=cfg.seed)
    if len(dataset.train) < 1 or len(dataset.test) < 1:
        raise DatasetTooSmall(
            f"split produced {len(dataset.train)} train / {len(dataset.test)} "
            "test examples; need at least one of each")

    rows = [r for r in dataset.train if len(r) >= 2]
    if not rows:
        raise DatasetTooSmall("no train example has >= 2 tokens")

    model = build_base_model(cfg.base_model_id, len(dataset.tokenizer), cfg.seed)
    checksum_before = state_checksum(model)
    torch.manual_seed(cfg.seed + 1)  # LoRA init independent of base init
    wrapped = apply_lora(model, cfg.target_modules, cfg.lora_rank,
                         cfg.lora_alpha, cfg.lora_dropout)
    if cfg.half_precision and torch.cuda.is_available():  # fp32 on CPU
        model = model.half().cuda()

    pad_id = dataset.tokenizer.pad_id
    optimizer = torch.optim.AdamW(lora_parameters(model), lr=cfg.learning_rate)
    log = TrainLog()
    started = time.perf_counter()
    try:
        for epoch in range(1, cfg.epochs + 1):
            model.train()
            total, count = 0.0, 0
            for batch in _batches(rows, cfg.batch_size, pad_id):
                optimizer.zero_grad()
                loss = _lm_loss(model, batch, pad_id)
                loss.backward()
                optimizer.step()
                total += float(loss.detach())
                count += 1
            val = _epoch_loss(model, dataset.test, cfg.batch_size, pad_id)
            log.epochs.append({
                "epoch": epoch,
                "training_loss": total / max(count, 1),
                "validation_loss": val,
            })
    except torch.cuda.OutOfMemoryError as exc:  # pragma: no cover
        raise OutOfMemory("reduce max_seq_length or batch_size") from exc
    log.wall_time_s = time.perf_counter() - started

    checksum_after = state_checksum(model)
    if checksum_after != checksum_before:
        raise RuntimeError("base weights changed during training")

    out = Path(cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    torch.save(lora_state_dict(model), out / WEIGHTS_NAME)
    dataset.tokenizer.save(out / VOCAB_NAME)
    manifest = {
        "base_model_id": cfg.base_model_id,
        "base_seed": cfg.seed,
        "base_checksum": checksum_before,
        "r": cfg.lora_rank,
        "alpha": cfg.lora_alpha,
        "dropout": cfg.lora_dropout,
        "target_modules": list(cfg.target_modules),
        "wrapped_modules": wrapped,
        "learning_rate": cfg.learning_rate,
        "epochs": cfg.epochs,
        "max_seq_length": cfg.max_seq_length,
        "batch_size": cfg.batch_size,
        "optimizer": "adamw",
        "half_precision": cfg.half_precision,
        "quantization_bits": cfg.quantization_bits,
        "vocab_size": len(dataset.tokenizer),
        "trainable_fraction": trainable_fraction(model),
    }
    (out / MANIFEST_NAME).write_text(
        json.dumps(manifest, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    (out / LOG_NAME).write_text(
        json.dumps(log.to_dict(), indent=2) + "\n", encoding="utf-8")
    return out, log
