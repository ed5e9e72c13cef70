"""Low-rank adaptation over selected linear layers.

Base weights stay frozen; only the injected A/B matrices train. Merging
folds ``B @ A * (alpha / r)`` back into the base weight.
"""

from __future__ import annotations

import torch
from torch import nn


class LoRALinear(nn.Module):
    def __init__(self, base: nn.Linear, rank: int, alpha: float,
                 dropout: float) -> None:
        super().__init__()
        self.base = base
        self.base.weight.requires_grad_(False)
        if self.base.bias is not None:
            self.base.bias.requires_grad_(False)
        self.rank = rank
        self.scaling = alpha / rank
        self.lora_dropout = nn.Dropout(dropout)
        self.lora_a = nn.Parameter(
            torch.randn(rank, base.in_features) * 0.02)
        self.lora_b = nn.Parameter(torch.zeros(base.out_features, rank))

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        update = self.lora_dropout(x) @ self.lora_a.T @ self.lora_b.T
        return self.base(x) + update * self.scaling

    def merged_weight(self) -> torch.Tensor:
        return self.base.weight + (self.lora_b @ self.lora_a) * self.scaling


def apply_lora(model: nn.Module, target_modules: tuple[str, ...], rank: int,
               alpha: float, dropout: float) -> list[str]:
    """Replace every targeted nn.Linear with a LoRA wrapper; freezes the rest.
    Returns the qualified names of the wrapped modules."""
    for p in model.parameters():
        p.requires_grad_(False)
    wrapped = []
    for parent_name, parent in list(model.named_modules()):
        for child_name, child in list(parent.named_children()):
            if child_name in target_modules and isinstance(child, nn.Linear):
                setattr(parent, child_name,
                        LoRALinear(child, rank, alpha, dropout))
                full = f"{parent_name}.{child_name}" if parent_name else child_name
                wrapped.append(full)
    if not wrapped:
        raise ValueError(f"no target modules matched {target_modules}")
    return wrapped


def lora_parameters(model: nn.Module):
    return [p for n, p in model.named_parameters() if "lora_" in n]


def trainable_fraction(model: nn.Module) -> float:
    trainable = sum(p.numel() for p in model.parameters() if p.requires_grad)
    total = sum(p.numel() for p in model.parameters())
    return trainable / total


def lora_state_dict(model: nn.Module) -> dict[str, torch.Tensor]:
    return {n: p.detach().cpu() for n, p in model.named_parameters()
            if "lora_" in n}


def load_lora_state(model: nn.Module, state: dict[str, torch.Tensor]) -> None:
    own = dict(model.named_parameters())
    missing = set(state) - set(own)
    if missing:
        raise KeyError(f"adapter parameters not present in model: {sorted(missing)}")
    with torch.no_grad():
        for name, tensor in state.items():
            own[name].copy_(tensor)


def merge_lora(model: nn.Module) -> None:
    """Fold every LoRA update into its base weight and unwrap in place."""
    for parent_name, parent in list(model.named_modules()):
        for child_name, child in list(parent.named_children()):
            if isinstance(child, LoRALinear):
                with torch.no_grad():
                    child.base.weight.copy_(child.merged_weight())
                setattr(parent, child_name, child.base)
