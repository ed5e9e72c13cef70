"""`finetune --config train.yaml`: run the SFT job."""

from __future__ import annotations

import argparse
import json
import sys

from .config import load_train_config
from .errors import FinetuneError
from .train import train


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(
        prog="finetune",
        description="LoRA/SFT fine-tuning over a chat-format JSONL dataset")
    parser.add_argument("--config", required=True, help="YAML training config")
    parser.add_argument("--json", action="store_true",
                        help="print a JSON summary instead of text")
    args = parser.parse_args(argv)
    try:
        cfg = load_train_config(args.config)
        adapter_dir, log = train(cfg)
    except (FinetuneError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    if args.json:
        print(json.dumps({"adapter_dir": str(adapter_dir),
                          "log": log.to_dict()}, indent=2))
    else:
        print(f"adapter written to {adapter_dir}")
        for row in log.epochs:
            print(f"  epoch {row['epoch']}: train loss "
                  f"{row['training_loss']:.4f}, val loss "
                  f"{row['validation_loss']:.4f}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
