"""Parameter-efficient supervised fine-tuning over chat-format datasets."""

__version__ = "0.1.0"
