"""Harness exceptions."""


class FinetuneError(Exception):
    """Base class for harness failures."""


class SchemaError(FinetuneError):
    """Dataset line does not conform to the chat-format schema."""


class EmptyDataset(FinetuneError):
    """Dataset file holds no examples."""


class DatasetTooSmall(FinetuneError):
    """Not enough examples to train and validate."""


class IncompatibleAdapter(FinetuneError):
    """Adapter was trained against a different base model."""


class OutOfMemory(FinetuneError):
    """Training ran out of memory; consider reducing max_seq_length."""
