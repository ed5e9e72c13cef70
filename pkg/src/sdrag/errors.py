"""Exception hierarchy for the engine."""

from __future__ import annotations


class SdragError(Exception):
    """Base class for every error raised by this package."""


class ConfigError(SdragError):
    """Invalid or incomplete configuration."""


# --- provider transport ------------------------------------------------

class ProviderError(SdragError):
    """Base class for model-provider failures."""


class AuthError(ProviderError):
    """Endpoint rejected the API key (401/403)."""


class RateLimitExhausted(ProviderError):
    """Endpoint kept rate-limiting after all retries were spent."""


class MalformedResponse(ProviderError):
    """Endpoint returned a payload that does not conform to the protocol."""


class Timeout(ProviderError):
    """Request timed out on every attempt."""


class UnsupportedImage(ProviderError):
    """Image payload is empty or not a recognized raster format."""


class MockScriptExhausted(ProviderError):
    """Scripted provider ran out of canned responses."""


# --- document ingest ---------------------------------------------------

class UnreadableDocument(SdragError):
    """Input document cannot be opened or parsed."""


class OcrEngineMissing(SdragError):
    """Optional OCR dependency is not installed; callers may skip OCR paths."""


class OcrFailure(SdragError):
    """OCR failed on a page; the page passes through image-only."""


class RenderFailure(SdragError):
    """Page rasterization failed."""


class DetectorUnavailable(SdragError):
    """Layout-detection backend is unreachable."""


class StructureRecoveryFailure(SdragError):
    """Table structure could not be recovered from the crop.

    Carries ``fallback_text``, the plain text of the crop (OCR'd when an
    engine is available, empty otherwise), for callers that degrade to a
    text-only description.
    """

    def __init__(self, message: str, fallback_text: str = "") -> None:
        super().__init__(message)
        self.fallback_text = fallback_text


class WriteFailure(SdragError):
    """Corpus output could not be written."""


# --- vector index ------------------------------------------------------

class DimensionMismatch(SdragError):
    """Vector dimension disagrees with the index or between endpoint replies."""


class DuplicateChunkId(SdragError):
    """Chunk id already present in the index."""


class EmptyIndex(SdragError):
    """Search attempted against an index with no entries."""


class CorruptIndex(SdragError):
    """Index file failed validation (magic, version, or length)."""


class IoFailure(SdragError):
    """Filesystem operation failed."""


# --- RAFT dataset ------------------------------------------------------

class CorpusTooSmall(SdragError):
    """Not enough non-oracle chunks to sample the requested distractors."""


class EmptyGeneration(SdragError):
    """Provider returned an empty generation after the retry."""


class TooFewRecords(SdragError):
    """Dataset split requires at least two records."""


class InvariantViolation(SdragError):
    """A record violates the dataset invariants."""


# --- evaluation --------------------------------------------------------

class JudgeFormatError(SdragError):
    """Judge reply stayed malformed after the repair retry."""


# --- pipeline ----------------------------------------------------------

class StageError(SdragError):
    """A pipeline stage failed; carries the stage name for attribution."""

    def __init__(self, stage: str, cause: BaseException) -> None:
        super().__init__(f"stage '{stage}' failed: {cause}")
        self.stage = stage
        self.cause = cause
