"""Source documents: scanned detection, page rendering, OCR conversion."""

from __future__ import annotations

import os
import shutil
import tempfile
from dataclasses import dataclass, field
from pathlib import Path
from typing import Protocol

from PIL import Image

from .. import pdfio
from ..errors import OcrEngineMissing, OcrFailure, RenderFailure, UnreadableDocument

#: A page counts as scanned when it has fewer extractable non-whitespace
#: characters than this.
SCANNED_CHAR_THRESHOLD = 32

#: Fraction of scanned pages that flags the whole document as scanned.
SCANNED_DOC_FRACTION = 0.5

DEFAULT_DPI = 200


@dataclass
class SourceDocument:
    path: str
    page_count: int
    per_page_text: list[str]
    _pdf: pdfio.PdfDocument = field(repr=False, default=None)  # type: ignore[assignment]

    def __post_init__(self) -> None:
        if self.page_count < 1:
            raise UnreadableDocument(f"{self.path}: document has no pages")
        if len(self.per_page_text) != self.page_count:
            raise UnreadableDocument("per-page text length != page count")


@dataclass(frozen=True)
class PageImage:
    page_index: int
    pixels: Image.Image
    dpi: int

    def __post_init__(self) -> None:
        if self.page_index < 0:
            raise ValueError("page_index must be >= 0")
        if self.dpi <= 0:
            raise ValueError("dpi must be > 0")


def load_document(path: str | Path) -> SourceDocument:
    pdf = pdfio.load_pdf(path)
    return SourceDocument(
        path=str(path),
        page_count=pdf.page_count,
        per_page_text=[p.text for p in pdf.pages],
        _pdf=pdf,
    )


def detect_scanned(doc: SourceDocument) -> tuple[list[bool], bool]:
    """Per-page scanned flags plus the document-level flag.

    A page is scanned iff its extractable non-whitespace character count is
    below the threshold; the document is scanned iff at least half its pages
    are.
    """
    flags = []
    for text in doc.per_page_text:
        visible = sum(1 for c in text if not c.isspace())
        flags.append(visible < SCANNED_CHAR_THRESHOLD)
    doc_flag = sum(flags) >= SCANNED_DOC_FRACTION * len(flags)
    return flags, doc_flag


def render_pages(doc: SourceDocument, dpi: int = DEFAULT_DPI) -> list[PageImage]:
    """One raster per page, ordered by page index."""
    if doc._pdf is None:
        raise RenderFailure(f"{doc.path}: no parsed page data to render")
    out = []
    for i, page in enumerate(doc._pdf.pages):
        out.append(PageImage(page_index=i, pixels=pdfio.render_page(page, dpi), dpi=dpi))
    return out


class OcrEngine(Protocol):
    def image_to_words(self, image: Image.Image) -> list[tuple[str, tuple[int, int, int, int]]]:
        """(word, (x0, y0, x1, y1)) boxes in image pixel coordinates."""
        ...


class TesseractEngine:
    """pytesseract-backed engine; optional dependency."""

    def __init__(self) -> None:
        try:
            import pytesseract
        except ImportError as exc:
            raise OcrEngineMissing("pytesseract is not installed") from exc
        if shutil.which("tesseract") is None:
            raise OcrEngineMissing("tesseract binary not found on PATH")
        self._pytesseract = pytesseract

    def image_to_words(self, image: Image.Image) -> list[tuple[str, tuple[int, int, int, int]]]:
        data = self._pytesseract.image_to_data(
            image, output_type=self._pytesseract.Output.DICT)
        words = []
        for i, text in enumerate(data["text"]):
            word = text.strip()
            if not word:
                continue
            x, y = data["left"][i], data["top"][i]
            w, h = data["width"][i], data["height"][i]
            words.append((word, (x, y, x + w, y + h)))
        return words


def default_ocr_engine() -> OcrEngine:
    return TesseractEngine()


def ocr_convert(doc: SourceDocument, out_path: str | Path | None = None,
                engine: OcrEngine | None = None, dpi: int = DEFAULT_DPI) -> SourceDocument:
    """Convert a scanned document into a searchable one.

    Each page image is OCR'd into an intermediate single-page searchable PDF,
    which is inserted into the output document and then deleted. A page whose
    OCR fails passes through image-only. Page count and order are preserved.
    """
    _, doc_scanned = detect_scanned(doc)
    if not doc_scanned:
        raise ValueError(f"{doc.path}: document is not flagged scanned")
    if engine is None:
        engine = default_ocr_engine()  # raises OcrEngineMissing when absent
    if out_path is None:
        stem = Path(doc.path)
        out_path = stem.with_name(stem.stem + ".ocr.pdf")

    pages = render_pages(doc, dpi=dpi)
    builder = pdfio.PdfBuilder(out_path)
    failures: list[int] = []
    for page in pages:
        try:
            words = engine.image_to_words(page.pixels)
        except OcrFailure:
            failures.append(page.page_index)
            builder.add_image_page(page.pixels, dpi=dpi)
            continue
        fd, tmp_path = tempfile.mkstemp(suffix=".pdf")
        os.close(fd)
        try:
            single = pdfio.PdfBuilder(tmp_path)
            single.add_searchable_page(page.pixels, words, dpi=dpi)
            single.save()
            parsed = pdfio.load_pdf(tmp_path)  # insert the intermediate page
            src = parsed.pages[0]
            if src.placed_images:
                builder.add_searchable_page(page.pixels, words, dpi=dpi)
            else:
                builder.add_text_page(src.text)
        finally:
            os.unlink(tmp_path)
    builder.save()
    converted = load_document(out_path)
    if converted.page_count != doc.page_count:
        raise OcrFailure(
            f"page count changed during OCR: {doc.page_count} -> {converted.page_count}")
    if failures:
        converted = SourceDocument(
            path=converted.path,
            page_count=converted.page_count,
            per_page_text=converted.per_page_text,
            _pdf=converted._pdf,
        )
    return converted
