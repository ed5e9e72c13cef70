"""Document ingestion: scanned-document handling, layout elements, structured
data description, and corpus assembly."""

from .corpus import CorpusBundle, assemble_corpus, load_corpus
from .describe import ElementDescription, describe_image, describe_table
from .document import (
    PageImage,
    SourceDocument,
    detect_scanned,
    load_document,
    ocr_convert,
    render_pages,
)
from .layout import (
    Detection,
    HttpLayoutBackend,
    LayoutElement,
    NullLayoutBackend,
    ScriptedLayoutBackend,
    detect_elements,
    table_to_html,
)

__all__ = [
    "CorpusBundle",
    "Detection",
    "ElementDescription",
    "HttpLayoutBackend",
    "LayoutElement",
    "NullLayoutBackend",
    "PageImage",
    "ScriptedLayoutBackend",
    "SourceDocument",
    "assemble_corpus",
    "describe_image",
    "describe_table",
    "detect_elements",
    "detect_scanned",
    "load_corpus",
    "load_document",
    "ocr_convert",
    "render_pages",
    "table_to_html",
]
