"""Layout elements: detection backends, element extraction, table HTML."""

from __future__ import annotations

import html
import io
from dataclasses import dataclass
from typing import Any, Protocol, Sequence

import httpx
from PIL import Image

from ..errors import DetectorUnavailable, StructureRecoveryFailure
from ..providers import MockScript
from .document import PageImage

ELEMENT_KINDS = ("table", "image")

DEFAULT_CONFIDENCE_THRESHOLD = 0.5


@dataclass(frozen=True)
class Detection:
    kind: str
    bbox: tuple[float, float, float, float]
    confidence: float


@dataclass(frozen=True)
class LayoutElement:
    page_index: int
    kind: str
    bbox: tuple[int, int, int, int]  # page pixel coordinates
    crop: Image.Image

    def __post_init__(self) -> None:
        x0, y0, x1, y1 = self.bbox
        if not (x0 < x1 and y0 < y1):
            raise ValueError(f"degenerate bbox {self.bbox}")
        if self.kind not in ELEMENT_KINDS:
            raise ValueError(f"invalid element kind {self.kind!r}")


@dataclass(frozen=True)
class TableCell:
    text: str
    rowspan: int = 1
    colspan: int = 1


class LayoutBackend(Protocol):
    """Detection plus table-structure recognition behind one interface."""

    def detect(self, page: PageImage) -> list[Detection]: ...

    def recognize_table(self, crop: Image.Image) -> list[list[TableCell]]: ...


class HttpLayoutBackend:
    """POSTs the page PNG to a detection service returning a JSON array of
    ``{kind, bbox, confidence}``; table structure uses the same service with
    a ``mode=structure`` query."""

    def __init__(self, url: str, timeout: float = 60.0,
                 transport: httpx.BaseTransport | None = None) -> None:
        self.url = url
        self._client = httpx.Client(timeout=timeout, transport=transport)

    def _post(self, image: Image.Image, params: dict | None = None) -> Any:
        buf = io.BytesIO()
        image.save(buf, format="PNG")
        try:
            resp = self._client.post(self.url, params=params,
                                     content=buf.getvalue(),
                                     headers={"Content-Type": "image/png"})
            resp.raise_for_status()
            return resp.json()
        except (httpx.HTTPError, ValueError) as exc:
            raise DetectorUnavailable(f"layout service at {self.url}: {exc}") from exc

    def detect(self, page: PageImage) -> list[Detection]:
        raw = self._post(page.pixels)
        return [Detection(kind=d["kind"], bbox=tuple(d["bbox"]),
                          confidence=float(d.get("confidence", 1.0)))
                for d in raw]

    def recognize_table(self, crop: Image.Image) -> list[list[TableCell]]:
        raw = self._post(crop, params={"mode": "structure"})
        if not raw:
            raise StructureRecoveryFailure("service returned no structure")
        return _coerce_rows(raw)


class NullLayoutBackend:
    """No detector configured: no structured elements."""

    def detect(self, page: PageImage) -> list[Detection]:
        return []

    def recognize_table(self, crop: Image.Image) -> list[list[TableCell]]:
        raise StructureRecoveryFailure("no layout backend configured")


class ScriptedLayoutBackend:
    """Deterministic backend for offline runs: detections keyed by page index,
    table structures consumed in sequence (a null entry scripts a recovery
    failure)."""

    def __init__(self, detections: dict[int, list[dict]] | None = None,
                 table_structures: Sequence[Any] | None = None) -> None:
        self._detections = detections or {}
        self._structures = list(table_structures or [])
        self._next = 0

    @classmethod
    def from_mock_script(cls, script: MockScript) -> "ScriptedLayoutBackend":
        return cls(detections=script.detections,
                   table_structures=script.table_structures)

    def detect(self, page: PageImage) -> list[Detection]:
        return [Detection(kind=d["kind"], bbox=tuple(d["bbox"]),
                          confidence=float(d.get("confidence", 1.0)))
                for d in self._detections.get(page.page_index, [])]

    def recognize_table(self, crop: Image.Image) -> list[list[TableCell]]:
        if self._next >= len(self._structures):
            raise StructureRecoveryFailure("scripted structures exhausted")
        entry = self._structures[self._next]
        self._next += 1
        if entry is None:
            raise StructureRecoveryFailure("scripted recovery failure")
        return _coerce_rows(entry)


def _coerce_rows(raw: Any) -> list[list[TableCell]]:
    rows = []
    for raw_row in raw:
        row = []
        for cell in raw_row:
            if isinstance(cell, str):
                row.append(TableCell(text=cell))
            else:
                row.append(TableCell(text=str(cell.get("text", "")),
                                     rowspan=int(cell.get("rowspan", 1)),
                                     colspan=int(cell.get("colspan", 1))))
        rows.append(row)
    return rows


def detect_elements(pages: list[PageImage], detector: LayoutBackend,
                    confidence_threshold: float = DEFAULT_CONFIDENCE_THRESHOLD,
                    ) -> list[LayoutElement]:
    """Run detection over every page; elements come back sorted by
    (page_index, y0, x0), each carrying its crop."""
    elements = []
    for page in pages:
        width, height = page.pixels.size
        for det in detector.detect(page):
            if det.kind not in ELEMENT_KINDS or det.confidence < confidence_threshold:
                continue
            x0 = max(0, int(det.bbox[0]))
            y0 = max(0, int(det.bbox[1]))
            x1 = min(width, int(det.bbox[2]))
            y1 = min(height, int(det.bbox[3]))
            if x0 >= x1 or y0 >= y1:
                continue
            elements.append(LayoutElement(
                page_index=page.page_index,
                kind=det.kind,
                bbox=(x0, y0, x1, y1),
                crop=page.pixels.crop((x0, y0, x1, y1)),
            ))
    elements.sort(key=lambda e: (e.page_index, e.bbox[1], e.bbox[0]))
    return elements


def rows_to_html(rows: list[list[TableCell]]) -> str:
    """Well-formed single-table markup preserving reading order and spans."""
    parts = ["<table>"]
    for row in rows:
        parts.append("<tr>")
        for cell in row:
            attrs = ""
            if cell.rowspan > 1:
                attrs += f' rowspan="{cell.rowspan}"'
            if cell.colspan > 1:
                attrs += f' colspan="{cell.colspan}"'
            parts.append(f"<td{attrs}>{html.escape(cell.text)}</td>")
        parts.append("</tr>")
    parts.append("</table>")
    return "".join(parts)


def table_to_html(elem: LayoutElement, backend: LayoutBackend,
                  ocr_engine=None) -> str:
    """Recover the table crop's structure as HTML.

    On :class:`StructureRecoveryFailure` the error is re-raised carrying the
    crop's OCR'd plain text (empty when no engine is available) so callers
    can degrade to a flagged text-only description.
    """
    if elem.kind != "table":
        raise ValueError("element is not a table")
    try:
        rows = backend.recognize_table(elem.crop)
    except StructureRecoveryFailure as exc:
        fallback = ""
        if ocr_engine is not None:
            try:
                fallback = " ".join(w for w, _ in ocr_engine.image_to_words(elem.crop))
            except Exception:
                fallback = ""
        raise StructureRecoveryFailure(str(exc), fallback_text=fallback) from exc
    if not rows:
        raise StructureRecoveryFailure("structure recognizer returned no rows")
    return rows_to_html(rows)
