"""Minimal PDF reading, writing, and rasterization.

No PDF library is assumed: reading is a small parser covering the subset the
pipeline needs (classic objects located by brute-force scan, FlateDecode and
DCTDecode streams, BT/ET text extraction, XObject image placement), writing
goes through reportlab, and rasterization composites embedded images plus a
best-effort text painting onto a PIL canvas. Good for reportlab-style and
other simply-structured PDFs; exotic features (encryption, object streams,
CCITT images) are out of scope.
"""

from __future__ import annotations

import base64
import io
import re
import zlib
from dataclasses import dataclass, field
from pathlib import Path

from PIL import Image, ImageDraw, ImageFont

from .errors import RenderFailure, UnreadableDocument

_WHITESPACE = b"\x00\t\n\x0c\r "
_DELIMS = b"()<>[]{}/%"


# --------------------------------------------------------------------------
# object model


@dataclass(frozen=True)
class Ref:
    num: int
    gen: int


class _Name(str):
    """PDF name object (distinct from strings)."""


@dataclass
class _Stream:
    meta: dict
    raw: bytes

    def data(self) -> bytes:
        filters = self.meta.get("Filter")
        if filters is None:
            return self.raw
        if isinstance(filters, _Name):
            filters = [filters]
        data = self.raw
        for f in filters:
            if f == "FlateDecode":
                data = zlib.decompress(data)
            elif f == "ASCII85Decode":
                body = re.sub(rb"\s", b"", data)
                if body.endswith(b"~>"):
                    body = body[:-2]
                data = base64.a85decode(body)
            else:
                raise UnreadableDocument(f"unsupported stream filter {f}")
        return data


# --------------------------------------------------------------------------
# lexing / parsing


class _Parser:
    def __init__(self, data: bytes) -> None:
        self.data = data

    def _skip_ws(self, pos: int) -> int:
        data = self.data
        while pos < len(data):
            c = data[pos: pos + 1]
            if c in (b"%",):
                nl = self.data.find(b"\n", pos)
                pos = len(data) if nl < 0 else nl + 1
            elif c in _WHITESPACE:
                pos += 1
            else:
                break
        return pos

    def parse_value(self, pos: int):
        data = self.data
        pos = self._skip_ws(pos)
        if pos >= len(data):
            raise UnreadableDocument("unexpected end of PDF data")
        c = data[pos: pos + 1]
        if c == b"<":
            if data[pos + 1: pos + 2] == b"<":
                return self._parse_dict(pos)
            return self._parse_hex_string(pos)
        if c == b"(":
            return self._parse_literal_string(pos)
        if c == b"/":
            return self._parse_name(pos)
        if c == b"[":
            return self._parse_array(pos)
        if data.startswith(b"true", pos):
            return True, pos + 4
        if data.startswith(b"false", pos):
            return False, pos + 5
        if data.startswith(b"null", pos):
            return None, pos + 4
        return self._parse_number_or_ref(pos)

    def _parse_dict(self, pos: int):
        pos += 2
        out: dict = {}
        while True:
            pos = self._skip_ws(pos)
            if self.data.startswith(b">>", pos):
                return out, pos + 2
            key, pos = self._parse_name(pos)
            value, pos = self.parse_value(pos)
            out[str(key)] = value

    def _parse_array(self, pos: int):
        pos += 1
        out = []
        while True:
            pos = self._skip_ws(pos)
            if self.data.startswith(b"]", pos):
                return out, pos + 1
            value, pos = self.parse_value(pos)
            out.append(value)

    def _parse_name(self, pos: int):
        if self.data[pos: pos + 1] != b"/":
            raise UnreadableDocument("expected name")
        pos += 1
        start = pos
        data = self.data
        while pos < len(data) and data[pos: pos + 1] not in _WHITESPACE \
                and data[pos: pos + 1] not in b"()<>[]{}/%":
            pos += 1
        raw = data[start:pos]
        # resolve #xx escapes
        if b"#" in raw:
            raw = re.sub(rb"#([0-9A-Fa-f]{2})",
                         lambda m: bytes([int(m.group(1), 16)]), raw)
        return _Name(raw.decode("latin-1")), pos

    def _parse_literal_string(self, pos: int):
        data = self.data
        pos += 1
        depth = 1
        out = bytearray()
        while pos < len(data):
            c = data[pos]
            if c == 0x5C:  # backslash
                pos += 1
                if pos >= len(data):
                    break
                e = data[pos]
                mapping = {0x6E: 10, 0x72: 13, 0x74: 9, 0x62: 8, 0x66: 12,
                           0x28: 0x28, 0x29: 0x29, 0x5C: 0x5C}
                if e in mapping:
                    out.append(mapping[e])
                    pos += 1
                elif 0x30 <= e <= 0x37:  # octal
                    oct_digits = ""
                    while len(oct_digits) < 3 and pos < len(data) and 0x30 <= data[pos] <= 0x37:
                        oct_digits += chr(data[pos])
                        pos += 1
                    out.append(int(oct_digits, 8) & 0xFF)
                elif e in (10, 13):  # line continuation
                    pos += 1
                    if e == 13 and pos < len(data) and data[pos] == 10:
                        pos += 1
                else:
                    out.append(e)
                    pos += 1
                continue
            if c == 0x28:
                depth += 1
            elif c == 0x29:
                depth -= 1
                if depth == 0:
                    return bytes(out), pos + 1
            out.append(c)
            pos += 1
        raise UnreadableDocument("unterminated literal string")

    def _parse_hex_string(self, pos: int):
        end = self.data.find(b">", pos + 1)
        if end < 0:
            raise UnreadableDocument("unterminated hex string")
        hex_digits = re.sub(rb"\s", b"", self.data[pos + 1: end])
        if len(hex_digits) % 2:
            hex_digits += b"0"
        return bytes.fromhex(hex_digits.decode("ascii")), end + 1

    _NUM_RE = re.compile(rb"[+-]?(?:\d+\.?\d*|\.\d+)")
    _REF_RE = re.compile(rb"(\d+)\s+(\d+)\s+R(?![\w])")

    def _parse_number_or_ref(self, pos: int):
        m = self._REF_RE.match(self.data, pos)
        if m:
            return Ref(int(m.group(1)), int(m.group(2))), m.end()
        m = self._NUM_RE.match(self.data, pos)
        if not m:
            raise UnreadableDocument(
                f"cannot parse value at offset {pos}: {self.data[pos:pos+20]!r}")
        text = m.group(0)
        value = float(text) if b"." in text else int(text)
        return value, m.end()


# --------------------------------------------------------------------------
# document reading


_OBJ_HEADER_RE = re.compile(rb"(\d+)\s+(\d+)\s+obj\b")
_STREAM_START_RE = re.compile(rb"stream(\r\n|\n|\r)")


@dataclass
class PdfPage:
    width_pt: float
    height_pt: float
    text: str
    placed_images: list  # list[(Image.Image, (x0, y0, x1, y1) in pt, bottom-left origin)]
    text_runs: list  # list[(x_pt, y_pt, size_pt, str)]


@dataclass
class PdfDocument:
    path: str
    pages: list[PdfPage]

    @property
    def page_count(self) -> int:
        return len(self.pages)


class _PdfFile:
    def __init__(self, data: bytes) -> None:
        if not data.lstrip()[:5].startswith(b"%PDF-"):
            raise UnreadableDocument("missing %PDF header")
        self.data = data
        self.parser = _Parser(data)
        self.objects: dict[int, object] = {}
        self._scan_objects()

    def _scan_objects(self) -> None:
        parser = self.parser
        data = self.data
        for m in _OBJ_HEADER_RE.finditer(data):
            num = int(m.group(1))
            try:
                value, end = parser.parse_value(m.end())
            except UnreadableDocument:
                continue
            if isinstance(value, dict):
                sm = _STREAM_START_RE.match(data, parser._skip_ws(end))
                if sm:
                    length = value.get("Length")
                    if isinstance(length, Ref):
                        length = self._scan_plain_int(length.num)
                    if not isinstance(length, int):
                        # last resort: nearest endstream
                        stop = data.find(b"endstream", sm.end())
                        length = max(0, stop - sm.end()) if stop >= 0 else 0
                    raw = data[sm.end(): sm.end() + length]
                    value = _Stream(meta=value, raw=raw)
            self.objects[num] = value  # later occurrences override (updates)

    def _scan_plain_int(self, num: int) -> int | None:
        for m in re.finditer(rf"(?m)^{num}\s+\d+\s+obj\b".encode(), self.data):
            value, _ = self.parser.parse_value(m.end())
            if isinstance(value, int):
                return value
        return None

    def resolve(self, value):
        seen = 0
        while isinstance(value, Ref):
            value = self.objects.get(value.num)
            seen += 1
            if seen > 32:
                raise UnreadableDocument("reference cycle")
        return value

    def catalog(self) -> dict:
        for m in re.finditer(rb"trailer", self.data):
            try:
                tdict, _ = self.parser.parse_value(m.end())
            except UnreadableDocument:
                continue
            if isinstance(tdict, dict) and "Root" in tdict:
                root = self.resolve(tdict["Root"])
                if isinstance(root, dict) and root.get("Type") == "Catalog":
                    return root
        for value in self.objects.values():
            if isinstance(value, dict) and value.get("Type") == "Catalog":
                return value
        raise UnreadableDocument("no document catalog found")

    def page_dicts(self) -> list[tuple[dict, dict]]:
        """Return (page dict, inherited attributes) leaves in document order."""
        catalog = self.catalog()
        root = self.resolve(catalog.get("Pages"))
        if not isinstance(root, dict):
            raise UnreadableDocument("catalog has no page tree")
        leaves: list[tuple[dict, dict]] = []

        def walk(node: dict, inherited: dict) -> None:
            merged = dict(inherited)
            for key in ("MediaBox", "Resources"):
                if key in node:
                    merged[key] = node[key]
            if node.get("Type") == "Page":
                leaves.append((node, merged))
                return
            for kid in self.resolve(node.get("Kids")) or []:
                kid_node = self.resolve(kid)
                if isinstance(kid_node, dict):
                    walk(kid_node, merged)

        walk(root, {})
        if not leaves:
            raise UnreadableDocument("document has no pages")
        return leaves

    def content_bytes(self, page: dict) -> bytes:
        contents = self.resolve(page.get("Contents"))
        if contents is None:
            return b""
        streams = contents if isinstance(contents, list) else [contents]
        out = []
        for s in streams:
            s = self.resolve(s)
            if isinstance(s, _Stream):
                out.append(s.data())
        return b"\n".join(out)

    def xobject_images(self, attrs: dict) -> dict[str, Image.Image]:
        resources = self.resolve(attrs.get("Resources")) or {}
        xobjects = self.resolve(resources.get("XObject")) or {}
        images: dict[str, Image.Image] = {}
        for name, ref in xobjects.items():
            obj = self.resolve(ref)
            if not isinstance(obj, _Stream) or obj.meta.get("Subtype") != "Image":
                continue
            img = _decode_image(obj)
            if img is not None:
                images[str(name)] = img
        return images


def _decode_image(stream: _Stream) -> Image.Image | None:
    meta = stream.meta
    filters = meta.get("Filter")
    if isinstance(filters, _Name):
        filters = [filters]
    filters = [str(f) for f in (filters or [])]
    try:
        data = stream.raw
        for f in filters:
            if f == "ASCII85Decode":
                body = re.sub(rb"\s", b"", data)
                if body.endswith(b"~>"):
                    body = body[:-2]
                data = base64.a85decode(body)
            elif f == "FlateDecode":
                data = zlib.decompress(data)
            elif f == "DCTDecode":
                return Image.open(io.BytesIO(data)).convert("RGB")
            else:
                return None
        width, height = int(meta["Width"]), int(meta["Height"])
        bpc = int(meta.get("BitsPerComponent", 8))
        if bpc != 8:
            return None
        cs = meta.get("ColorSpace")
        cs = str(cs) if isinstance(cs, _Name) else None
        if cs == "DeviceRGB" and len(data) >= width * height * 3:
            return Image.frombytes("RGB", (width, height), data[: width * height * 3])
        if cs == "DeviceGray" and len(data) >= width * height:
            return Image.frombytes("L", (width, height),
                                   data[: width * height]).convert("RGB")
    except Exception:
        return None
    return None


# --------------------------------------------------------------------------
# content-stream interpretation


def _decode_pdf_text(raw: bytes) -> str:
    if raw.startswith(b"\xfe\xff"):
        return raw[2:].decode("utf-16-be", errors="replace")
    return raw.decode("latin-1", errors="replace")


_KERN_SPACE_THRESHOLD = -180  # thousandths of text-space units


class _ContentState:
    """Tracks just enough state to extract text (with coarse positions) and
    image placements from a content stream."""

    def __init__(self) -> None:
        self.text_parts: list[str] = []
        self.text_runs: list[tuple[float, float, float, str]] = []
        self.images: list[tuple[str, tuple[float, float, float, float]]] = []
        self._ctm_stack: list[tuple[float, ...]] = []
        self._ctm = (1.0, 0.0, 0.0, 1.0, 0.0, 0.0)
        self._font_size = 12.0
        self._leading = 0.0
        self._tx = 0.0
        self._ty = 0.0
        self._line_open = False

    def _newline(self) -> None:
        if self.text_parts and not self.text_parts[-1].endswith("\n"):
            self.text_parts.append("\n")
        self._line_open = False

    def _space(self) -> None:
        if self._line_open and self.text_parts and not self.text_parts[-1][-1:].isspace():
            self.text_parts.append(" ")

    def _show(self, raw: bytes) -> None:
        text = _decode_pdf_text(raw)
        if text:
            self.text_runs.append((self._tx, self._ty, self._font_size, text))
            self.text_parts.append(text)
            self._line_open = True

    def run(self, content: bytes, parser_data_cls=_Parser) -> None:
        parser = parser_data_cls(content)
        pos = 0
        operands: list = []
        op_re = re.compile(rb"[A-Za-z'\"][A-Za-z0-9*'\"]*")
        n = len(content)
        while pos < n:
            pos = parser._skip_ws(pos)
            if pos >= n:
                break
            c = content[pos: pos + 1]
            if c in b"/([<" or c in b"+-." or c.isdigit():
                try:
                    value, pos = parser.parse_value(pos)
                except UnreadableDocument:
                    pos += 1
                    continue
                operands.append(value)
                continue
            m = op_re.match(content, pos)
            if not m:
                pos += 1
                continue
            op = m.group(0)
            pos = m.end()
            if op == b"BI":  # inline image: skip to EI
                end = content.find(b"EI", pos)
                pos = n if end < 0 else end + 2
                operands = []
                continue
            self._apply(op, operands)
            operands = []

    def _apply(self, op: bytes, operands: list) -> None:
        if op == b"q":
            self._ctm_stack.append(self._ctm)
        elif op == b"Q":
            if self._ctm_stack:
                self._ctm = self._ctm_stack.pop()
        elif op == b"cm" and len(operands) >= 6:
            self._ctm = _mat_mul(tuple(float(v) for v in operands[-6:]), self._ctm)
        elif op == b"BT":
            self._tx = self._ty = 0.0
        elif op == b"ET":
            self._newline()
        elif op == b"Tf" and len(operands) >= 2:
            self._font_size = float(operands[-1])
        elif op == b"TL" and operands:
            self._leading = float(operands[-1])
        elif op in (b"Td", b"TD") and len(operands) >= 2:
            tx, ty = float(operands[-2]), float(operands[-1])
            if op == b"TD":
                self._leading = -ty
            if ty != 0:
                self._newline()
            elif tx != 0:
                self._space()
            self._tx += tx
            self._ty += ty
        elif op == b"T*":
            self._newline()
            self._ty -= self._leading
        elif op == b"Tm" and len(operands) >= 6:
            new_ty = float(operands[-1])
            if self._line_open and abs(new_ty - self._ty) > 1e-6:
                self._newline()
            elif self._line_open:
                self._space()
            self._tx, self._ty = float(operands[-2]), new_ty
        elif op == b"Tj" and operands and isinstance(operands[-1], bytes):
            self._show(operands[-1])
        elif op == b"'" and operands and isinstance(operands[-1], bytes):
            self._newline()
            self._ty -= self._leading
            self._show(operands[-1])
        elif op == b'"' and operands and isinstance(operands[-1], bytes):
            self._newline()
            self._ty -= self._leading
            self._show(operands[-1])
        elif op == b"TJ" and operands and isinstance(operands[-1], list):
            for item in operands[-1]:
                if isinstance(item, bytes):
                    self._show(item)
                elif isinstance(item, (int, float)) and item < _KERN_SPACE_THRESHOLD:
                    self._space()
        elif op == b"Do" and operands and isinstance(operands[-1], _Name):
            self.images.append((str(operands[-1]), _unit_square_bbox(self._ctm)))


def _mat_mul(m: tuple[float, ...], n: tuple[float, ...]) -> tuple[float, ...]:
    a1, b1, c1, d1, e1, f1 = m
    a2, b2, c2, d2, e2, f2 = n
    return (a1 * a2 + b1 * c2, a1 * b2 + b1 * d2,
            c1 * a2 + d1 * c2, c1 * b2 + d1 * d2,
            e1 * a2 + f1 * c2 + e2, e1 * b2 + f1 * d2 + f2)


def _unit_square_bbox(ctm: tuple[float, ...]) -> tuple[float, float, float, float]:
    a, b, c, d, e, f = ctm
    xs = [e, a + e, c + e, a + c + e]
    ys = [f, b + f, d + f, b + d + f]
    return (min(xs), min(ys), max(xs), max(ys))


# --------------------------------------------------------------------------
# public reading API


def load_pdf(path: str | Path) -> PdfDocument:
    """Parse a PDF into pages with text, text runs, and placed images."""
    try:
        data = Path(path).read_bytes()
    except OSError as exc:
        raise UnreadableDocument(f"cannot read {path}: {exc}") from exc
    pdf = _PdfFile(data)
    pages = []
    for page_dict, attrs in pdf.page_dicts():
        box = pdf.resolve(attrs.get("MediaBox")) or [0, 0, 612, 792]
        width = float(pdf.resolve(box[2])) - float(pdf.resolve(box[0]))
        height = float(pdf.resolve(box[3])) - float(pdf.resolve(box[1]))
        state = _ContentState()
        state.run(pdf.content_bytes(page_dict))
        images = pdf.xobject_images(attrs)
        placed = [(images[name], bbox) for name, bbox in state.images
                  if name in images]
        pages.append(PdfPage(
            width_pt=width,
            height_pt=height,
            text="".join(state.text_parts).strip("\n"),
            placed_images=placed,
            text_runs=state.text_runs,
        ))
    return PdfDocument(path=str(path), pages=pages)


def render_page(page: PdfPage, dpi: int) -> Image.Image:
    """Rasterize: white canvas, embedded images composited at their placement,
    text painted best-effort with a default font (enough for layout detection
    and OCR of scanned pages; not a faithful glyph renderer)."""
    if dpi <= 0:
        raise RenderFailure("dpi must be > 0")
    scale = dpi / 72.0
    size = (max(1, round(page.width_pt * scale)), max(1, round(page.height_pt * scale)))
    try:
        canvas = Image.new("RGB", size, "white")
        for img, (x0, y0, x1, y1) in page.placed_images:
            w = max(1, round((x1 - x0) * scale))
            h = max(1, round((y1 - y0) * scale))
            px = round(x0 * scale)
            py = round((page.height_pt - y1) * scale)
            canvas.paste(img.resize((w, h)), (px, py))
        if page.text_runs:
            draw = ImageDraw.Draw(canvas)
            for x_pt, y_pt, size_pt, text in page.text_runs:
                px_size = max(6, round(size_pt * scale))
                try:
                    font = ImageFont.load_default(size=px_size)
                except TypeError:  # older Pillow
                    font = ImageFont.load_default()
                px = round(x_pt * scale)
                py = round((page.height_pt - y_pt) * scale) - px_size
                draw.text((px, py), text, fill="black", font=font)
        return canvas
    except RenderFailure:
        raise
    except Exception as exc:
        raise RenderFailure(f"cannot rasterize page: {exc}") from exc


# --------------------------------------------------------------------------
# writing (reportlab)


def _wrap_line(line: str, max_chars: int) -> list[str]:
    if len(line) <= max_chars:
        return [line]
    out = []
    while len(line) > max_chars:
        cut = line.rfind(" ", 0, max_chars)
        if cut <= 0:
            cut = max_chars
        out.append(line[:cut])
        line = line[cut:].lstrip(" ")
    out.append(line)
    return out


class PdfBuilder:
    """Sequential page-by-page PDF writer over reportlab."""

    PAGE_SIZE = (612.0, 792.0)  # US letter, points
    MARGIN = 54.0
    FONT = "Helvetica"
    FONT_SIZE = 10.0
    LEADING = 13.0

    def __init__(self, path: str | Path) -> None:
        from reportlab.pdfgen import canvas as rl_canvas

        self.path = str(path)
        self._canvas = rl_canvas.Canvas(self.path, pagesize=self.PAGE_SIZE)

    def add_text_page(self, text: str) -> None:
        w, h = self.PAGE_SIZE
        self._canvas.setPageSize((w, h))
        usable = w - 2 * self.MARGIN
        max_chars = max(8, int(usable / (self.FONT_SIZE * 0.6)))
        tobj = self._canvas.beginText(self.MARGIN, h - self.MARGIN)
        tobj.setFont(self.FONT, self.FONT_SIZE, self.LEADING)
        for raw_line in text.split("\n"):
            for line in _wrap_line(raw_line, max_chars):
                tobj.textLine(line)
        self._canvas.drawText(tobj)
        self._canvas.showPage()

    def _image_page_size(self, image: Image.Image, dpi: int) -> tuple[float, float]:
        return (image.width * 72.0 / dpi, image.height * 72.0 / dpi)

    def add_image_page(self, image: Image.Image, dpi: int = 72) -> None:
        from reportlab.lib.utils import ImageReader

        w, h = self._image_page_size(image, dpi)
        self._canvas.setPageSize((w, h))
        self._canvas.drawImage(ImageReader(image), 0, 0, width=w, height=h)
        self._canvas.showPage()

    def add_searchable_page(self, image: Image.Image,
                            words: list[tuple[str, tuple[int, int, int, int]]],
                            dpi: int = 72) -> None:
        """Page image plus an invisible text layer from (word, pixel-bbox)."""
        from reportlab.lib.utils import ImageReader

        w, h = self._image_page_size(image, dpi)
        s = 72.0 / dpi
        self._canvas.setPageSize((w, h))
        self._canvas.drawImage(ImageReader(image), 0, 0, width=w, height=h)
        tobj = self._canvas.beginText()
        tobj.setTextRenderMode(3)  # invisible: text layer only
        for word, (x0, y0, x1, y1) in words:
            size = max(4.0, (y1 - y0) * s)
            tobj.setFont(self.FONT, size)
            tobj.setTextOrigin(x0 * s, h - y1 * s)
            tobj.textOut(word)
        self._canvas.drawText(tobj)
        self._canvas.showPage()

    def save(self) -> str:
        self._canvas.save()
        return self.path


def write_text_pdf(path: str | Path, pages: list[str]) -> str:
    """One searchable page per entry (long content is wrapped, not paginated)."""
    builder = PdfBuilder(path)
    for page_text in pages:
        builder.add_text_page(page_text)
    return builder.save()


def write_scanned_pdf(path: str | Path, images: list[Image.Image], dpi: int = 72) -> str:
    """Image-only pages: no extractable text, like a raw scan."""
    builder = PdfBuilder(path)
    for img in images:
        builder.add_image_page(img, dpi=dpi)
    return builder.save()
