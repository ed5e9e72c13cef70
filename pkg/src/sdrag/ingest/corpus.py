"""Corpus assembly: base document plus description documents in one directory.

Directory layout: ``base.pdf``, ``tables.txt``, ``images.txt``,
``manifest.json``. The manifest is a JSON array of
``{kind, page, bbox, doc, section}`` entries (``fallback: true`` is added on
entries whose table structure recovery fell back to plain text); ``section``
is the 1-based section number inside its description document.
"""

from __future__ import annotations

import json
import shutil
from dataclasses import dataclass, field
from pathlib import Path

from ..errors import WriteFailure
from .describe import ElementDescription
from .document import SourceDocument, load_document

BASE_NAME = "base.pdf"
TABLES_NAME = "tables.txt"
IMAGES_NAME = "images.txt"
MANIFEST_NAME = "manifest.json"
ERRORS_NAME = "ingest_errors.json"

_DOC_FOR_KIND = {"table": "tables", "image": "images"}


@dataclass
class CorpusBundle:
    directory: Path
    base_doc: Path
    table_doc: Path
    image_doc: Path
    manifest: list[dict] = field(default_factory=list)
    partial: bool = False


def _section_text(title: str, body: str) -> str:
    return f"## {title}\n\n{body}\n"


def assemble_corpus(base: SourceDocument, descriptions: list[ElementDescription],
                    out_dir: str | Path,
                    errors: list[dict] | None = None) -> CorpusBundle:
    """Write the three corpus documents plus the manifest.

    Description documents concatenate their elements' descriptions in element
    order, one titled section per element. Re-assembly from identical inputs
    is byte-identical.
    """
    out = Path(out_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
        base_path = out / BASE_NAME
        if Path(base.path).resolve() != base_path.resolve():
            shutil.copyfile(base.path, base_path)

        manifest: list[dict] = []
        sections = {"tables": [], "images": []}
        counters = {"tables": 0, "images": 0}
        for desc in descriptions:
            elem = desc.element
            doc = _DOC_FOR_KIND[elem.kind]
            counters[doc] += 1
            title = (f"{elem.kind.capitalize()} {counters[doc]} "
                     f"(page {elem.page_index + 1})")
            sections[doc].append(_section_text(title, desc.description))
            entry = {
                "kind": elem.kind,
                "page": elem.page_index,
                "bbox": list(elem.bbox),
                "doc": doc,
                "section": counters[doc],
            }
            if desc.fallback:
                entry["fallback"] = True
            manifest.append(entry)

        table_path = out / TABLES_NAME
        image_path = out / IMAGES_NAME
        table_path.write_text("\n".join(sections["tables"]), encoding="utf-8")
        image_path.write_text("\n".join(sections["images"]), encoding="utf-8")
        manifest_path = out / MANIFEST_NAME
        manifest_path.write_text(
            json.dumps(manifest, ensure_ascii=False, indent=2, sort_keys=True) + "\n",
            encoding="utf-8")
        if errors:
            (out / ERRORS_NAME).write_text(
                json.dumps(errors, ensure_ascii=False, indent=2, sort_keys=True) + "\n",
                encoding="utf-8")
    except OSError as exc:
        raise WriteFailure(f"cannot write corpus to {out}: {exc}") from exc
    return CorpusBundle(
        directory=out,
        base_doc=base_path,
        table_doc=table_path,
        image_doc=image_path,
        manifest=manifest,
        partial=bool(errors),
    )


def load_corpus(directory: str | Path) -> tuple[SourceDocument, str, str, list[dict]]:
    """Read a corpus directory back: base document, description texts, manifest."""
    d = Path(directory)
    base = load_document(d / BASE_NAME)
    tables = (d / TABLES_NAME).read_text(encoding="utf-8")
    images = (d / IMAGES_NAME).read_text(encoding="utf-8")
    manifest = json.loads((d / MANIFEST_NAME).read_text(encoding="utf-8"))
    return base, tables, images, manifest
