"""Corpus assembly: directory layout, manifest, determinism."""

from __future__ import annotations

import json

from PIL import Image

from sdrag.ingest.corpus import assemble_corpus, load_corpus
from sdrag.ingest.describe import ElementDescription
from sdrag.ingest.document import load_document
from sdrag.ingest.layout import LayoutElement
from sdrag.pdfio import write_text_pdf


def description(kind: str, page: int, text: str, y0: int = 10,
                fallback: bool = False) -> ElementDescription:
    elem = LayoutElement(page_index=page, kind=kind, bbox=(5, y0, 105, y0 + 40),
                         crop=Image.new("RGB", (100, 40), "white"))
    return ElementDescription(
        element=elem, description=text, source_model="mock",
        html="<table><tr><td>x</td></tr></table>" if kind == "table" and not fallback
        else None,
        fallback=fallback)


def base_doc(tmp_path):
    path = tmp_path / "input.pdf"
    write_text_pdf(path, ["Base document text for the corpus."])
    return load_document(path)


class TestAssembleCorpus:
    def test_zero_descriptions(self, tmp_path):
        bundle = assemble_corpus(base_doc(tmp_path), [], tmp_path / "corpus")
        assert bundle.table_doc.read_text() == ""
        assert bundle.image_doc.read_text() == ""
        assert bundle.manifest == []
        assert bundle.base_doc.exists()

    def test_counts_and_sections(self, tmp_path):
        descs = [
            description("table", 0, "first table description"),
            description("table", 1, "second table description", y0=50),
            description("image", 1, "only image description"),
        ]
        bundle = assemble_corpus(base_doc(tmp_path), descs, tmp_path / "corpus")
        tables = bundle.table_doc.read_text()
        images = bundle.image_doc.read_text()
        assert tables.count("## Table") == 2
        assert images.count("## Image") == 1
        assert "first table description" in tables
        assert "only image description" in images
        assert len(bundle.manifest) == 3
        assert [m["doc"] for m in bundle.manifest] == ["tables", "tables", "images"]
        assert [m["section"] for m in bundle.manifest] == [1, 2, 1]

    def test_manifest_schema(self, tmp_path):
        descs = [description("table", 2, "desc text")]
        bundle = assemble_corpus(base_doc(tmp_path), descs, tmp_path / "corpus")
        entry = json.loads((tmp_path / "corpus" / "manifest.json").read_text())[0]
        assert entry == {"kind": "table", "page": 2, "bbox": [5, 10, 105, 50],
                         "doc": "tables", "section": 1}

    def test_fallback_flagged_in_manifest(self, tmp_path):
        descs = [description("table", 0, "plain text fallback", fallback=True)]
        bundle = assemble_corpus(base_doc(tmp_path), descs, tmp_path / "corpus")
        assert bundle.manifest[0]["fallback"] is True

    def test_reassembly_byte_identical(self, tmp_path):
        descs = [description("table", 0, "alpha"), description("image", 0, "beta")]
        assemble_corpus(base_doc(tmp_path), descs, tmp_path / "c1")
        assemble_corpus(base_doc(tmp_path), descs, tmp_path / "c2")
        for name in ("manifest.json", "tables.txt", "images.txt"):
            assert (tmp_path / "c1" / name).read_bytes() == \
                (tmp_path / "c2" / name).read_bytes()

    def test_information_conservation(self, tmp_path):
        descs = [description("table", i % 2, f"table {i}", y0=10 + 20 * i)
                 for i in range(4)]
        descs += [description("image", 0, f"image {i}", y0=200 + 20 * i)
                  for i in range(3)]
        bundle = assemble_corpus(base_doc(tmp_path), descs, tmp_path / "corpus")
        assert len(bundle.manifest) == len(descs)
        tables = bundle.table_doc.read_text()
        images = bundle.image_doc.read_text()
        for i in range(4):
            assert tables.count(f"table {i}") == 1
            assert f"table {i}" not in images
        for i in range(3):
            assert images.count(f"image {i}") == 1

    def test_errors_sidecar_marks_partial(self, tmp_path):
        bundle = assemble_corpus(base_doc(tmp_path), [], tmp_path / "corpus",
                                 errors=[{"kind": "table", "page": 0,
                                          "error": "provider failed"}])
        assert bundle.partial is True
        sidecar = json.loads((tmp_path / "corpus" / "ingest_errors.json").read_text())
        assert sidecar[0]["error"] == "provider failed"

    def test_load_corpus_roundtrip(self, tmp_path):
        descs = [description("table", 0, "roundtrip table text")]
        assemble_corpus(base_doc(tmp_path), descs, tmp_path / "corpus")
        base, tables, images, manifest = load_corpus(tmp_path / "corpus")
        assert "Base document text" in base.per_page_text[0]
        assert "roundtrip table text" in tables
        assert images == ""
        assert manifest[0]["kind"] == "table"
