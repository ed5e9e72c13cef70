"""Structured-element description via chat and vision providers."""

from __future__ import annotations

import io
from dataclasses import dataclass
from importlib import resources

from ..providers import ChatClient, VisionClient, user_request
from .layout import LayoutElement


@dataclass(frozen=True)
class ElementDescription:
    element: LayoutElement
    description: str
    source_model: str
    html: str | None = None
    fallback: bool = False  # structure recovery failed; description is crop text

    def __post_init__(self) -> None:
        if not self.description:
            raise ValueError("description must be non-empty")
        if self.element.kind == "table" and not self.fallback and self.html is None:
            raise ValueError("table descriptions must carry their HTML")


def _prompt(name: str) -> str:
    return resources.files("sdrag.data.prompts").joinpath(name).read_text("utf-8").strip()


def describe_table(elem: LayoutElement, html: str, llm: ChatClient,
                   model_name: str = "") -> ElementDescription:
    """Summarize a table's HTML into row-wise sentences."""
    if elem.kind != "table":
        raise ValueError("element is not a table")
    if not html:
        raise ValueError("html must be non-empty")
    prompt = _prompt("table_describe.txt").replace("{context}", html)
    reply = llm.chat_complete(user_request(prompt))
    return ElementDescription(
        element=elem, description=reply, html=html,
        source_model=model_name or getattr(llm, "model_name", ""))


def describe_image(elem: LayoutElement, vlm: VisionClient,
                   model_name: str = "") -> ElementDescription:
    """Describe an image crop through the vision endpoint."""
    if elem.kind != "image":
        raise ValueError("element is not an image")
    buf = io.BytesIO()
    elem.crop.save(buf, format="PNG")
    reply = vlm.vision_describe(buf.getvalue(), _prompt("image_describe.txt"))
    return ElementDescription(
        element=elem, description=reply,
        source_model=model_name or getattr(vlm, "model_name", ""))
