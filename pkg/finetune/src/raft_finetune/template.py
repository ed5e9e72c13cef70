"""Chat-template rendering: role markers plus eos token per message.

This is the harness's own implementation of the shared template grammar;
its byte output must match the dataset producer's rendering exactly
(covered by the cross-component fixture test).
"""

from __future__ import annotations

import re

DEFAULT_EOS_TOKEN = "</s>"

ROLES = ("system", "user", "assistant")

ROLE_MARKERS = {role: f"<|{role}|>" for role in ROLES}


def render_messages(messages: list[tuple[str, str]],
                    eos_token: str = DEFAULT_EOS_TOKEN,
                    add_generation_prompt: bool = False) -> str:
    """``<|role|>\\n{content}{eos}\\n`` per message; optional trailing
    ``<|assistant|>`` when prompting for a completion."""
    parts = []
    for role, content in messages:
        if role not in ROLES:
            raise ValueError(f"unknown role {role!r}")
        parts.append(f"{ROLE_MARKERS[role]}\n{content}{eos_token}\n")
    if add_generation_prompt:
        parts.append(ROLE_MARKERS["assistant"])
    return "".join(parts)


_MARKER_RE = re.compile(r"<\|(system|user|assistant)\|>\n")


def parse_rendered(text: str, eos_token: str = DEFAULT_EOS_TOKEN) -> list[tuple[str, str]]:
    """Inverse of :func:`render_messages` (without a generation prompt)."""
    marks = list(_MARKER_RE.finditer(text))
    if not marks or marks[0].start() != 0:
        raise ValueError("text does not start with a role marker")
    out = []
    for i, m in enumerate(marks):
        end = marks[i + 1].start() if i + 1 < len(marks) else len(text)
        body = text[m.end(): end]
        if not body.endswith(eos_token + "\n"):
            raise ValueError(f"message {i} missing eos terminator")
        out.append((m.group(1), body[: -len(eos_token) - 1]))
    return out
